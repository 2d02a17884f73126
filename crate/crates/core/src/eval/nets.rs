//! Small residual CNNs used for phase classification and as fixed feature
//! extractors: a 3D network over 16-frame clips and a 2D network over frames.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{argmax, top1_accuracy};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::nn::layers::{init_linear, init_norm, init_res_block, linear, norm, res_block};
use crate::nn::{softmax, Graph, Scalar, Tensor, Var};
use crate::params::{Bound, Component, ParameterStore};
use crate::text::SurgicalPhase;
use crate::train::{optimizer_step, TrainConfig};
use crate::video::VideoTensor;

/// Frames seen by the clip network (and by the video distance).
pub const CLIP_FRAMES: usize = 16;
pub const NUM_CLASSES: usize = 4;
const BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// `[16, H, W, 3]` clips, spatio-temporal kernels.
    Clip,
    /// Single `[H, W, 3]` frames, spatial kernels.
    Frame,
}

impl NetKind {
    fn component(self) -> Component {
        match self {
            NetKind::Clip => Component::Classifier,
            NetKind::Frame => Component::FrameExtractor,
        }
    }

    fn stem(self) -> [usize; 3] {
        match self {
            NetKind::Clip => [2, 4, 4],
            NetKind::Frame => [1, 4, 4],
        }
    }

    fn down(self) -> [usize; 3] {
        match self {
            NetKind::Clip => [2, 2, 2],
            NetKind::Frame => [1, 2, 2],
        }
    }

    fn kernel(self) -> [usize; 3] {
        match self {
            NetKind::Clip => [3, 3, 3],
            NetKind::Frame => [1, 3, 3],
        }
    }

    /// Width of the penultimate (feature) layer.
    pub fn feature_dim(self) -> usize {
        self.widths()[1]
    }

    fn widths(self) -> [usize; 2] {
        match self {
            NetKind::Clip => [32, 64],
            NetKind::Frame => [16, 32],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetTraining {
    pub epochs: usize,
    pub lr: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for NetTraining {
    fn default() -> Self {
        NetTraining {
            epochs: 15,
            lr: 1e-3,
            holdout: 0.2,
            seed: 0,
        }
    }
}

pub fn init_net(kind: NetKind, seed: u64) -> ParameterStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParameterStore::new(kind.component());
    let [w0, w1] = kind.widths();
    let stem_in = 3 * kind.stem().iter().product::<usize>();
    init_linear(&mut s, "stem", stem_in, w0, 1.0, &mut rng);
    init_res_block(&mut s, "s0", kind.kernel(), w0, &mut rng);
    init_linear(&mut s, "down", w0 * kind.down().iter().product::<usize>(), w1, 1.0, &mut rng);
    init_res_block(&mut s, "s1", kind.kernel(), w1, &mut rng);
    init_norm(&mut s, "norm", w1);
    init_linear(&mut s, "head", w1, NUM_CLASSES, 1.0, &mut rng);
    s.set_meta(serde_json::json!({ "kind": kind }));
    s
}

fn net_kind<S: Scalar>(store: &ParameterStore<S>) -> Result<NetKind> {
    serde_json::from_value(store.meta()["kind"].clone())
        .map_err(|e| Error::Checkpoint(format!("network checkpoint lacks a valid kind: {e}")))
}

/// `x: [B, T, H, W, 3]` -> `(features [B, F], logits [B, 4])`.
fn net_graph<'g, S: Scalar>(p: &Bound<'g, S>, kind: NetKind, x: Var<'g, S>) -> Result<(Var<'g, S>, Var<'g, S>)> {
    let mut h = linear(p, "stem", x.space_to_depth(kind.stem())?)?;
    h = res_block(p, "s0", h, kind.kernel())?;
    h = linear(p, "down", h.space_to_depth(kind.down())?)?;
    h = res_block(p, "s1", h, kind.kernel())?;
    let features = norm(p, "norm", h)?.silu().mean_middle()?;
    let logits = linear(p, "head", features)?;
    Ok((features, logits))
}

/// A trained network together with its frozen identity.
#[derive(Clone, Debug)]
pub struct PhaseNet {
    pub params: ParameterStore,
    kind: NetKind,
}

impl PhaseNet {
    pub fn new(params: ParameterStore) -> Result<Self> {
        let kind = net_kind(&params)?;
        if params.component() != kind.component() {
            return Err(Error::ComponentTag {
                expected: kind.component().to_string(),
                found: params.component().to_string(),
            });
        }
        Ok(PhaseNet { params, kind })
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn fingerprint(&self) -> String {
        self.params.fingerprint()
    }

    fn run(&self, inputs: &[Tensor<f32>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (mut feats, mut probs) = (Vec::with_capacity(inputs.len()), Vec::with_capacity(inputs.len()));
        for chunk in inputs.chunks(BATCH) {
            let g = Graph::new();
            let p = self.params.bind(&g, false);
            let x = g.constant(Tensor::stack(&chunk.iter().collect::<Vec<_>>())?);
            let (f, l) = net_graph(&p, self.kind, x)?;
            let f = f.to_tensor().cast::<f64>();
            let pr = softmax(&l.to_tensor().cast::<f64>());
            let (fd, k) = (f.shape()[1], NUM_CLASSES);
            for i in 0..chunk.len() {
                feats.push(f.data()[i * fd..(i + 1) * fd].to_vec());
                probs.push(pr.data()[i * k..(i + 1) * k].to_vec());
            }
        }
        Ok((feats, probs))
    }

    fn inputs(&self, clips: &[&VideoTensor]) -> Result<Vec<Tensor<f32>>> {
        clips.iter().map(|c| self.input(c)).collect()
    }

    fn input(&self, clip: &VideoTensor) -> Result<Tensor<f32>> {
        match self.kind {
            NetKind::Clip => clip_input(clip),
            NetKind::Frame => {
                let f = clip.frame(clip.frames() / 2)?;
                let s = f.shape().to_vec();
                f.reshape(&[1, s[0], s[1], s[2]])
            }
        }
    }

    /// Penultimate-layer embeddings: whole-clip features for the clip
    /// network, middle-frame features for the frame network.
    pub fn features(&self, clips: &[&VideoTensor]) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(&self.inputs(clips)?)?.0)
    }

    /// Softmax class probabilities.
    pub fn probabilities(&self, clips: &[&VideoTensor]) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(&self.inputs(clips)?)?.1)
    }

    pub fn predict(&self, clips: &[&VideoTensor]) -> Result<Vec<usize>> {
        Ok(self.probabilities(clips)?.iter().map(|p| argmax(p)).collect())
    }
}

/// The first 16 frames of a clip, as the clip network expects them.
pub fn clip_input(clip: &VideoTensor) -> Result<Tensor<f32>> {
    if clip.frames() < CLIP_FRAMES {
        return Err(Error::shape(format!(
            "clip of {} frames is shorter than the {CLIP_FRAMES} the evaluation needs",
            clip.frames()
        )));
    }
    Ok(clip.truncate(CLIP_FRAMES)?.into_tensor())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub holdout_top1: f64,
}

#[derive(Clone, Debug)]
pub struct NetRun {
    pub net: PhaseNet,
    pub holdout_top1: f64,
    pub log: Vec<EpochRecord>,
}

/// Deterministic per-phase split: the last `holdout` fraction of each
/// phase's (shuffled) examples is held out.
fn stratified_split(labels: &[usize], holdout: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for c in 0..NUM_CLASSES {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        let n_held = ((idx.len() as f64) * holdout).round() as usize;
        let cut = idx.len() - n_held.min(idx.len().saturating_sub(1));
        held.extend_from_slice(&idx[cut..]);
        train.extend_from_slice(&idx[..cut]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Trains a network of `kind` on labelled clips with cross-entropy.
pub fn train_net(kind: NetKind, clips: &[&VideoTensor], labels: &[usize], cfg: &NetTraining) -> Result<NetRun> {
    if clips.len() != labels.len() || clips.is_empty() {
        return Err(Error::InvalidConfig(format!("{} clips for {} labels", clips.len(), labels.len())));
    }
    if !(0.0..1.0).contains(&cfg.holdout) || cfg.epochs == 0 {
        return Err(Error::InvalidConfig(format!(
            "holdout {} must lie in [0, 1) and epochs must be positive",
            cfg.holdout
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = PhaseNet::new(init_net(kind, cfg.seed))?;
    let inputs = net.inputs(clips)?;
    let (train, held) = stratified_split(labels, cfg.holdout, &mut rng);
    let opt = TrainConfig {
        lr: cfg.lr,
        ..TrainConfig::toy()
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order = train.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(BATCH) {
            let g = Graph::new();
            let p = net.params.bind(&g, true);
            let x = g.constant(Tensor::stack(&batch.iter().map(|&i| &inputs[i]).collect::<Vec<_>>())?);
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, logits) = net_graph(&p, kind, x)?;
            let loss = logits.cross_entropy(&ys)?;
            total += loss.to_tensor().item() as f64 * batch.len() as f64;
            let grads = p.gradients(&g.backward(loss));
            optimizer_step(&mut net.params, &grads, &opt)?;
        }
        let holdout_top1 = held_accuracy(&net, &inputs, labels, &held)?;
        log.push(EpochRecord {
            epoch,
            loss: total / order.len().max(1) as f64,
            holdout_top1,
        });
    }
    net.params.freeze();
    let holdout_top1 = log.last().map_or(f64::NAN, |r| r.holdout_top1);
    Ok(NetRun { net, holdout_top1, log })
}

fn held_accuracy(net: &PhaseNet, inputs: &[Tensor<f32>], labels: &[usize], held: &[usize]) -> Result<f64> {
    if held.is_empty() {
        return Ok(f64::NAN);
    }
    let x: Vec<Tensor<f32>> = held.iter().map(|&i| inputs[i].clone()).collect();
    let preds: Vec<usize> = net.run(&x)?.1.iter().map(|p| argmax(p)).collect();
    top1_accuracy(&preds, &held.iter().map(|&i| labels[i]).collect::<Vec<_>>())
}

/// Checks that a classifier manifest is eval-split, phase-balanced and
/// shares no video with the diffusion training split.
pub fn check_classifier_protocol(manifest: &DatasetManifest, train_videos: &BTreeSet<String>) -> Result<()> {
    if manifest.split != Split::Eval {
        return Err(Error::Protocol(format!(
            "classifier data must come from the eval split, got {}",
            manifest.split.as_str()
        )));
    }
    if let Some(r) = manifest.records.iter().find(|r| train_videos.contains(&r.video_id)) {
        return Err(Error::Protocol(format!(
            "video {} belongs to the diffusion training split",
            r.video_id
        )));
    }
    let counts = manifest.per_phase_counts();
    if !manifest.is_balanced() || SurgicalPhase::ALL.iter().any(|p| counts.get(p).copied().unwrap_or(0) == 0) {
        return Err(Error::Protocol(format!("classifier manifest is not phase-balanced: {counts:?}")));
    }
    Ok(())
}

/// Trains the clip classifier under the evaluation protocol.
pub fn train_phase_classifier(
    manifest: &DatasetManifest,
    clips: &[&VideoTensor],
    train_videos: &BTreeSet<String>,
    cfg: &NetTraining,
) -> Result<NetRun> {
    check_classifier_protocol(manifest, train_videos)?;
    if clips.len() != manifest.records.len() {
        return Err(Error::InvalidConfig(format!(
            "{} clips for {} manifest records",
            clips.len(),
            manifest.records.len()
        )));
    }
    let labels: Vec<usize> = manifest.records.iter().map(|r| r.phase.code()).collect();
    train_net(NetKind::Clip, clips, &labels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_manifest, SyntheticCorpus};

    fn eval_data(per_phase: usize) -> (DatasetManifest, Vec<VideoTensor>) {
        let corpus = SyntheticCorpus {
            split: Split::Eval,
            videos: 2,
            segment_frames: 33,
            height: 16,
            width: 16,
            seed: 4,
        };
        let mut m = build_manifest(&corpus.segments(), per_phase, 17, 1, 0).unwrap();
        m.split = Split::Eval;
        let clips = m.records.iter().map(|r| corpus.clip(r).unwrap()).collect();
        (m, clips)
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (_, clips) = eval_data(1);
        let net = PhaseNet::new(init_net(NetKind::Clip, 0)).unwrap();
        let refs: Vec<&VideoTensor> = clips.iter().collect();
        for p in net.probabilities(&refs).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(net.features(&refs).unwrap()[0].len(), NetKind::Clip.feature_dim());
        let frames = PhaseNet::new(init_net(NetKind::Frame, 0)).unwrap();
        assert_eq!(frames.features(&refs).unwrap()[0].len(), NetKind::Frame.feature_dim());
    }

    #[test]
    fn protocol_violations() {
        let (m, _) = eval_data(2);
        assert!(check_classifier_protocol(&m, &BTreeSet::new()).is_ok());
        let train: BTreeSet<String> = [m.records[0].video_id.clone()].into();
        assert!(matches!(check_classifier_protocol(&m, &train), Err(Error::Protocol(_))));
        let mut wrong_split = m.clone();
        wrong_split.split = Split::Train;
        assert!(matches!(check_classifier_protocol(&wrong_split, &BTreeSet::new()), Err(Error::Protocol(_))));
        let mut single = m.clone();
        let phase = single.records[0].phase;
        single.records.retain(|r| r.phase == phase);
        assert!(matches!(check_classifier_protocol(&single, &BTreeSet::new()), Err(Error::Protocol(_))));
    }

    #[test]
    fn training_is_deterministic_and_freezes() {
        let (m, clips) = eval_data(3);
        let refs: Vec<&VideoTensor> = clips.iter().collect();
        let cfg = NetTraining {
            epochs: 2,
            ..NetTraining::default()
        };
        let a = train_phase_classifier(&m, &refs, &BTreeSet::new(), &cfg).unwrap();
        let b = train_phase_classifier(&m, &refs, &BTreeSet::new(), &cfg).unwrap();
        assert_eq!(a.net.fingerprint(), b.net.fingerprint());
        assert_eq!(a.log.len(), 2);
        assert!(a.net.params.is_frozen());
        assert!(a.log.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn stratified_split_holds_out_each_phase() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let (train, held) = stratified_split(&labels, 0.2, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((train.len(), held.len()), (32, 8));
        for c in 0..4 {
            assert_eq!(held.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
    }
}
