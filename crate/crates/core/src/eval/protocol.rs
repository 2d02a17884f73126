//! FID on middle frames, FVD on 16-frame clips, and the full evaluation run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::frechet::{distance_between, Distance};
use super::metrics::{argmax, auroc_macro_ovr, top1_accuracy};
use super::nets::{clip_input, train_net, train_phase_classifier, NetKind, NetTraining, PhaseNet, CLIP_FRAMES};
use crate::data::{DatasetManifest, Profile};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::text::SurgicalPhase;
use crate::train::{ClipSet, Pipeline, DEFAULT_SAMPLE_STEPS};
use crate::video::VideoTensor;

/// Maps single `[H, W, 3]` frames to feature vectors.
pub trait FrameEmbedder {
    fn embed_frames(&self, frames: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>>;
}

/// Maps `[16, H, W, 3]` clips to feature vectors.
pub trait ClipEmbedder {
    fn embed_clips(&self, clips: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>>;
}

impl FrameEmbedder for PhaseNet {
    fn embed_frames(&self, frames: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
        if self.kind() != NetKind::Frame {
            return Err(Error::InvalidConfig("frame features need the frame network".into()));
        }
        let clips = frames
            .iter()
            .map(|f| f.clone().reshape(&[1, f.shape()[0], f.shape()[1], f.shape()[2]]).and_then(VideoTensor::new))
            .collect::<Result<Vec<_>>>()?;
        self.features(&clips.iter().collect::<Vec<_>>())
    }
}

impl ClipEmbedder for PhaseNet {
    fn embed_clips(&self, clips: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
        if self.kind() != NetKind::Clip {
            return Err(Error::InvalidConfig("clip features need the clip network".into()));
        }
        let clips = clips.iter().cloned().map(VideoTensor::new).collect::<Result<Vec<_>>>()?;
        self.features(&clips.iter().collect::<Vec<_>>())
    }
}

fn check_lengths(real: &[&VideoTensor], generated: &[&VideoTensor]) -> Result<usize> {
    let len = real.first().or(generated.first()).map_or(0, |c| c.frames());
    if let Some(c) = real.iter().chain(generated).find(|c| c.frames() != len) {
        return Err(Error::shape(format!("clips of {len} and {} frames", c.frames())));
    }
    Ok(len)
}

/// Fréchet distance between embeddings of frame `floor(L / 2)` of every clip.
pub fn compute_fid(real: &[&VideoTensor], generated: &[&VideoTensor], extractor: &impl FrameEmbedder) -> Result<Distance> {
    let len = check_lengths(real, generated)?;
    let middle = |clips: &[&VideoTensor]| -> Result<Vec<Tensor<f32>>> { clips.iter().map(|c| c.frame(len / 2)).collect() };
    let a = extractor.embed_frames(&middle(real)?)?;
    let b = extractor.embed_frames(&middle(generated)?)?;
    distance_between(&a, &b)
}

/// Fréchet distance between embeddings of the first 16 frames of every clip.
pub fn compute_fvd(real: &[&VideoTensor], generated: &[&VideoTensor], extractor: &impl ClipEmbedder) -> Result<Distance> {
    let head = |clips: &[&VideoTensor]| -> Result<Vec<Tensor<f32>>> { clips.iter().map(|c| clip_input(c)).collect() };
    let a = extractor.embed_clips(&head(real)?)?;
    let b = extractor.embed_clips(&head(generated)?)?;
    distance_between(&a, &b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalProtocol {
    pub profile: Profile,
    /// Generated clips per phase.
    pub per_phase: usize,
    pub sample_steps: usize,
    pub guidance: f64,
    pub seed: u64,
    /// Clips generated per batch.
    pub sample_batch: usize,
    pub classifier: NetTraining,
    pub frame_extractor: NetTraining,
}

impl EvalProtocol {
    pub fn for_profile(profile: Profile) -> Self {
        EvalProtocol {
            profile,
            per_phase: match profile {
                Profile::Toy => 100,
                Profile::Full => 512,
            },
            sample_steps: DEFAULT_SAMPLE_STEPS,
            guidance: 1.0,
            seed: 0,
            sample_batch: 16,
            classifier: NetTraining::default(),
            frame_extractor: NetTraining::default(),
        }
    }
}

/// Metrics of one generator against the shared real set and extractors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetrics {
    pub fid: f64,
    pub fvd: f64,
    pub top1: f64,
    pub auroc: f64,
    pub per_phase_fid: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorHashes {
    pub frame: String,
    pub video: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub profile: Profile,
    pub fid: f64,
    pub fvd: f64,
    pub top1: f64,
    pub auroc: f64,
    pub n_generated: usize,
    pub n_real: usize,
    pub per_phase_generated: BTreeMap<String, usize>,
    pub per_phase_real: BTreeMap<String, usize>,
    pub config_fingerprint: String,
    pub extractors: ExtractorHashes,
    pub classifier_holdout_top1: f64,
    pub frame_extractor_holdout_top1: f64,
    pub real_top1: f64,
    pub real_auroc: f64,
    pub per_phase_fid: BTreeMap<String, f64>,
    /// The same protocol applied to an untrained denoiser.
    pub baseline: Option<GeneratorMetrics>,
    pub protocol: EvalProtocol,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn metrics_finite(&self) -> bool {
        [self.fid, self.fvd, self.top1, self.auroc].iter().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Clips, labels and identities going into an evaluation run.
pub struct EvalData<'a> {
    /// Eval-split clips the classifier and frame extractor are trained on.
    pub classifier_manifest: &'a DatasetManifest,
    pub classifier_clips: &'a ClipSet,
    /// Video ids used to train the diffusion model.
    pub train_videos: &'a BTreeSet<String>,
    /// Held-out real clips the generated pool is compared with.
    pub real: &'a ClipSet,
    pub config_fingerprint: String,
}

fn phase_counts(phases: &[SurgicalPhase]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for p in phases {
        *m.entry(p.slug()).or_insert(0) += 1;
    }
    m
}

/// `(phase, seed)` for every generated clip, phases interleaved.
pub fn generation_plan(per_phase: usize, seed: u64) -> Vec<(SurgicalPhase, u64)> {
    (0..per_phase * SurgicalPhase::ALL.len())
        .map(|i| (SurgicalPhase::ALL[i % SurgicalPhase::ALL.len()], seed.wrapping_add(i as u64)))
        .collect()
}

/// Generates the evaluation pool of one pipeline.
pub fn generate_pool(pipeline: &Pipeline, proto: &EvalProtocol) -> Result<Vec<VideoTensor>> {
    let plan = generation_plan(proto.per_phase, proto.seed);
    let mut out = Vec::with_capacity(plan.len());
    for chunk in plan.chunks(proto.sample_batch.max(1)) {
        out.extend(pipeline.sample_batch(chunk, proto.sample_steps, proto.guidance)?);
    }
    Ok(out)
}

struct Extractors {
    frame: PhaseNet,
    clip: PhaseNet,
}

fn score(
    nets: &Extractors,
    real: &ClipSet,
    generated: &[VideoTensor],
    phases: &[SurgicalPhase],
    warnings: &mut Vec<String>,
) -> Result<GeneratorMetrics> {
    let real_refs: Vec<&VideoTensor> = real.clips.iter().collect();
    let gen_refs: Vec<&VideoTensor> = generated.iter().collect();
    let fid = compute_fid(&real_refs, &gen_refs, &nets.frame)?;
    let fvd = compute_fvd(&real_refs, &gen_refs, &nets.clip)?;
    warnings.extend(fid.warning.iter().chain(&fvd.warning).cloned());
    let probs = nets.clip.probabilities(&gen_refs)?;
    let labels: Vec<usize> = phases.iter().map(|p| p.code()).collect();
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let mut per_phase_fid = BTreeMap::new();
    for phase in SurgicalPhase::ALL {
        let r: Vec<&VideoTensor> = real_refs.iter().zip(&real.phases).filter(|(_, &p)| p == phase).map(|(c, _)| *c).collect();
        let g: Vec<&VideoTensor> = gen_refs.iter().zip(phases).filter(|(_, &p)| p == phase).map(|(c, _)| *c).collect();
        if r.len() >= 2 && g.len() >= 2 {
            per_phase_fid.insert(phase.slug(), compute_fid(&r, &g, &nets.frame)?.value);
        }
    }
    Ok(GeneratorMetrics {
        fid: fid.value,
        fvd: fvd.value,
        top1: top1_accuracy(&preds, &labels)?,
        auroc: auroc_macro_ovr(&probs, &labels)?,
        per_phase_fid,
    })
}

/// Runs the whole protocol: trains and freezes both extractors on eval-split
/// data, generates the pools and scores them against the real set.
pub fn run_evaluation(
    proto: &EvalProtocol,
    pipeline: &Pipeline,
    baseline: Option<&Pipeline>,
    data: &EvalData<'_>,
) -> Result<EvalReport> {
    let cls_clips: Vec<&VideoTensor> = data.classifier_clips.clips.iter().collect();
    let cls = train_phase_classifier(data.classifier_manifest, &cls_clips, data.train_videos, &proto.classifier)?;
    let labels: Vec<usize> = data.classifier_clips.phases.iter().map(|p| p.code()).collect();
    let frame = train_net(NetKind::Frame, &cls_clips, &labels, &proto.frame_extractor)?;
    let nets = Extractors {
        frame: frame.net,
        clip: cls.net,
    };
    if data.real.shape()[0] < CLIP_FRAMES {
        return Err(Error::shape(format!("real clips need at least {CLIP_FRAMES} frames")));
    }

    let mut warnings = Vec::new();
    let real_refs: Vec<&VideoTensor> = data.real.clips.iter().collect();
    let real_labels: Vec<usize> = data.real.phases.iter().map(|p| p.code()).collect();
    let real_probs = nets.clip.probabilities(&real_refs)?;
    let real_preds: Vec<usize> = real_probs.iter().map(|p| argmax(p)).collect();

    let phases: Vec<SurgicalPhase> = generation_plan(proto.per_phase, proto.seed).into_iter().map(|(p, _)| p).collect();
    let generated = generate_pool(pipeline, proto)?;
    let main = score(&nets, data.real, &generated, &phases, &mut warnings)?;
    let baseline = match baseline {
        Some(b) => Some(score(&nets, data.real, &generate_pool(b, proto)?, &phases, &mut warnings)?),
        None => None,
    };
    warnings.sort();
    warnings.dedup();

    Ok(EvalReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        profile: proto.profile,
        fid: main.fid,
        fvd: main.fvd,
        top1: main.top1,
        auroc: main.auroc,
        n_generated: generated.len(),
        n_real: data.real.len(),
        per_phase_generated: phase_counts(&phases),
        per_phase_real: phase_counts(&data.real.phases),
        config_fingerprint: data.config_fingerprint.clone(),
        extractors: ExtractorHashes {
            frame: nets.frame.fingerprint(),
            video: nets.clip.fingerprint(),
        },
        classifier_holdout_top1: cls.holdout_top1,
        frame_extractor_holdout_top1: frame.holdout_top1,
        real_top1: top1_accuracy(&real_preds, &real_labels)?,
        real_auroc: auroc_macro_ovr(&real_probs, &real_labels)?,
        per_phase_fid: main.per_phase_fid,
        baseline,
        protocol: proto.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_manifest, Split, SyntheticCorpus};

    /// Per-frame mean intensity: order-sensitive, cheap.
    struct FrameMeans;

    impl ClipEmbedder for FrameMeans {
        fn embed_clips(&self, clips: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
            Ok(clips
                .iter()
                .map(|c| {
                    let per = c.numel() / c.shape()[0];
                    c.data().chunks(per).map(|f| f.iter().map(|&v| v as f64).sum::<f64>() / per as f64).collect()
                })
                .collect())
        }
    }

    struct ChannelMeans;

    impl FrameEmbedder for ChannelMeans {
        fn embed_frames(&self, frames: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
            Ok(frames
                .iter()
                .map(|f| {
                    let n = (f.numel() / 3) as f64;
                    (0..3).map(|c| f.data().iter().skip(c).step_by(3).map(|&v| v as f64).sum::<f64>() / n).collect()
                })
                .collect())
        }
    }

    fn clips(n: usize, frames: usize) -> Vec<VideoTensor> {
        let corpus = SyntheticCorpus {
            split: Split::Eval,
            videos: 4,
            segment_frames: 41,
            height: 16,
            width: 16,
            seed: 2,
        };
        let m = build_manifest(&corpus.segments(), n, frames, 1, 3).unwrap();
        m.records.iter().map(|r| corpus.clip(r).unwrap()).collect()
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let c = clips(6, 17);
        let r: Vec<&VideoTensor> = c.iter().collect();
        assert!(compute_fid(&r, &r, &ChannelMeans).unwrap().value.abs() < 1e-5);
        assert!(compute_fvd(&r, &r, &FrameMeans).unwrap().value.abs() < 1e-5);
    }

    #[test]
    fn fid_ignores_clip_order() {
        let c = clips(6, 17);
        let a: Vec<&VideoTensor> = c.iter().collect();
        let b: Vec<&VideoTensor> = c.iter().rev().collect();
        let half: Vec<&VideoTensor> = c.iter().step_by(2).collect();
        let x = compute_fid(&a, &half, &ChannelMeans).unwrap().value;
        let y = compute_fid(&b, &half, &ChannelMeans).unwrap().value;
        assert!((x - y).abs() < 1e-9 * (1.0 + x));
    }

    #[test]
    fn shuffled_frames_raise_fvd() {
        let c = clips(6, 17);
        let orig: Vec<&VideoTensor> = c.iter().collect();
        let order: Vec<usize> = (0..17).map(|i| (i * 7) % 17).collect();
        let shuffled: Vec<VideoTensor> = c.iter().map(|v| v.reorder(&order).unwrap()).collect();
        let sh: Vec<&VideoTensor> = shuffled.iter().collect();
        let base = compute_fvd(&orig, &orig, &FrameMeans).unwrap().value;
        assert!(compute_fvd(&orig, &sh, &FrameMeans).unwrap().value > base);
    }

    #[test]
    fn short_clips_are_rejected_by_fvd() {
        let c = clips(2, 9);
        let r: Vec<&VideoTensor> = c.iter().collect();
        assert!(matches!(compute_fvd(&r, &r, &FrameMeans), Err(Error::Shape(_))));
    }

    #[test]
    fn plan_is_balanced_and_seeded() {
        let plan = generation_plan(3, 10);
        assert_eq!(plan.len(), 12);
        assert_eq!(plan[0], (SurgicalPhase::ALL[0], 10));
        assert_eq!(plan[5], (SurgicalPhase::ALL[1], 15));
        let phases: Vec<SurgicalPhase> = plan.iter().map(|p| p.0).collect();
        assert!(phase_counts(&phases).values().all(|&n| n == 3));
    }
}
