//! VAE and denoiser optimization loops.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{optimizer_step, TrainConfig};
use crate::data::{load_clip, DatasetManifest};
use crate::denoiser::{denoiser_config, denoiser_graph};
use crate::diffusion::{forward_diffuse, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::{Graph, Scalar, Tensor};
use crate::params::{Component, ParameterStore};
use crate::text::{PromptCondition, SurgicalPhase, TokenizerTable};
use crate::vae::{encode_batch, fit_latent_stats, latent_shape, standardize, vae_config, vae_loss_graph};
use crate::video::{LatentVideo, VideoTensor};

/// Clips with their phase labels, all of one shape.
#[derive(Clone, Debug)]
pub struct ClipSet {
    pub clips: Vec<VideoTensor>,
    pub phases: Vec<SurgicalPhase>,
}

impl ClipSet {
    pub fn new(clips: Vec<VideoTensor>, phases: Vec<SurgicalPhase>) -> Result<Self> {
        if clips.is_empty() || clips.len() != phases.len() {
            return Err(Error::InvalidConfig(format!(
                "clip set needs matching non-empty clips and labels, got {} and {}",
                clips.len(),
                phases.len()
            )));
        }
        if let Some(c) = clips.iter().find(|c| c.shape() != clips[0].shape()) {
            return Err(Error::InvalidConfig(format!(
                "clips differ in shape: {:?} vs {:?}",
                clips[0].shape(),
                c.shape()
            )));
        }
        Ok(ClipSet { clips, phases })
    }

    pub fn from_manifest(manifest: &DatasetManifest, root: &Path) -> Result<Self> {
        let clips = manifest
            .records
            .iter()
            .map(|r| load_clip(root, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(clips, manifest.records.iter().map(|r| r.phase).collect())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        self.clips[0].shape()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainRun<S: Scalar = f32> {
    pub params: ParameterStore<S>,
    pub log: Vec<LogRecord>,
}

/// Fingerprints of the frozen components before and after denoiser training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrozenCheck {
    pub vae_before: String,
    pub vae_after: String,
    pub text_before: String,
    pub text_after: String,
}

impl FrozenCheck {
    pub fn unchanged(&self) -> bool {
        self.vae_before == self.vae_after && self.text_before == self.text_after
    }
}

struct Logger<'a> {
    sink: Option<&'a mut dyn Write>,
    every: usize,
    start: Instant,
    records: Vec<LogRecord>,
}

impl Logger<'_> {
    fn record(&mut self, step: usize, loss: f64, lr: f64, last: bool) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss at step {step}")));
        }
        let rec = LogRecord {
            step,
            loss,
            lr,
            wall_ms: self.start.elapsed().as_millis() as u64,
        };
        if step.is_multiple_of(self.every) || last {
            if let Some(w) = self.sink.as_mut() {
                let line = serde_json::to_string(&rec)?;
                writeln!(w, "{line}").map_err(|e| Error::io("<training log>", e))?;
            }
        }
        self.records.push(rec);
        Ok(())
    }
}

fn accumulate<S: Scalar>(total: &mut BTreeMap<String, Tensor<S>>, grads: BTreeMap<String, Tensor<S>>) -> Result<()> {
    for (k, g) in grads {
        match total.get_mut(&k) {
            Some(t) => t.add_assign(&g)?,
            None => {
                total.insert(k, g);
            }
        }
    }
    Ok(())
}

/// Trains the VAE on `data`, then fits the latent standardization buffers.
pub fn train_vae(
    cfg: &TrainConfig,
    init: ParameterStore,
    data: &ClipSet,
    sink: Option<&mut dyn Write>,
) -> Result<TrainRun> {
    cfg.validate()?;
    let vcfg = vae_config(&init)?;
    let lshape = latent_shape(data.shape(), vcfg.latent_channels)?;
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Logger {
        sink,
        every: cfg.log_every,
        start: Instant::now(),
        records: Vec::new(),
    };
    let effective = cfg.effective_batch();
    for step in 1..=cfg.steps {
        let draws: Vec<(usize, Tensor<f32>)> = (0..effective)
            .map(|_| {
                let i = rng.random_range(0..data.len());
                (i, Tensor::randn(&lshape, 1.0, &mut rng))
            })
            .collect();
        let mut grads = BTreeMap::new();
        let mut loss = 0.0;
        for micro in draws.chunks(cfg.micro_batch) {
            let g = Graph::new();
            let p = params.bind(&g, true);
            let x = Tensor::stack(&micro.iter().map(|(i, _)| data.clips[*i].as_tensor()).collect::<Vec<_>>())?;
            let noise = Tensor::stack(&micro.iter().map(|(_, n)| n).collect::<Vec<_>>())?;
            let l = vae_loss_graph(&p, &vcfg, g.constant(x), g.constant(noise))?
                .scale(micro.len() as f64 / effective as f64);
            loss += l.to_tensor().item() as f64;
            accumulate(&mut grads, p.gradients(&g.backward(l)))?;
        }
        optimizer_step(&mut params, &grads, cfg)?;
        log.record(step, loss, cfg.lr, step == cfg.steps)?;
    }
    let dists = encode_clips(&params, &data.clips)?;
    fit_latent_stats(&mut params, &dists)?;
    Ok(TrainRun {
        params,
        log: log.records,
    })
}

fn encode_clips(vae: &ParameterStore, clips: &[VideoTensor]) -> Result<Vec<crate::vae::LatentDistribution>> {
    let mut out = Vec::with_capacity(clips.len());
    for chunk in clips.chunks(8) {
        out.extend(encode_batch(&chunk.iter().collect::<Vec<_>>(), vae)?);
    }
    Ok(out)
}

/// Standardized posterior-mean latents of every clip under a frozen VAE.
pub fn encode_dataset(vae: &ParameterStore, data: &ClipSet) -> Result<Vec<LatentVideo>> {
    encode_clips(vae, &data.clips)?
        .into_iter()
        .map(|d| standardize(&LatentVideo::new(d.mean)?, vae))
        .collect()
}

/// Trains the denoiser with the VAE and text table held fixed. The denoiser
/// may run at either precision; the frozen parts stay `f32`.
pub fn train_denoiser<S: Scalar>(
    cfg: &TrainConfig,
    init: ParameterStore<S>,
    data: &ClipSet,
    vae: &ParameterStore,
    text: &TokenizerTable,
    sched: &NoiseSchedule,
    sink: Option<&mut dyn Write>,
) -> Result<(TrainRun<S>, FrozenCheck)> {
    cfg.validate()?;
    let dcfg = denoiser_config(&init)?;
    let vcfg = vae_config(vae)?;
    if vae.component() != Component::Vae {
        return Err(Error::ComponentTag {
            expected: "vae".into(),
            found: vae.component().to_string(),
        });
    }
    let lshape = latent_shape(data.shape(), vcfg.latent_channels)?;
    if lshape[3] != dcfg.latent_channels || dcfg.timesteps != sched.len() || text.dim() != dcfg.d_text {
        return Err(Error::InvalidConfig(format!(
            "denoiser expects {} latent channels, {} timesteps, text width {}; got {}, {}, {}",
            dcfg.latent_channels,
            dcfg.timesteps,
            dcfg.d_text,
            lshape[3],
            sched.len(),
            text.dim()
        )));
    }
    let vae_before = vae.fingerprint();
    let text_before = text.fingerprint();

    let latents: Vec<Tensor<S>> = encode_dataset(vae, data)?
        .iter()
        .map(|l| l.as_tensor().cast())
        .collect();
    let conds: BTreeMap<SurgicalPhase, Tensor<S>> = SurgicalPhase::ALL
        .iter()
        .map(|&p| (p, PromptCondition::new(p, text).embedding.cast()))
        .collect();
    let null = text.null_embedding().cast();

    let mut params = init;
    let mut meta = params.meta().clone();
    meta["latent_shape"] = serde_json::json!(lshape);
    params.set_meta(meta);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Logger {
        sink,
        every: cfg.log_every,
        start: Instant::now(),
        records: Vec::new(),
    };
    let effective = cfg.effective_batch();
    for step in 1..=cfg.steps {
        let draws: Vec<(usize, usize, Tensor<S>, bool)> = (0..effective)
            .map(|_| {
                let i = rng.random_range(0..latents.len());
                let t = rng.random_range(0..sched.len());
                let eps = Tensor::randn(&lshape, 1.0, &mut rng);
                let drop = rng.random::<f64>() < cfg.cond_dropout;
                (i, t, eps, drop)
            })
            .collect();
        let mut grads = BTreeMap::new();
        let mut loss = 0.0;
        for micro in draws.chunks(cfg.micro_batch) {
            let mut xs = Vec::with_capacity(micro.len());
            for (i, t, eps, _) in micro {
                xs.push(forward_diffuse(&latents[*i], *t, eps, sched)?);
            }
            let texts: Vec<&Tensor<S>> = micro
                .iter()
                .map(|(i, _, _, drop)| if *drop { &null } else { &conds[&data.phases[*i]] })
                .collect();
            let ts: Vec<usize> = micro.iter().map(|d| d.1).collect();
            let g = Graph::new();
            let p = params.bind(&g, true);
            let x = g.constant(Tensor::stack(&xs.iter().collect::<Vec<_>>())?);
            let eps = g.constant(Tensor::stack(&micro.iter().map(|d| &d.2).collect::<Vec<_>>())?);
            let txt = g.constant(Tensor::stack(&texts)?);
            let l = denoiser_graph(&p, &dcfg, x, &ts, txt)?
                .mse(eps)?
                .scale(micro.len() as f64 / effective as f64);
            loss += l.to_tensor().item().as_f64();
            accumulate(&mut grads, p.gradients(&g.backward(l)))?;
        }
        optimizer_step(&mut params, &grads, cfg)?;
        log.record(step, loss, cfg.lr, step == cfg.steps)?;
    }
    let check = FrozenCheck {
        vae_before,
        vae_after: vae.fingerprint(),
        text_before,
        text_after: text.fingerprint(),
    };
    Ok((
        TrainRun {
            params,
            log: log.records,
        },
        check,
    ))
}
