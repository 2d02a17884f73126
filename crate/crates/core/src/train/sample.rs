//! Text-to-video generation: seeded latent noise, reverse diffusion, VAE decode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{denoise_batch, denoiser_config};
use crate::diffusion::{ancestral_sample, strided_sample, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::params::{Component, ParameterStore};
use crate::text::{parse_phase, PromptCondition, SurgicalPhase, TokenizerTable};
use crate::vae::{decode_batch, destandardize, vae_config};
use crate::video::{LatentVideo, VideoTensor};

pub const DEFAULT_SAMPLE_STEPS: usize = 50;

/// Every component needed to turn a prompt into a clip.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub vae: ParameterStore,
    pub denoiser: ParameterStore,
    pub text: TokenizerTable,
    pub sched: NoiseSchedule,
}

impl Pipeline {
    pub fn new(vae: ParameterStore, denoiser: ParameterStore, text: TokenizerTable, sched: NoiseSchedule) -> Result<Self> {
        vae_config(&vae)?;
        let dcfg = denoiser_config(&denoiser)?;
        if dcfg.timesteps != sched.len() {
            return Err(Error::InvalidConfig(format!(
                "denoiser trained for {} timesteps, schedule has {}",
                dcfg.timesteps,
                sched.len()
            )));
        }
        Ok(Pipeline {
            vae,
            denoiser,
            text,
            sched,
        })
    }

    /// Latent dims the denoiser was trained on.
    pub fn latent_shape(&self) -> Result<Vec<usize>> {
        if let Some(s) = self.denoiser.meta().get("latent_shape") {
            return serde_json::from_value(s.clone())
                .map_err(|e| Error::Checkpoint(format!("bad latent_shape metadata: {e}")));
        }
        let cfg = denoiser_config(&self.denoiser)?;
        let [t, h, w] = cfg.max_grid;
        Ok(vec![t, h * cfg.patch, w * cfg.patch, cfg.latent_channels])
    }

    fn eps_batch(&self, x: &Tensor<f32>, t: usize, conds: &[Tensor<f32>], guidance: f64) -> Result<Tensor<f32>> {
        let lat: Vec<LatentVideo> = x.unstack().into_iter().map(LatentVideo::new).collect::<Result<_>>()?;
        let n = lat.len();
        let mut inputs: Vec<&LatentVideo> = lat.iter().collect();
        let mut texts: Vec<&Tensor<f32>> = conds.iter().collect();
        let null = self.text.null_embedding();
        let guided = guidance != 1.0;
        if guided {
            inputs.extend(lat.iter());
            texts.extend(std::iter::repeat_n(&null, n));
        }
        let out = denoise_batch(&inputs, &vec![t; inputs.len()], &texts, &self.denoiser)?;
        let eps: Vec<Tensor<f32>> = if guided {
            let g = guidance as f32;
            out[..n]
                .iter()
                .zip(&out[n..])
                .map(|(c, u)| u.as_tensor().zip_map(c.as_tensor(), |u, c| u + g * (c - u)))
                .collect::<Result<_>>()?
        } else {
            out.into_iter().map(LatentVideo::into_tensor).collect()
        };
        Tensor::stack(&eps.iter().collect::<Vec<_>>())
    }

    /// One clip per `(phase, seed)`, generated as a batch.
    pub fn sample_batch(&self, items: &[(SurgicalPhase, u64)], steps: usize, guidance: f64) -> Result<Vec<VideoTensor>> {
        let t_max = self.sched.len();
        if steps == 0 || steps > t_max {
            return Err(Error::InvalidConfig(format!("sampling steps must lie in [1, {t_max}], got {steps}")));
        }
        if !guidance.is_finite() {
            return Err(Error::InvalidConfig(format!("guidance {guidance} must be finite")));
        }
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let shape = self.latent_shape()?;
        let mut rngs: Vec<ChaCha8Rng> = items.iter().map(|&(_, s)| ChaCha8Rng::seed_from_u64(s)).collect();
        let starts: Vec<Tensor<f32>> = rngs.iter_mut().map(|r| Tensor::randn(&shape, 1.0, r)).collect();
        let x_start = Tensor::stack(&starts.iter().collect::<Vec<_>>())?;
        let conds: Vec<Tensor<f32>> = items
            .iter()
            .map(|&(p, _)| PromptCondition::new(p, &self.text).embedding)
            .collect();
        let model = |x: &Tensor<f32>, t: usize| self.eps_batch(x, t, &conds, guidance);
        let z = if steps == t_max {
            ancestral_sample(x_start, &self.sched, model, |_| {
                let parts: Vec<Tensor<f32>> = rngs.iter_mut().map(|r| Tensor::randn(&shape, 1.0, r)).collect();
                Tensor::stack(&parts.iter().collect::<Vec<_>>()).expect("equal shapes")
            })?
        } else {
            strided_sample(x_start, &self.sched, steps, model)?
        };
        let latents: Vec<LatentVideo> = z
            .unstack()
            .into_iter()
            .map(|l| destandardize(&LatentVideo::new(l)?, &self.vae))
            .collect::<Result<_>>()?;
        decode_batch(&latents.iter().collect::<Vec<_>>(), &self.vae)
    }

    pub fn sample(&self, prompt: &str, steps: usize, seed: u64, guidance: f64) -> Result<VideoTensor> {
        let phase = parse_phase(prompt)?;
        Ok(self.sample_batch(&[(phase, seed)], steps, guidance)?.remove(0))
    }
}

/// Generates one clip for `prompt`; ancestral when `steps` equals the
/// schedule length, strided deterministic otherwise.
pub fn sample_video(
    prompt: &str,
    vae: &ParameterStore,
    denoiser: &ParameterStore,
    text: &TokenizerTable,
    sched: &NoiseSchedule,
    steps: usize,
    seed: u64,
    guidance: f64,
) -> Result<VideoTensor> {
    if vae.component() != Component::Vae {
        return Err(Error::ComponentTag {
            expected: "vae".into(),
            found: vae.component().to_string(),
        });
    }
    Pipeline::new(vae.clone(), denoiser.clone(), text.clone(), sched.clone())?.sample(prompt, steps, seed, guidance)
}
