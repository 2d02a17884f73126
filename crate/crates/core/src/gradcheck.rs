//! Central finite-difference gradient checking.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{denoiser_graph, init_denoiser, DenoiserConfig};
use crate::error::Result;
use crate::nn::{Graph, Tensor};
use crate::params::ParameterStore;
use crate::vae::{init_vae, latent_shape, vae_loss_graph, VaeConfig};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for [`relative_error`].
pub const FD_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error with a floor on the denominator so that entries whose
/// true gradient is ~0 are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` gradients against `(f(θ+h) − f(θ−h)) / 2h` for
/// `samples` randomly chosen scalar parameters.
pub fn check_store<R, F>(
    store: &ParameterStore<f64>,
    analytic: &BTreeMap<String, Tensor<f64>>,
    mut loss: F,
    samples: usize,
    step: f64,
    floor: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    R: Rng + ?Sized,
    F: FnMut(&ParameterStore<f64>) -> Result<f64>,
{
    let index: Vec<(String, usize)> = store
        .params()
        .iter()
        .flat_map(|(name, t)| (0..t.numel()).map(move |i| (name.clone(), i)))
        .collect();
    let picks = sample(rng, index.len(), samples.min(index.len()));
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for pick in picks.iter() {
        let (name, i) = &index[pick];
        let orig = store.get(name)?.data()[*i];
        probe.get_mut(name)?.data_mut()[*i] = orig + step;
        let plus = loss(&probe)?;
        probe.get_mut(name)?.data_mut()[*i] = orig - step;
        let minus = loss(&probe)?;
        probe.get_mut(name)?.data_mut()[*i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[name].data()[*i];
        let err = relative_error(a, numeric, floor);
        report.checked += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name.clone(), *i, a, numeric));
        }
    }
    Ok(report)
}

/// Checks the denoiser's noise-prediction loss on random latents at two
/// timesteps, in `f64`.
pub fn check_denoiser(cfg: &DenoiserConfig, samples: usize, seed: u64) -> Result<GradCheckReport> {
    let store = init_denoiser(cfg, seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = cfg.patch;
    let shape = [2, cfg.max_grid[0], cfg.max_grid[1] * p, cfg.max_grid[2] * p, cfg.latent_channels];
    let x = Tensor::<f64>::randn(&shape, 1.0, &mut rng);
    let eps = Tensor::<f64>::randn(&shape, 1.0, &mut rng);
    let text = Tensor::<f64>::randn(&[2, cfg.max_text_len, cfg.d_text], 1.0, &mut rng);
    let ts = [cfg.timesteps / 10, cfg.timesteps * 7 / 10];
    let loss = |s: &ParameterStore<f64>, trainable: bool| -> Result<(f64, Option<BTreeMap<String, Tensor<f64>>>)> {
        let g = Graph::new();
        let b = s.bind(&g, trainable);
        let l = denoiser_graph(&b, cfg, g.constant(x.clone()), &ts, g.constant(text.clone()))?.mse(g.constant(eps.clone()))?;
        let v = l.to_tensor().item();
        Ok((v, trainable.then(|| b.gradients(&g.backward(l)))))
    };
    let analytic = loss(&store, true)?.1.expect("gradients requested");
    check_store(&store, &analytic, |s| Ok(loss(s, false)?.0), samples, FD_STEP, FD_FLOOR, &mut rng)
}

/// Checks the VAE objective (reconstruction plus KL) on a random clip of
/// `frames` frames at `size`x`size`, in `f64`.
pub fn check_vae(cfg: &VaeConfig, frames: usize, size: usize, samples: usize, seed: u64) -> Result<GradCheckReport> {
    let store = init_vae(cfg, seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lshape = latent_shape(&[frames, size, size, 3], cfg.latent_channels)?;
    let x = Tensor::<f64>::randn(&[1, frames, size, size, 3], 0.5, &mut rng);
    let noise = Tensor::<f64>::randn(&[&[1][..], &lshape[..]].concat(), 1.0, &mut rng);
    let loss = |s: &ParameterStore<f64>, trainable: bool| -> Result<(f64, Option<BTreeMap<String, Tensor<f64>>>)> {
        let g = Graph::new();
        let b = s.bind(&g, trainable);
        let l = vae_loss_graph(&b, cfg, g.constant(x.clone()), g.constant(noise.clone()))?;
        let v = l.to_tensor().item();
        Ok((v, trainable.then(|| b.gradients(&g.backward(l)))))
    };
    let analytic = loss(&store, true)?.1.expect("gradients requested");
    check_store(&store, &analytic, |s| Ok(loss(s, false)?.0), samples, FD_STEP, FD_FLOOR, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floors_small_gradients() {
        assert_eq!(relative_error(1.0, 1.0, 1e-8), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-8) - 0.5).abs() < 1e-12);
        assert!((relative_error(0.0, 1e-10, 1e-6) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn tiny_denoiser_gradients() {
        let cfg = DenoiserConfig {
            d_model: 16,
            n_heads: 2,
            n_blocks: 1,
            latent_channels: 4,
            d_text: 8,
            max_text_len: 3,
            max_grid: [2, 1, 1],
            mlp_ratio: 2,
            ..DenoiserConfig::toy()
        };
        let r = check_denoiser(&cfg, 40, 1).unwrap();
        assert_eq!(r.checked, 40);
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }

    #[test]
    fn tiny_vae_gradients() {
        let cfg = VaeConfig {
            channels: [4, 8, 8],
            latent_channels: 4,
            blocks: 1,
            kl_weight: 1e-2,
        };
        let r = check_vae(&cfg, 5, 16, 40, 2).unwrap();
        assert_eq!(r.checked, 40);
        assert!(r.max_rel_error < 1e-3, "{r:?}");
    }
}
