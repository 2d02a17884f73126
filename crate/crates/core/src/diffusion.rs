//! DDPM algebra: noise schedules, the closed-form forward process, the
//! noise-prediction loss and the reverse-time update rules.
//!
//! Every function here is pure. Coefficients are computed in `f64` and
//! applied in the tensor's own precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
}

pub const DEFAULT_TIMESTEPS: usize = 1000;
pub const DEFAULT_BETA_MIN: f64 = 1e-4;
pub const DEFAULT_BETA_MAX: f64 = 0.02;

/// Per-timestep `beta`, `alpha = 1 - beta` and cumulative `alpha_bar`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_noise_schedule(
    kind: ScheduleKind,
    timesteps: usize,
    beta_min: f64,
    beta_max: f64,
) -> Result<NoiseSchedule> {
    if timesteps == 0 {
        return Err(Error::InvalidConfig("schedule needs at least one timestep".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "betas must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let betas = match kind {
        ScheduleKind::Linear => {
            if timesteps == 1 {
                vec![beta_min]
            } else {
                let span = (timesteps - 1) as f64;
                (0..timesteps)
                    .map(|i| beta_min + (beta_max - beta_min) * i as f64 / span)
                    .collect()
            }
        }
    };
    NoiseSchedule::from_betas_with_kind(kind, betas)
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_noise_schedule(
            ScheduleKind::Linear,
            DEFAULT_TIMESTEPS,
            DEFAULT_BETA_MIN,
            DEFAULT_BETA_MAX,
        )
        .expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// Schedule from explicit betas (hand-built schedules in tests and
    /// experiments).
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        Self::from_betas_with_kind(ScheduleKind::Linear, betas)
    }

    fn from_betas_with_kind(kind: ScheduleKind, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidConfig("empty beta table".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidConfig(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, &a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            kind,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "timestep {t} outside schedule of length {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// A latent together with the timestep it currently sits at.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState<S: Scalar = f32> {
    pub latent: Tensor<S>,
    pub t: usize,
}

impl<S: Scalar> DiffusionState<S> {
    pub fn new(latent: Tensor<S>, t: usize, sched: &NoiseSchedule) -> Result<Self> {
        sched.check_t(t)?;
        if !latent.is_finite() {
            return Err(Error::Numeric(format!("non-finite latent at timestep {t}")));
        }
        Ok(DiffusionState { latent, t })
    }
}

fn axpby<S: Scalar>(a: f64, x: &Tensor<S>, b: f64, y: &Tensor<S>) -> Result<Tensor<S>> {
    let (a, b) = (S::lit(a), S::lit(b));
    x.zip_map(y, |x, y| a * x + b * y)
}

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_diffuse<S: Scalar>(
    x0: &Tensor<S>,
    t: usize,
    eps: &Tensor<S>,
    sched: &NoiseSchedule,
) -> Result<Tensor<S>> {
    sched.check_t(t)?;
    let ab = sched.alpha_bars[t];
    axpby(ab.sqrt(), x0, (1.0 - ab).sqrt(), eps)
}

/// Inverse of [`forward_diffuse`] given the noise (or a prediction of it).
pub fn predict_x0<S: Scalar>(
    xt: &Tensor<S>,
    t: usize,
    eps_hat: &Tensor<S>,
    sched: &NoiseSchedule,
) -> Result<Tensor<S>> {
    sched.check_t(t)?;
    let ab = sched.alpha_bars[t];
    if ab <= 0.0 {
        return Err(Error::SingularSchedule { t });
    }
    let inv = 1.0 / ab.sqrt();
    axpby(inv, xt, -(1.0 - ab).sqrt() * inv, eps_hat)
}

/// One ancestral step `x_t -> x_{t-1}`; `z` is the caller's standard-normal
/// draw and is ignored at `t = 0`.
pub fn ddpm_step<S: Scalar>(
    xt: &Tensor<S>,
    t: usize,
    eps_hat: &Tensor<S>,
    z: &Tensor<S>,
    sched: &NoiseSchedule,
) -> Result<Tensor<S>> {
    sched.check_t(t)?;
    z.expect_shape(xt.shape())?;
    let (alpha, beta, ab) = (sched.alphas[t], sched.betas[t], sched.alpha_bars[t]);
    let inv = 1.0 / alpha.sqrt();
    let mean = axpby(inv, xt, -inv * beta / (1.0 - ab).sqrt(), eps_hat)?;
    if t == 0 {
        return Ok(mean);
    }
    axpby(1.0, &mean, beta.sqrt(), z)
}

/// Deterministic jump from `t` to `t_prev` (or to the clean estimate when
/// `t_prev` is `None`), re-noising the predicted `x0` with the predicted
/// noise.
pub fn strided_step<S: Scalar>(
    xt: &Tensor<S>,
    t: usize,
    t_prev: Option<usize>,
    eps_hat: &Tensor<S>,
    sched: &NoiseSchedule,
) -> Result<Tensor<S>> {
    let x0 = predict_x0(xt, t, eps_hat, sched)?;
    match t_prev {
        None => Ok(x0),
        Some(tp) => forward_diffuse(&x0, tp, eps_hat, sched),
    }
}

/// `steps` evenly spaced timesteps from `T - 1` down to `0`.
pub fn strided_timesteps(timesteps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > timesteps {
        return Err(Error::InvalidConfig(format!(
            "sampling steps must lie in [1, {timesteps}], got {steps}"
        )));
    }
    if steps == 1 {
        return Ok(vec![timesteps - 1]);
    }
    let span = (timesteps - 1) as f64 / (steps - 1) as f64;
    Ok((0..steps)
        .rev()
        .map(|i| (i as f64 * span).round() as usize)
        .collect())
}

/// Mean squared error between predicted and true noise.
pub fn diffusion_loss<S: Scalar>(eps_hat: &Tensor<S>, eps: &Tensor<S>) -> Result<f64> {
    eps_hat.expect_shape(eps.shape())?;
    let n = eps.numel().max(1) as f64;
    Ok(eps_hat
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&a, &b)| {
            let d = (a - b).as_f64();
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Full ancestral chain from `x_T` (`T` steps). `eps_model(x_t, t)` predicts
/// the noise; `noise(t)` supplies the standard-normal draw for step `t`.
pub fn ancestral_sample<S: Scalar>(
    x_start: Tensor<S>,
    sched: &NoiseSchedule,
    mut eps_model: impl FnMut(&Tensor<S>, usize) -> Result<Tensor<S>>,
    mut noise: impl FnMut(usize) -> Tensor<S>,
) -> Result<Tensor<S>> {
    let mut state = DiffusionState::new(x_start, sched.len() - 1, sched)?;
    loop {
        let eps_hat = eps_model(&state.latent, state.t)?;
        let z = if state.t > 0 {
            noise(state.t)
        } else {
            Tensor::zeros(state.latent.shape())
        };
        let next = ddpm_step(&state.latent, state.t, &eps_hat, &z, sched)?;
        if state.t == 0 {
            return Ok(next);
        }
        state = DiffusionState::new(next, state.t - 1, sched)?;
    }
}

/// Deterministic strided chain over [`strided_timesteps`].
pub fn strided_sample<S: Scalar>(
    x_start: Tensor<S>,
    sched: &NoiseSchedule,
    steps: usize,
    mut eps_model: impl FnMut(&Tensor<S>, usize) -> Result<Tensor<S>>,
) -> Result<Tensor<S>> {
    let ts = strided_timesteps(sched.len(), steps)?;
    let mut x = x_start;
    for (i, &t) in ts.iter().enumerate() {
        let state = DiffusionState::new(x, t, sched)?;
        let eps_hat = eps_model(&state.latent, t)?;
        x = strided_step(&state.latent, t, ts.get(i + 1).copied(), &eps_hat, sched)?;
    }
    Ok(x)
}
