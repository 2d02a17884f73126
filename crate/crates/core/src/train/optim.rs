//! Training hyper-parameters and the AdamW update.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Profile;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::params::ParameterStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub steps: usize,
    pub micro_batch: usize,
    pub accum: usize,
    pub seed: u64,
    pub profile: Profile,
    /// Probability of replacing the prompt with the null embedding.
    pub cond_dropout: f64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl TrainConfig {
    pub fn toy() -> Self {
        TrainConfig {
            lr: 2e-4,
            weight_decay: 1e-4,
            eps: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            steps: 2000,
            micro_batch: 2,
            accum: 2,
            seed: 0,
            profile: Profile::Toy,
            cond_dropout: 0.0,
            log_every: 1,
        }
    }

    pub fn full() -> Self {
        TrainConfig {
            steps: 50_000,
            micro_batch: 1,
            accum: 4,
            profile: Profile::Full,
            ..Self::toy()
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.accum
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr > 0.0) || !(self.eps >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad(format!(
                "lr {} must be positive; eps {} and weight_decay {} non-negative",
                self.lr, self.eps, self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas ({}, {}) must lie in [0, 1)", self.beta1, self.beta2));
        }
        if self.steps == 0 || self.micro_batch == 0 || self.accum == 0 || self.log_every == 0 {
            return bad("steps, micro_batch, accum and log_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cond_dropout) {
            return bad(format!("cond_dropout {} must lie in [0, 1]", self.cond_dropout));
        }
        if self.profile == Profile::Full && self.effective_batch() != 4 {
            return bad(format!(
                "full profile requires an effective batch of 4, got {}",
                self.effective_batch()
            ));
        }
        Ok(())
    }
}

/// One AdamW step with decoupled weight decay; increments the step counter.
pub fn optimizer_step<S: Scalar>(
    params: &mut ParameterStore<S>,
    grads: &BTreeMap<String, Tensor<S>>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.is_frozen() {
        return Err(Error::InvalidConfig(format!("{} store is frozen", params.component())));
    }
    for (name, g) in grads {
        let p = params.get(name)?;
        g.expect_shape(p.shape())?;
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let step = params.step() + 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let (values, moments) = params.parts_mut();
    let moments = moments.expect("checked not frozen");
    for (name, g) in grads {
        let theta = values.get_mut(name).expect("checked above");
        let mo = moments
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("no optimizer moments for {name}")))?;
        for (((th, m), v), &gi) in theta
            .data_mut()
            .iter_mut()
            .zip(mo.m.data_mut())
            .zip(mo.v.data_mut())
            .zip(g.data())
        {
            let gi = gi.as_f64();
            let mi = b1 * m.as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v.as_f64() + (1.0 - b2) * gi * gi;
            *m = S::lit(mi);
            *v = S::lit(vi);
            let t = th.as_f64();
            let update = (mi / c1) / ((vi / c2).sqrt() + cfg.eps) + cfg.weight_decay * t;
            *th = S::lit(t - cfg.lr * update);
        }
    }
    params.set_step(step);
    Ok(())
}
