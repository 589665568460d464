//! ADAM with step-decayed learning rate and selective L2 regularization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::MappingParams;
use crate::params::{ParamRole, ParamStore};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coefficient of the `w` term added to convolution and dense weight
    /// gradients.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, l2: 1e-4 }
    }
}

/// `base · factor^floor(epoch / period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { base: 1e-4, factor: 0.8, period: 10 }
    }
}

impl LrSchedule {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.base * self.factor.powi((epoch / self.period.max(1)) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState<T: Real = f32> {
    pub config: AdamConfig,
    pub schedule: LrSchedule,
    step: u64,
    /// First and second moments, aligned with the store's entry order.
    moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig, schedule: LrSchedule) -> Self {
        Self { config, schedule, step: 0, moments: Vec::new() }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.schedule.lr_at_epoch(epoch)
    }

    fn ensure_moments(&mut self, store: &ParamStore<T>) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = store
                .iter()
                .map(|e| (Tensor::zeros(e.value.shape().to_vec()), Tensor::zeros(e.value.shape().to_vec())))
                .collect();
        }
        if self.moments.len() != store.len()
            || self.moments.iter().zip(store.iter()).any(|((m, _), e)| m.shape() != e.value.shape())
        {
            return Err(Error::InvalidArgument("optimizer state does not match the parameter store".into()));
        }
        Ok(())
    }
}

/// One bias-corrected ADAM update of every trainable entry from its
/// accumulated gradient, followed by the `|α| ≥ α_min` clamp. Consumes the
/// gradients: a second step needs another backward pass.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, state: &mut OptimizerState<T>, lr: f64) -> Result<()> {
    if !store.grads_ready() {
        return Err(Error::StepBeforeBackward);
    }
    state.ensure_moments(store)?;
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let step_size = T::of(lr / c1);
    let inv_c2 = T::of(1.0 / c2);
    let eps = T::of(cfg.epsilon);
    let l2 = T::of(cfg.l2);
    for (entry, (m, v)) in store.iter_mut().zip(state.moments.iter_mut()) {
        if !entry.trainable {
            continue;
        }
        let decay = entry.role.is_decayed() && cfg.l2 != 0.0;
        let w = entry.value.data_mut();
        let g = entry.grad.data();
        for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
            let g = if decay { g + l2 * *w } else { g };
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *w -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
        }
        if entry.role == ParamRole::MappingAlpha {
            for a in entry.value.data_mut() {
                *a = T::of(MappingParams::clamp_alpha(a.as_f64()));
            }
        }
    }
    store.mark_grads_ready(false);
    Ok(())
}
