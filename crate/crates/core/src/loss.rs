//! Focal loss for the categorical head and mean squared error for the
//! dimensional head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Lower bound applied to the true-class probability before the logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalLossConfig {
    pub alpha_t: f64,
    pub gamma: f64,
}

impl FocalLossConfig {
    pub fn new(alpha_t: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_t) {
            return Err(Error::InvalidArgument(format!("alpha_t must lie in [0,1], got {alpha_t}")));
        }
        if !(gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be non-negative, got {gamma}")));
        }
        Ok(Self { alpha_t, gamma })
    }

    /// Plain cross-entropy.
    pub const fn cross_entropy() -> Self {
        Self { alpha_t: 1.0, gamma: 0.0 }
    }

    /// `−α_t·(1 − p)^γ·ln(p)` for one true-class probability.
    pub fn term(&self, p: f64) -> f64 {
        let p = p.max(PROB_FLOOR);
        -self.alpha_t * (1.0 - p).powf(self.gamma) * p.ln()
    }

    /// `d term / dp`; zero where the floor is active.
    pub fn slope(&self, p: f64) -> f64 {
        if p < PROB_FLOOR {
            return 0.0;
        }
        let q = 1.0 - p;
        // γ·(1−p)^(γ−1)·ln p → 0 as p → 1 for γ > 0; it is absent for γ = 0.
        let modulating = if self.gamma == 0.0 || q <= 0.0 {
            0.0
        } else {
            self.gamma * q.powf(self.gamma - 1.0) * p.ln()
        };
        -self.alpha_t * (q.powf(self.gamma) / p - modulating)
    }
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self { alpha_t: 0.25, gamma: 2.0 }
    }
}

fn rows_of<T: Real>(probs: &Tensor<T>) -> Result<(usize, usize)> {
    match *probs.shape() {
        [n, k] if n > 0 && k > 0 => Ok((n, k)),
        _ => Err(Error::Shape(format!("expected an N×K probability matrix, got {:?}", probs.shape()))),
    }
}

/// Batch mean of the focal term with `p_t` the probability of each sample's label.
pub fn focal_loss<T: Real>(probs: &Tensor<T>, labels: &[usize], cfg: FocalLossConfig) -> Result<f64> {
    let (n, k) = rows_of(probs)?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut total = 0.0;
    for (row, &label) in probs.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        total += cfg.term(row[label].as_f64());
    }
    Ok(total / n as f64)
}

/// One-hot targets for `labels`.
pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        data[i * classes + label] = T::one();
    }
    Tensor::new([labels.len(), classes], data)
}

/// Focal loss against (soft or one-hot) targets; `p_t = Σ target·p` per row.
pub(crate) fn focal_forward<T: Real>(probs: &Tensor<T>, target: &Tensor<T>, cfg: FocalLossConfig) -> Result<T> {
    let (n, k) = rows_of(probs)?;
    if target.shape() != probs.shape() {
        return Err(Error::Shape(format!("target {:?} vs probabilities {:?}", target.shape(), probs.shape())));
    }
    let mut total = 0.0;
    for (p, t) in probs.data().chunks_exact(k).zip(target.data().chunks_exact(k)) {
        let pt: f64 = p.iter().zip(t).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
        total += cfg.term(pt);
    }
    Ok(T::of(total / n as f64))
}

pub(crate) fn focal_backward<T: Real>(probs: &Tensor<T>, target: &Tensor<T>, cfg: FocalLossConfig, upstream: T) -> Tensor<T> {
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    let mut dp = Vec::with_capacity(probs.len());
    for (p, t) in probs.data().chunks_exact(k).zip(target.data().chunks_exact(k)) {
        let pt: f64 = p.iter().zip(t).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
        let s = cfg.slope(pt) / n as f64;
        dp.extend(t.iter().map(|&ti| upstream * T::of(s * ti.as_f64())));
    }
    Tensor::new(probs.shape().to_vec(), dp).expect("same shape")
}

/// Mean of squared componentwise differences.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("mse over an empty tensor".into()));
    }
    let total = pred.data().iter().zip(target.data()).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(total / T::of(pred.len() as f64))
}

pub(crate) fn mse_backward<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, upstream: T) -> Tensor<T> {
    let scale = upstream * T::of(2.0 / pred.len() as f64);
    let data = pred.data().iter().zip(target.data()).map(|(&a, &b)| scale * (a - b)).collect();
    Tensor::new(pred.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classification_has_zero_loss() {
        let probs = Tensor::<f64>::new([2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(focal_loss(&probs, &[0, 2], FocalLossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn worked_single_sample_value() {
        let probs = Tensor::<f64>::new([1, 2], vec![0.9, 0.1]).unwrap();
        let fl = focal_loss(&probs, &[0], FocalLossConfig::default()).unwrap();
        let expected = 0.25 * 0.01 * -(0.9f64.ln());
        assert!((fl - expected).abs() < 1e-15);
        assert!((fl - 2.634e-4).abs() < 5e-8);
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let probs = Tensor::<f64>::new([2, 2], vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        let fl = focal_loss(&probs, &[1, 1], FocalLossConfig::cross_entropy()).unwrap();
        let ce = -(0.7f64.ln() + 0.4f64.ln()) / 2.0;
        assert!((fl - ce).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label_rejected() {
        let probs = Tensor::<f64>::new([1, 2], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            focal_loss(&probs, &[2], FocalLossConfig::default()),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(FocalLossConfig::new(0.25, -1.0).is_err());
        assert!(FocalLossConfig::new(1.5, 2.0).is_err());
        assert!(FocalLossConfig::new(0.25, f64::NAN).is_err());
    }

    #[test]
    fn slope_matches_central_difference() {
        for cfg in [FocalLossConfig::default(), FocalLossConfig::cross_entropy(), FocalLossConfig::new(0.5, 0.5).unwrap()] {
            for &p in &[0.05, 0.3, 0.5, 0.9, 0.999] {
                let h = 1e-6;
                let num = (cfg.term(p + h) - cfg.term(p - h)) / (2.0 * h);
                assert!((num - cfg.slope(p)).abs() < 1e-6 * num.abs().max(1.0), "{cfg:?} at {p}");
            }
            assert!(cfg.slope(1.0).is_finite());
        }
    }

    #[test]
    fn mse_values() {
        let a = Tensor::<f64>::new([1, 2], vec![0.5, 0.0]).unwrap();
        let b = Tensor::<f64>::new([1, 2], vec![0.0, 0.5]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert!((mse_loss(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let c = a.map(|v| v + 1.0);
        assert!((mse_loss(&c, &a).unwrap() - 1.0).abs() < 1e-15);
    }
}
