//! Bounded-derivative bypass mappings for residual units.
//!
//! The adaptive mapping is
//!
//! ```text
//! H(x; α, β) = atan(α·x / s) / (α·s),   s = sqrt(β² + 1)
//! H'(x)      = 1 / (α²x² + β² + 1)       ∈ (0, 1]
//! ```
//!
//! It is odd and strictly increasing in `x`, reduces to `atan(x)` at
//! `(α, β) = (1, 0)` and to `x / (β² + 1)` as `α → 0`. The fixed
//! alternatives `H1..H3` and the `λ·x` scaling used to illustrate gradient
//! explosion and vanishing live alongside it in [`MappingKind`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Smallest `|α|` kept by the optimizer after each step.
pub const ALPHA_MIN: f64 = 1e-3;

/// Below this `|α|` the adaptive mapping is evaluated through its limit
/// `x / (β² + 1)`.
pub const ALPHA_LIMIT: f64 = 1e-6;

/// Trainable shape scalars of one residual unit's adaptive bypass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MappingParams {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// `(α, β) = (1, 0)`: the plain arctangent bypass.
    pub const fn arctan() -> Self {
        Self::new(1.0, 0.0)
    }

    /// `α` pushed away from zero to at least [`ALPHA_MIN`], keeping its sign.
    pub fn clamp_alpha(alpha: f64) -> f64 {
        if alpha.abs() >= ALPHA_MIN {
            alpha
        } else if alpha < 0.0 {
            -ALPHA_MIN
        } else {
            ALPHA_MIN
        }
    }
}

impl Default for MappingParams {
    fn default() -> Self {
        Self::arctan()
    }
}

/// Bypass function selector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MappingKind {
    Identity,
    /// `λ·x`
    LambdaScaled { lambda: f64 },
    /// `H1 = atan(x)`
    Arctan,
    /// `H2 = x·atan(x) − ½·ln(x² + 1)`
    XArctanLog,
    /// `H3 = −ln(eˣ + α²) / α²`
    LogExp { alpha: f64 },
    /// Adaptive `H(x; α, β)` with per-unit trainable parameters.
    Adaptive,
}

impl MappingKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MappingKind::LogExp { alpha } if alpha == 0.0 || !alpha.is_finite() => {
                Err(Error::InvalidArgument(format!("H3 requires a nonzero finite alpha, got {alpha}")))
            }
            MappingKind::LambdaScaled { lambda } if !lambda.is_finite() => {
                Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, MappingKind::Adaptive)
    }

    pub fn name(&self) -> &'static str {
        match self {
            MappingKind::Identity => "identity",
            MappingKind::LambdaScaled { .. } => "lambda",
            MappingKind::Arctan => "h1",
            MappingKind::XArctanLog => "h2",
            MappingKind::LogExp { .. } => "h3",
            MappingKind::Adaptive => "adaptive",
        }
    }

    /// Scalar evaluation. [`MappingKind::Adaptive`] is evaluated at `params`.
    pub fn value<T: Real>(&self, x: T, params: MappingParams) -> T {
        match *self {
            MappingKind::Identity => x,
            MappingKind::LambdaScaled { lambda } => T::of(lambda) * x,
            MappingKind::Arctan => x.atan(),
            MappingKind::XArctanLog => x * x.atan() - T::of(0.5) * (x * x).ln_1p(),
            MappingKind::LogExp { alpha } => {
                let a2 = T::of(alpha * alpha);
                -log_exp_plus(x, a2) / a2
            }
            MappingKind::Adaptive => breg_value(x, params),
        }
    }

    /// Exact derivative with respect to `x`.
    pub fn derivative<T: Real>(&self, x: T, params: MappingParams) -> T {
        match *self {
            MappingKind::Identity => T::one(),
            MappingKind::LambdaScaled { lambda } => T::of(lambda),
            MappingKind::Arctan => T::one() / (T::one() + x * x),
            MappingKind::XArctanLog => x.atan(),
            MappingKind::LogExp { alpha } => {
                // d/dx[−ln(eˣ + a²)/a²] = −1 / (a²·(1 + a²e⁻ˣ))
                let a2 = T::of(alpha * alpha);
                -T::one() / (a2 * (T::one() + a2 * (-x).exp()))
            }
            MappingKind::Adaptive => breg_derivative_value(x, params),
        }
    }

    /// The derivative as printed next to each fixed mapping in the original
    /// presentation. For H3 this is `1/(eˣ + α²)`, which is not the
    /// derivative of H3; [`MappingKind::derivative`] is what backprop uses.
    pub fn printed_derivative<T: Real>(&self, x: T, params: MappingParams) -> T {
        match *self {
            MappingKind::LogExp { alpha } => T::one() / (x.exp() + T::of(alpha * alpha)),
            _ => self.derivative(x, params),
        }
    }
}

/// `ln(eˣ + c)` without overflow for large `x`.
fn log_exp_plus<T: Real>(x: T, c: T) -> T {
    if x > T::zero() {
        x + (c * (-x).exp()).ln_1p()
    } else {
        (x.exp() + c).ln()
    }
}

/// `H(x; α, β)` for one element.
pub fn breg_value<T: Real>(x: T, p: MappingParams) -> T {
    let alpha = T::of(p.alpha);
    let beta = T::of(p.beta);
    let s2 = beta * beta + T::one();
    let mag = x.abs();
    let y = if p.alpha.abs() < ALPHA_LIMIT {
        mag / s2
    } else {
        let s = s2.sqrt();
        (alpha * mag / s).atan() / (alpha * s)
    };
    if x.is_sign_negative() {
        -y
    } else {
        y
    }
}

/// `∂H/∂x = 1 / (α²x² + β² + 1)`.
pub fn breg_derivative_value<T: Real>(x: T, p: MappingParams) -> T {
    let alpha = T::of(p.alpha);
    let beta = T::of(p.beta);
    T::one() / (alpha * alpha * x * x + beta * beta + T::one())
}

/// `d/du [atan(u)/u]`, by series near zero where the closed form cancels.
fn atan_ratio_slope<T: Real>(u: T) -> T {
    if u.abs() < T::of(0.25) {
        let u2 = u * u;
        let mut term = u;
        let mut acc = T::zero();
        for k in 1..=12 {
            let kf = T::of(k as f64);
            let coeff = T::of(2.0) * kf / (T::of(2.0) * kf + T::one());
            let signed = if k % 2 == 1 { -coeff } else { coeff };
            acc += signed * term;
            term *= u2;
        }
        acc
    } else {
        (T::one() / (T::one() + u * u) - u.atan() / u) / u
    }
}

/// `(∂H/∂α, ∂H/∂β)` for one element.
pub fn breg_param_partials<T: Real>(x: T, p: MappingParams) -> (T, T) {
    let alpha = T::of(p.alpha);
    let beta = T::of(p.beta);
    let s2 = beta * beta + T::one();
    let s = s2.sqrt();
    let u = alpha * x / s;
    // H = (x / s²)·g(u) with g(u) = atan(u)/u, so ∂H/∂α = x²·g'(u) / s³.
    let d_alpha = x * x * atan_ratio_slope(u) / (s2 * s);
    let h = breg_value(x, p);
    let d_beta = -beta / s2 * (x / (alpha * alpha * x * x + s2) + h);
    (d_alpha, d_beta)
}

pub fn breg_forward<T: Real>(x: &Tensor<T>, p: MappingParams) -> Tensor<T> {
    x.map(|v| breg_value(v, p))
}

pub fn breg_derivative<T: Real>(x: &Tensor<T>, p: MappingParams) -> Tensor<T> {
    x.map(|v| breg_derivative_value(v, p))
}

/// Gradients of `Σ upstream ⊙ H(x)` with respect to `α` and `β`.
pub fn breg_param_gradients<T: Real>(
    x: &Tensor<T>,
    p: MappingParams,
    upstream: &Tensor<T>,
) -> Result<(f64, f64)> {
    if x.shape() != upstream.shape() {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match input {:?}",
            upstream.shape(),
            x.shape()
        )));
    }
    let mut da = 0.0;
    let mut db = 0.0;
    for (&xi, &gi) in x.data().iter().zip(upstream.data()) {
        let (pa, pb) = breg_param_partials(xi.as_f64(), p);
        da += gi.as_f64() * pa;
        db += gi.as_f64() * pb;
    }
    Ok((da, db))
}

/// Elementwise evaluation of a fixed mapping kind.
pub fn mapping_eval<T: Real>(kind: MappingKind, x: &Tensor<T>) -> Result<Tensor<T>> {
    fixed(kind)?;
    Ok(x.map(|v| kind.value(v, MappingParams::arctan())))
}

pub fn mapping_derivative<T: Real>(kind: MappingKind, x: &Tensor<T>) -> Result<Tensor<T>> {
    fixed(kind)?;
    Ok(x.map(|v| kind.derivative(v, MappingParams::arctan())))
}

fn fixed(kind: MappingKind) -> Result<()> {
    kind.validate()?;
    if kind.is_adaptive() {
        return Err(Error::InvalidArgument(
            "the adaptive mapping needs MappingParams; use breg_forward".into(),
        ));
    }
    Ok(())
}

/// `Π (dF_i + dH_i)`: the scalar factor carried along the bypass chain from
/// a deep unit back to a shallow one.
pub fn grad_path_product(per_unit: &[(f64, f64)]) -> f64 {
    per_unit.iter().map(|&(df, dh)| df + dh).product()
}

/// One row of a mapping curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub h: f64,
    pub h_prime: f64,
}

/// Parameter settings of the four reference curves of the adaptive mapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurvePreset {
    /// α = 1, β = 1
    A,
    /// α = 1, β = 0
    B,
    /// α → 0, β = 1
    C,
    /// α → 0, β = 0
    D,
}

impl CurvePreset {
    pub fn params(self) -> MappingParams {
        // "α → 0" is represented by a value inside the limit branch.
        let tiny = ALPHA_LIMIT / 10.0;
        match self {
            CurvePreset::A => MappingParams::new(1.0, 1.0),
            CurvePreset::B => MappingParams::new(1.0, 0.0),
            CurvePreset::C => MappingParams::new(tiny, 1.0),
            CurvePreset::D => MappingParams::new(tiny, 0.0),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(CurvePreset::A),
            "b" => Ok(CurvePreset::B),
            "c" => Ok(CurvePreset::C),
            "d" => Ok(CurvePreset::D),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}` (expected a-d)"))),
        }
    }
}

/// Evenly spaced grid over `[lo, hi]` with `points` samples.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn mapping_curve(kind: MappingKind, params: MappingParams, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    kind.validate()?;
    Ok(grid
        .iter()
        .map(|&x| CurvePoint {
            x,
            h: kind.value(x, params),
            h_prime: kind.derivative(x, params),
        })
        .collect())
}

/// Writes `x,H,Hprime` rows.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "H", "Hprime"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.h.to_string(), p.h_prime.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn adaptive_reference_values() {
        assert_eq!(breg_value(0.0, MappingParams::new(0.3, -2.0)), 0.0);
        assert!((breg_value(1.0, MappingParams::arctan()) - PI / 4.0).abs() < 1e-15);
        let expected = 2f64.sqrt().atan() / 2f64.sqrt();
        assert!((breg_value(2.0, MappingParams::new(1.0, 1.0)) - expected).abs() < 1e-15);
        assert!((expected - 0.675510).abs() < 1e-6);
        assert!((breg_value(2.0f64, MappingParams::new(1e-9, 0.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_reference_values() {
        assert_eq!(breg_derivative_value(0.0, MappingParams::arctan()), 1.0);
        let p = MappingParams::new(1.0, 1.0);
        let d = breg_derivative_value(2.0f64, p);
        assert!((d - 1.0 / 6.0).abs() < 1e-15);
        assert!((fd(|x| breg_value(x, p), 2.0, 1e-4) - d).abs() < 1e-8);
    }

    #[test]
    fn param_partials_match_central_differences() {
        for &(x, a, b) in &[(1.0, 1.0, 0.0), (-2.5, 0.4, 1.3), (0.3, -1.7, -0.2), (7.0, 0.05, 0.5), (0.01, 3.0, 2.0)] {
            let (da, db) = breg_param_partials(x, MappingParams::new(a, b));
            let fa = fd(|aa| breg_value(x, MappingParams::new(aa, b)), a, 1e-5);
            let fb = fd(|bb| breg_value(x, MappingParams::new(a, bb)), b, 1e-5);
            assert!((da - fa).abs() <= 1e-6 * fa.abs().max(1.0), "dα at {x},{a},{b}: {da} vs {fa}");
            assert!((db - fb).abs() <= 1e-6 * fb.abs().max(1.0), "dβ at {x},{a},{b}: {db} vs {fb}");
        }
    }

    #[test]
    fn param_gradients_vanish_for_zero_upstream_or_zero_input() {
        let x = Tensor::<f64>::from_f64([3], &[0.5, -1.0, 2.0]).unwrap();
        let zero = Tensor::<f64>::zeros([3]);
        let p = MappingParams::new(0.7, 0.4);
        assert_eq!(breg_param_gradients(&x, p, &zero).unwrap(), (0.0, 0.0));
        let ones = Tensor::<f64>::ones([3]);
        let (da, db) = breg_param_gradients(&zero, p, &ones).unwrap();
        assert_eq!(da, 0.0);
        assert!(db == 0.0);
        assert!(breg_param_gradients(&x, p, &Tensor::zeros([2])).is_err());
    }

    #[test]
    fn fixed_mappings_reference_values() {
        let p = MappingParams::arctan();
        assert!((MappingKind::Arctan.value(1.0, p) - PI / 4.0).abs() < 1e-15);
        assert_eq!(MappingKind::XArctanLog.value(0.0, p), 0.0);
        assert_eq!(MappingKind::XArctanLog.derivative(0.0, p), 0.0);
        let h3 = MappingKind::LogExp { alpha: 1.0 };
        assert!((h3.value(0.0, p) + 2f64.ln()).abs() < 1e-15);
        assert!((h3.printed_derivative(0.0f64, p) - 0.5).abs() < 1e-15);
        // The exact slope has the printed magnitude at this point but the opposite sign.
        assert!((h3.derivative(0.0f64, p) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn h3_rejects_zero_alpha() {
        let x = Tensor::<f64>::zeros([2]);
        assert!(mapping_eval(MappingKind::LogExp { alpha: 0.0 }, &x).is_err());
        assert!(mapping_eval(MappingKind::Adaptive, &x).is_err());
    }

    #[test]
    fn fixed_derivatives_match_central_differences() {
        let kinds = [
            MappingKind::Identity,
            MappingKind::LambdaScaled { lambda: 1.1 },
            MappingKind::Arctan,
            MappingKind::XArctanLog,
            MappingKind::LogExp { alpha: 0.8 },
        ];
        for kind in kinds {
            for x in linspace(-6.0, 6.0, 25) {
                let p = MappingParams::arctan();
                let num = fd(|v| kind.value(v, p), x, 1e-5);
                let ana = kind.derivative(x, p);
                assert!((num - ana).abs() < 1e-7, "{kind:?} at {x}: {ana} vs {num}");
            }
        }
    }

    #[test]
    fn h3_is_stable_for_large_inputs() {
        let h3 = MappingKind::LogExp { alpha: 1.0 };
        let v: f64 = h3.value(800.0, MappingParams::arctan());
        assert!((v + 800.0).abs() < 1e-9);
    }

    #[test]
    fn path_product_reference_values() {
        assert_eq!(grad_path_product(&[]), 1.0);
        let exploding = grad_path_product(&vec![(0.0, 1.1); 50]);
        assert!((exploding - 1.1f64.powi(50)).abs() < 1e-9);
        assert!((exploding - 117.39).abs() < 0.01);
        assert_eq!(grad_path_product(&vec![(0.0, 1.0); 50]), 1.0);
    }

    #[test]
    fn clamp_keeps_sign() {
        assert_eq!(MappingParams::clamp_alpha(1e-5), 1e-3);
        assert_eq!(MappingParams::clamp_alpha(-1e-5), -1e-3);
        assert_eq!(MappingParams::clamp_alpha(0.0), 1e-3);
        assert_eq!(MappingParams::clamp_alpha(-0.5), -0.5);
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let pts = mapping_curve(MappingKind::Adaptive, CurvePreset::B.params(), &linspace(-1.0, 1.0, 3)).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,H,Hprime");
        assert_eq!(lines.len(), 4);
    }
}
