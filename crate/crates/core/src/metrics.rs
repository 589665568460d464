//! Dimensional (RMSE, CC, CCC, SAGR) and categorical evaluation metrics.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!("series lengths differ: {} vs {}", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Means, population variances and covariance of a pair of series.
struct Moments {
    mean_p: f64,
    mean_t: f64,
    var_p: f64,
    var_t: f64,
    cov: f64,
}

fn moments(pred: &[f64], truth: &[f64]) -> Result<Moments> {
    check(pred, truth)?;
    let (mean_p, mean_t) = (mean(pred), mean(truth));
    let n = pred.len() as f64;
    let (mut var_p, mut var_t, mut cov) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mean_p, t - mean_t);
        var_p += dp * dp;
        var_t += dt * dt;
        cov += dp * dt;
    }
    let m = Moments { mean_p, mean_t, var_p: var_p / n, var_t: var_t / n, cov: cov / n };
    if m.var_p == 0.0 || m.var_t == 0.0 {
        return Err(Error::Degenerate(format!(
            "zero variance ({} in predictions, {} in ground truth)",
            m.var_p, m.var_t
        )));
    }
    Ok(m)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// Pearson correlation with population moments.
pub fn cc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let m = moments(pred, truth)?;
    Ok(m.cov / (m.var_p.sqrt() * m.var_t.sqrt()))
}

/// Concordance correlation `2·cov / (σp² + σt² + (μp − μt)²)`.
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let m = moments(pred, truth)?;
    let gap = m.mean_p - m.mean_t;
    Ok(2.0 * m.cov / (m.var_p + m.var_t + gap * gap))
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of samples whose prediction and ground truth share a sign
/// (zero is its own sign).
pub fn sagr(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let agree = pred.iter().zip(truth).filter(|(&p, &t)| sign(p) == sign(t)).count();
    Ok(agree as f64 / pred.len() as f64)
}

/// Counts of `pred − truth` in `bins` equal-width bins over `[-2, 2]`;
/// values outside fall into the end bins.
pub fn error_histogram(pred: &[f64], truth: &[f64], bins: usize) -> Result<Vec<usize>> {
    check(pred, truth)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    let width = 4.0 / bins as f64;
    for (&p, &t) in pred.iter().zip(truth) {
        let b = (((p - t) + 2.0) / width).floor();
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Ok(counts)
}

/// Left edges of the [`error_histogram`] bins.
pub fn histogram_edges(bins: usize) -> Vec<f64> {
    (0..bins).map(|i| -2.0 + 4.0 * i as f64 / bins as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionMetrics {
    pub rmse: f64,
    pub cc: f64,
    pub ccc: f64,
    pub sagr: f64,
}

impl DimensionMetrics {
    /// All four metrics; a degenerate series reports NaN for CC and CCC.
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        let rmse = rmse(pred, truth)?;
        let sagr = sagr(pred, truth)?;
        let (cc, ccc) = match (cc(pred, truth), ccc(pred, truth)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::Degenerate(_)), _) | (_, Err(Error::Degenerate(_))) => (f64::NAN, f64::NAN),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        Ok(Self { rmse, cc, ccc, sagr })
    }
}

/// Valence and arousal metrics; eight headline numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionalReport {
    pub valence: DimensionMetrics,
    pub arousal: DimensionMetrics,
}

impl DimensionalReport {
    /// `pred` and `truth` are row-major `N×2` (valence, arousal).
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        if !pred.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("dimensional series must hold (valence, arousal) pairs".into()));
        }
        let col = |v: &[f64], c: usize| v.iter().skip(c).step_by(2).copied().collect::<Vec<_>>();
        Ok(Self {
            valence: DimensionMetrics::compute(&col(pred, 0), &col(truth, 0))?,
            arousal: DimensionMetrics::compute(&col(pred, 1), &col(truth, 1))?,
        })
    }

    pub fn headline(&self) -> [(String, f64); 8] {
        let d = |name: &str, m: &DimensionMetrics| {
            [
                (format!("{name}_rmse"), m.rmse),
                (format!("{name}_cc"), m.cc),
                (format!("{name}_ccc"), m.ccc),
                (format!("{name}_sagr"), m.sagr),
            ]
        };
        let [a, b, c, e] = d("valence", &self.valence);
        let [f, g, h, i] = d("arousal", &self.arousal);
        [a, b, c, e, f, g, h, i]
    }

    pub fn to_key_value(&self) -> String {
        self.headline().iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dimension,rmse,cc,ccc,sagr\n");
        for (name, m) in [("valence", &self.valence), ("arousal", &self.arousal)] {
            writeln!(s, "{name},{},{},{},{}", m.rmse, m.cc, m.ccc, m.sagr).expect("string write");
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// No predictions of this class: precision reported as 0.
    pub no_predictions: bool,
    /// Class absent from the ground truth: recall reported as 0.
    pub absent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub classes: Vec<ClassMetrics>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    /// Support-weighted averages.
    pub weighted_avg: Averages,
}

impl ClassReport {
    pub fn compute(pred: &[usize], truth: &[usize], k: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidArgument(format!("series lengths differ: {} vs {}", pred.len(), truth.len())));
        }
        if pred.is_empty() {
            return Err(Error::EmptySeries);
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&p, &t) in pred.iter().zip(truth) {
            for &l in &[p, t] {
                if l >= k {
                    return Err(Error::LabelOutOfRange { label: l, classes: k });
                }
            }
            confusion[t][p] += 1;
        }
        let mut classes = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            classes.push(ClassMetrics { precision, recall, f1, support, no_predictions: predicted == 0, absent: support == 0 });
        }
        let n = pred.len() as f64;
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let avg = |w: &dyn Fn(&ClassMetrics) -> f64, total: f64| Averages {
            precision: classes.iter().map(|m| w(m) * m.precision).sum::<f64>() / total,
            recall: classes.iter().map(|m| w(m) * m.recall).sum::<f64>() / total,
            f1: classes.iter().map(|m| w(m) * m.f1).sum::<f64>() / total,
        };
        let macro_avg = avg(&|_| 1.0, k as f64);
        let weighted_avg = avg(&|m| m.support as f64, n);
        Ok(Self { classes, confusion, accuracy: correct as f64 / n, macro_avg, weighted_avg })
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::from("class,precision,recall,f1,support,no_predictions,absent\n");
        for (i, m) in self.classes.iter().enumerate() {
            let name = names.get(i).cloned().unwrap_or_else(|| i.to_string());
            writeln!(s, "{name},{},{},{},{},{},{}", m.precision, m.recall, m.f1, m.support, m.no_predictions, m.absent)
                .expect("string write");
        }
        for (name, a) in [("macro", &self.macro_avg), ("weighted", &self.weighted_avg)] {
            writeln!(s, "{name},{},{},{},,,", a.precision, a.recall, a.f1).expect("string write");
        }
        s
    }

    pub fn confusion_csv(&self, names: &[String]) -> String {
        let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut s = String::from("truth\\pred");
        for i in 0..self.confusion.len() {
            write!(s, ",{}", label(i)).expect("string write");
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&label(i));
            for v in row {
                write!(s, ",{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_key_value(&self) -> String {
        let mut s = format!("accuracy: {}\n", self.accuracy);
        for (name, a) in [("macro", &self.macro_avg), ("weighted", &self.weighted_avg)] {
            writeln!(s, "{name}_precision: {}\n{name}_recall: {}\n{name}_f1: {}", a.precision, a.recall, a.f1)
                .expect("string write");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert!((rmse(&[0.5, 1.0], &[0.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(rmse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(rmse(&[], &[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn correlation_examples() {
        let gt = [0.1, -0.4, 0.7, 0.2];
        let affine: Vec<f64> = gt.iter().map(|v| 2.0 * v + 0.1).collect();
        assert!((cc(&affine, &gt).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = gt.iter().map(|v| -v).collect();
        assert!((cc(&neg, &gt).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cc(&[1.0, 1.0], &[0.0, 1.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ccc_of_shifted_series() {
        let gt = [-1.0, 0.0, 1.0];
        let pred = [0.0, 1.0, 2.0];
        assert!((ccc(&pred, &gt).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        assert!(ccc(&pred, &gt).unwrap() < cc(&pred, &gt).unwrap());
        assert!((ccc(&gt, &gt).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sagr_examples() {
        assert_eq!(sagr(&[0.5, -0.2], &[0.1, -0.9]).unwrap(), 1.0);
        assert_eq!(sagr(&[0.5, -0.2], &[-0.1, -0.9]).unwrap(), 0.5);
        assert_eq!(sagr(&[0.0, 0.3], &[0.2, 0.3]).unwrap(), 0.5);
    }

    #[test]
    fn histogram_of_identical_series() {
        let v = [0.3, -0.2, 0.9];
        let h = error_histogram(&v, &v, 8).unwrap();
        assert_eq!(h, vec![0, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(histogram_edges(8)[4], 0.0);
    }

    #[test]
    fn one_class_predictor() {
        let truth = [0, 1, 2, 3];
        let r = ClassReport::compute(&[2; 4], &truth, 4).unwrap();
        assert_eq!(r.classes[2].recall, 1.0);
        assert_eq!(r.classes[2].precision, 0.25);
        assert!(r.classes[0].no_predictions);
        assert_eq!(r.accuracy, 0.25);
        let perfect = ClassReport::compute(&truth, &truth, 5).unwrap();
        assert!(perfect.classes[..4].iter().all(|m| m.f1 == 1.0));
        assert!(perfect.classes[4].absent);
        assert!(matches!(ClassReport::compute(&[7], &[0], 4), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn dimensional_report_has_eight_numbers() {
        let pred = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let r = DimensionalReport::compute(&pred, &pred).unwrap();
        assert_eq!(r.headline().len(), 8);
        assert_eq!(r.to_key_value().lines().count(), 8);
        assert_eq!(r.valence.rmse, 0.0);
    }
}
