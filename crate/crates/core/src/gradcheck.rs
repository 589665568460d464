//! Central-difference gradient oracle and autodiff comparisons.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Feeds, Graph, Mode, NodeId, Session};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Magnitude below which gradients are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    let partials = finite_difference_at(&mut f, x, h, &coords)?;
    Tensor::new(x.shape().to_vec(), partials)
}

/// Central differences at selected flat coordinates only.
pub fn finite_difference_at<F>(f: &mut F, x: &Tensor<f64>, h: f64, coords: &[usize]) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite { node: i, op: "finite_difference", label: format!("coordinate {i}") });
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Largest relative error seen for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub probed: usize,
    pub max_rel_error: f64,
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn probed(&self) -> usize {
        self.entries.iter().map(|e| e.probed).sum()
    }

    fn push(&mut self, name: String, coords: &[usize], analytic: &[f64], numeric: &[f64]) {
        let mut entry = GradCheckEntry { name, probed: coords.len(), max_rel_error: 0.0, worst: None };
        for ((&c, &a), &n) in coords.iter().zip(analytic).zip(numeric) {
            let e = relative_error(a, n);
            if e >= entry.max_rel_error {
                entry.max_rel_error = e;
                entry.worst = Some((c, a, n));
            }
        }
        self.entries.push(entry);
    }
}

/// Which coordinates of a graph to probe.
#[derive(Clone, Debug)]
pub struct ProbePlan {
    /// At most this many coordinates per tensor; `None` probes all.
    pub per_tensor: Option<usize>,
    pub step: f64,
    pub seed: u64,
    pub include_inputs: bool,
    pub mode: Mode,
}

impl Default for ProbePlan {
    fn default() -> Self {
        Self { per_tensor: None, step: 1e-3, seed: 0, include_inputs: true, mode: Mode::Train }
    }
}

fn pick(len: usize, plan: &ProbePlan, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match plan.per_tensor {
        Some(k) if k < len => {
            let mut v = sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compares reverse-mode gradients of the scalar `loss` against central
/// differences, for every trainable parameter and (optionally) every fed
/// input. Batch-norm running statistics are restored between probes.
pub fn check_graph(
    graph: &Graph,
    store: &ParamStore<f64>,
    feeds: &Feeds<f64>,
    loss: NodeId,
    plan: &ProbePlan,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut work = store.clone();
    let mut sess = Session::new(graph);
    sess.forward(&mut work, feeds, &[loss], plan.mode)?;
    let input_grads = if plan.include_inputs {
        sess.backward_with_inputs(loss, &mut work)?
    } else {
        sess.backward(loss, &mut work)?;
        Default::default()
    };
    let mut report = GradCheckReport::default();

    let eval = |s: &ParamStore<f64>, f: &Feeds<f64>| -> Result<f64> {
        let mut scratch = s.clone();
        let mut sess = Session::new(graph);
        sess.forward(&mut scratch, f, &[loss], plan.mode)?;
        Ok(sess.value(loss)?.item())
    };

    for entry in work.iter().filter(|e| e.trainable) {
        let coords = pick(entry.value.len(), plan, &mut rng);
        let analytic: Vec<f64> = coords.iter().map(|&c| entry.grad.data()[c]).collect();
        let name = entry.name.clone();
        let mut f = |t: &Tensor<f64>| {
            let mut s = store.clone();
            *s.value_mut(&name)? = t.clone();
            eval(&s, feeds)
        };
        let numeric = finite_difference_at(&mut f, &entry.value, plan.step, &coords)?;
        report.push(entry.name.clone(), &coords, &analytic, &numeric);
    }

    let mut names: Vec<&String> = input_grads.keys().collect();
    names.sort();
    for name in names {
        let x = &feeds[name];
        let coords = pick(x.len(), plan, &mut rng);
        let g = &input_grads[name];
        let analytic: Vec<f64> = coords.iter().map(|&c| g.data()[c]).collect();
        let mut f = |t: &Tensor<f64>| {
            let mut fd = feeds.clone();
            fd.insert(name.clone(), t.clone());
            eval(store, &fd)
        };
        let numeric = finite_difference_at(&mut f, x, plan.step, &coords)?;
        report.push(format!("input:{name}"), &coords, &analytic, &numeric);
    }
    Ok(report)
}
