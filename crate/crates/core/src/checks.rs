//! Finite-difference gradient checks grouped by category: the adaptive
//! mapping, the fixed mappings, every primitive, and a whole network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gradcheck::{check_graph, finite_difference_gradient, relative_error, ProbePlan};
use crate::graph::{Feeds, Graph, Mode, NodeId, RunningStats};
use crate::kernels::Padding;
use crate::loss::{one_hot, FocalLossConfig};
use crate::mapping::{MappingKind, MappingParams};
use crate::network::{build_network, config_by_name, BuildOptions, Model};
use crate::params::{ParamRole, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CategoryResult {
    pub name: String,
    pub max_rel_error: f64,
    pub probed: usize,
    /// Worst-offending case, or why nothing was probed.
    pub note: String,
}

impl CategoryResult {
    /// Nothing probed counts as a (vacuous) pass.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.probed == 0 || self.max_rel_error <= tolerance
    }

    fn absorb(&mut self, case: &str, max: f64, probed: usize) {
        self.probed += probed;
        if max >= self.max_rel_error {
            self.max_rel_error = max;
            self.note = format!("worst: {case}");
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Network for the whole-model category; `None` skips it.
    pub arch: Option<String>,
    pub batch: usize,
    /// Spatial side of the network's input.
    pub side: usize,
    /// Coordinates sampled per network tensor.
    pub per_tensor: usize,
    /// Restrict the fixed-mapping category to one kind name.
    pub mapping: Option<String>,
    pub step: f64,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            arch: Some("BReG-NeXt-26".into()),
            batch: 4,
            side: 8,
            per_tensor: 3,
            mapping: None,
            step: 1e-3,
            seed: 0,
        }
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape")
}

/// Appends `Σ y ⊙ w` for a fed random `w`, so every output element gets a
/// distinct upstream gradient.
fn weighted_sum(g: &mut Graph, y: NodeId, shape: &[usize], feeds: &mut Feeds<f64>, rng: &mut ChaCha8Rng) -> NodeId {
    let w = g.input("readout", &shape.iter().map(|&d| Some(d)).collect::<Vec<_>>());
    feeds.insert("readout".into(), random(rng, shape, 1.0));
    let p = g.mul(y, w, "weighted").expect("same shape");
    g.sum(p, "loss").expect("sum")
}

fn check(g: &Graph, store: &ParamStore<f64>, feeds: &Feeds<f64>, loss: NodeId, mode: Mode, step: f64) -> Result<(f64, usize)> {
    let plan = ProbePlan { step, mode, ..Default::default() };
    let report = check_graph(g, store, feeds, loss, &plan)?;
    Ok((report.max_rel_error(), report.probed()))
}

/// Input, α and β gradients of the adaptive mapping at several settings.
pub fn check_adaptive_mapping(step: f64, seed: u64) -> Result<CategoryResult> {
    let mut out = CategoryResult { name: "adaptive mapping".into(), max_rel_error: 0.0, probed: 0, note: String::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (a, b) in [(1.0, 0.0), (1.0, 1.0), (0.5, 1.5), (2.0, -0.7), (-1.3, 0.4), (0.02, 0.3)] {
        let mut g = Graph::new();
        let mut store = ParamStore::new();
        store.insert("alpha", ParamRole::MappingAlpha, Tensor::from_f64([1], &[a])?)?;
        store.insert("beta", ParamRole::MappingBeta, Tensor::from_f64([1], &[b])?)?;
        let x = g.input("x", &[Some(24)]);
        let (pa, pb) = (g.param("alpha"), g.param("beta"));
        let y = g.adaptive_map(x, pa, pb, "H")?;
        let mut feeds = Feeds::from([("x".to_string(), random(&mut rng, &[24], 3.0))]);
        let loss = weighted_sum(&mut g, y, &[24], &mut feeds, &mut rng);
        let (max, n) = check(&g, &store, &feeds, loss, Mode::Train, step)?;
        out.absorb(&format!("α={a}, β={b}"), max, n);
    }
    Ok(out)
}

/// Fixed mappings: graph gradient vs central differences, plus the exact
/// derivative vs the printed one where they are meant to agree.
pub fn check_fixed_mappings(filter: Option<&str>, step: f64, seed: u64) -> Result<CategoryResult> {
    let mut out = CategoryResult { name: "fixed mappings".into(), max_rel_error: 0.0, probed: 0, note: String::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [
        MappingKind::Identity,
        MappingKind::LambdaScaled { lambda: 1.1 },
        MappingKind::Arctan,
        MappingKind::XArctanLog,
        MappingKind::LogExp { alpha: 0.7 },
    ];
    for kind in kinds.into_iter().filter(|k| filter.is_none_or(|f| f.eq_ignore_ascii_case(k.name()))) {
        let mut g = Graph::new();
        let x = g.input("x", &[Some(24)]);
        let y = g.map(x, kind, "H")?;
        let xs = random(&mut rng, &[24], 3.0);
        let mut feeds = Feeds::from([("x".to_string(), xs.clone())]);
        let loss = weighted_sum(&mut g, y, &[24], &mut feeds, &mut rng);
        let (max, n) = check(&g, &ParamStore::new(), &feeds, loss, Mode::Train, step)?;
        out.absorb(kind.name(), max, n);

        // elementwise H′ against finite differences of H
        let p = MappingParams::default();
        for &x0 in xs.data() {
            let fd = finite_difference_gradient(|t| Ok(kind.value(t.item(), p)), &Tensor::scalar(x0), step)?;
            out.absorb(&format!("{} H′", kind.name()), relative_error(kind.derivative(x0, p), fd.item()), 1);
        }
    }
    if out.probed == 0 {
        out.note = format!("no mapping named `{}`", filter.unwrap_or_default());
    }
    Ok(out)
}

/// Every primitive, each behind a random readout.
pub fn check_primitives(step: f64, seed: u64) -> Result<CategoryResult> {
    let mut out = CategoryResult { name: "primitives".into(), max_rel_error: 0.0, probed: 0, note: String::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    type Builder = fn(&mut Graph, &mut ParamStore<f64>, &mut Feeds<f64>, &mut ChaCha8Rng) -> Result<(NodeId, Vec<usize>, Mode)>;
    let cases: Vec<(&str, Builder)> = vec![
        ("conv2d same stride 1", |g, s, f, r| conv_case(g, s, f, r, 1, Padding::Same)),
        ("conv2d same stride 2", |g, s, f, r| conv_case(g, s, f, r, 2, Padding::Same)),
        ("conv2d valid stride 2", |g, s, f, r| conv_case(g, s, f, r, 2, Padding::Valid)),
        ("batch_norm train", |g, s, f, r| bn_case(g, s, f, r, Mode::Train)),
        ("batch_norm infer", |g, s, f, r| bn_case(g, s, f, r, Mode::Infer)),
        ("elu", |g, _, f, r| {
            let x = g.input("x", &[Some(2), Some(3), Some(3), Some(2)]);
            f.insert("x".into(), random(r, &[2, 3, 3, 2], 2.0));
            Ok((g.elu(x, 1.0, "elu")?, vec![2, 3, 3, 2], Mode::Train))
        }),
        ("global_avg_pool", |g, _, f, r| {
            let x = g.input("x", &[Some(2), Some(3), Some(3), Some(4)]);
            f.insert("x".into(), random(r, &[2, 3, 3, 4], 1.0));
            Ok((g.global_avg_pool(x, "gap")?, vec![2, 4], Mode::Train))
        }),
        ("avg_pool2 odd extent", |g, _, f, r| {
            let x = g.input("x", &[Some(1), Some(5), Some(3), Some(2)]);
            f.insert("x".into(), random(r, &[1, 5, 3, 2], 1.0));
            Ok((g.avg_pool2(x, "pool")?, vec![1, 3, 2, 2], Mode::Train))
        }),
        ("pad_channels", |g, _, f, r| {
            let x = g.input("x", &[Some(1), Some(2), Some(2), Some(2)]);
            f.insert("x".into(), random(r, &[1, 2, 2, 2], 1.0));
            Ok((g.pad_channels(x, 5, "pad")?, vec![1, 2, 2, 5], Mode::Train))
        }),
        ("dense", |g, s, f, r| {
            s.insert("w", ParamRole::DenseWeight, random(r, &[4, 3], 1.0))?;
            s.insert("b", ParamRole::DenseBias, random(r, &[3], 1.0))?;
            let x = g.input("x", &[Some(2), Some(4)]);
            f.insert("x".into(), random(r, &[2, 4], 1.0));
            let (w, b) = (g.param("w"), g.param("b"));
            Ok((g.dense(x, w, Some(b), "dense")?, vec![2, 3], Mode::Train))
        }),
        ("softmax", |g, _, f, r| {
            let x = g.input("x", &[Some(3), Some(5)]);
            f.insert("x".into(), random(r, &[3, 5], 2.0));
            Ok((g.softmax(x, "softmax")?, vec![3, 5], Mode::Train))
        }),
        ("add", |g, _, f, r| {
            let a = g.input("a", &[Some(6)]);
            let b = g.input("b", &[Some(6)]);
            f.insert("a".into(), random(r, &[6], 1.0));
            f.insert("b".into(), random(r, &[6], 1.0));
            Ok((g.add(a, b, "add")?, vec![6], Mode::Train))
        }),
    ];
    for (name, build) in cases {
        let mut g = Graph::new();
        let mut store = ParamStore::new();
        let mut feeds = Feeds::new();
        let (y, shape, mode) = build(&mut g, &mut store, &mut feeds, &mut rng)?;
        let loss = weighted_sum(&mut g, y, &shape, &mut feeds, &mut rng);
        let (max, n) = check(&g, &store, &feeds, loss, mode, step)?;
        out.absorb(name, max, n);
    }
    // losses end the graph themselves
    for focal in [true, false] {
        let mut g = Graph::new();
        let x = g.input("x", &[Some(3), Some(4)]);
        let t = g.input("t", &[Some(3), Some(4)]);
        let mut feeds = Feeds::from([("x".to_string(), random(&mut rng, &[3, 4], 2.0))]);
        let loss = if focal {
            feeds.insert("t".into(), one_hot(&[0, 3, 1], 4)?);
            let p = g.softmax(x, "softmax")?;
            g.focal_loss(p, t, FocalLossConfig::default(), "focal")?
        } else {
            feeds.insert("t".into(), random(&mut rng, &[3, 4], 1.0));
            g.mse_loss(x, t, "mse")?
        };
        let (max, n) = check(&g, &ParamStore::new(), &feeds, loss, Mode::Train, step)?;
        out.absorb(if focal { "softmax + focal loss" } else { "mse loss" }, max, n);
    }
    Ok(out)
}

fn conv_case(
    g: &mut Graph,
    s: &mut ParamStore<f64>,
    f: &mut Feeds<f64>,
    r: &mut ChaCha8Rng,
    stride: usize,
    padding: Padding,
) -> Result<(NodeId, Vec<usize>, Mode)> {
    s.insert("k", ParamRole::ConvKernel, random(r, &[3, 3, 2, 3], 1.0))?;
    let x = g.input("x", &[Some(2), Some(5), Some(5), Some(2)]);
    f.insert("x".into(), random(r, &[2, 5, 5, 2], 1.0));
    let k = g.param("k");
    let y = g.conv2d(x, k, stride, padding, "conv")?;
    let side = match padding {
        Padding::Same => 5usize.div_ceil(stride),
        Padding::Valid => (5 - 3) / stride + 1,
    };
    Ok((y, vec![2, side, side, 3], Mode::Train))
}

fn bn_case(g: &mut Graph, s: &mut ParamStore<f64>, f: &mut Feeds<f64>, r: &mut ChaCha8Rng, mode: Mode) -> Result<(NodeId, Vec<usize>, Mode)> {
    s.insert("gamma", ParamRole::BnScale, random(r, &[3], 1.0).map(|v| v + 1.5))?;
    s.insert("beta", ParamRole::BnShift, random(r, &[3], 1.0))?;
    s.insert("mean", ParamRole::BnRunningMean, random(r, &[3], 0.5))?;
    s.insert("var", ParamRole::BnRunningVar, random(r, &[3], 0.5).map(|v| v + 1.0))?;
    s.insert("n", ParamRole::BnUpdates, Tensor::ones([1]))?;
    let x = g.input("x", &[Some(4), Some(2), Some(2), Some(3)]);
    f.insert("x".into(), random(r, &[4, 2, 2, 3], 2.0));
    let (gm, bt) = (g.param("gamma"), g.param("beta"));
    let stats = RunningStats { mean: "mean".into(), var: "var".into(), updates: "n".into() };
    Ok((g.batch_norm(x, gm, bt, stats, 1e-5, 0.99, "bn")?, vec![4, 2, 2, 3], mode))
}

/// Whole-network check at 64-bit precision on a small random batch.
pub fn check_network(arch: &str, batch: usize, side: usize, per_tensor: usize, step: f64, seed: u64) -> Result<CategoryResult> {
    let cfg = config_by_name(arch)?.with_input(side, side);
    let mut model: Model<f64> = build_network(&cfg, &BuildOptions { seed, ..Default::default() })?;
    // move the mapping parameters off their initial point
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for e in model.store.iter_mut() {
        match e.role {
            ParamRole::MappingAlpha => e.value.fill(rng.gen_range(0.6..1.4)),
            ParamRole::MappingBeta => e.value.fill(rng.gen_range(-0.5..0.5)),
            _ => {}
        }
    }
    let images = random(&mut rng, &[batch, side, side, cfg.input[2]], 1.0).map(|v| 0.5 + 0.5 * v);
    let targets = match cfg.head.categorical_classes() {
        Some(k) => one_hot(&(0..batch).map(|i| i % k).collect::<Vec<_>>(), k)?,
        None => random(&mut rng, &[batch, 2], 1.0),
    };
    let feeds = model.feeds(images, targets);
    let plan = ProbePlan { per_tensor: Some(per_tensor), step, seed, include_inputs: true, mode: Mode::Train };
    let report = check_graph(&model.graph, &model.store, &feeds, model.loss, &plan)?;
    let worst = report.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error));
    let note = match worst {
        Some(w) => format!("worst: {}", w.name),
        None => "no parameters".into(),
    };
    Ok(CategoryResult { name: format!("network {arch}"), max_rel_error: report.max_rel_error(), probed: report.probed(), note })
}

pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CategoryResult>> {
    let mut out = Vec::new();
    if opts.mapping.as_deref().is_none_or(|m| m.eq_ignore_ascii_case("adaptive")) {
        out.push(check_adaptive_mapping(opts.step, opts.seed)?);
    }
    if opts.mapping.as_deref().is_none_or(|m| !m.eq_ignore_ascii_case("adaptive")) {
        out.push(check_fixed_mappings(opts.mapping.as_deref(), opts.step, opts.seed)?);
    }
    if opts.mapping.is_none() {
        out.push(check_primitives(opts.step, opts.seed)?);
        if let Some(arch) = &opts.arch {
            out.push(check_network(arch, opts.batch, opts.side, opts.per_tensor, opts.step, opts.seed)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_categories_pass() {
        assert!(check_adaptive_mapping(1e-3, 1).unwrap().passed(1e-3));
        let fixed = check_fixed_mappings(None, 1e-3, 1).unwrap();
        assert!(fixed.passed(1e-3), "{fixed:?}");
        assert!(fixed.probed > 0);
    }

    #[test]
    fn primitives_pass() {
        let r = check_primitives(1e-3, 2).unwrap();
        assert!(r.passed(1e-3), "{r:?}");
    }

    #[test]
    fn unknown_mapping_filter_is_vacuous() {
        let r = check_fixed_mappings(Some("nope"), 1e-3, 0).unwrap();
        assert_eq!(r.probed, 0);
        assert!(r.passed(1e-3));
    }
}
