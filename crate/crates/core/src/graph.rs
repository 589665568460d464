//! Static computation graphs with reverse-mode differentiation.
//!
//! Nodes are appended in construction order and may only reference nodes
//! that already exist, so insertion order is a topological order and
//! cycles cannot be expressed. The same graph can be executed at any
//! [`Real`] precision against a [`ParamStore`] of that precision.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::{self, BatchStats, Padding};
use crate::loss::{self, FocalLossConfig};
use crate::mapping::{self, MappingKind, MappingParams};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Names of the non-trainable running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: String,
    pub var: String,
    pub updates: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Fed placeholder; `None` dimensions accept any extent.
    Input { name: String, shape: Vec<Option<usize>> },
    Param { name: String },
    Conv2d { input: NodeId, kernel: NodeId, stride: usize, padding: Padding },
    BatchNorm { input: NodeId, gamma: NodeId, beta: NodeId, stats: RunningStats, eps: f64, momentum: f64 },
    Elu { input: NodeId, alpha: f64 },
    GlobalAvgPool(NodeId),
    AvgPool2(NodeId),
    PadChannels { input: NodeId, channels: usize },
    Dense { input: NodeId, weight: NodeId, bias: Option<NodeId> },
    Softmax(NodeId),
    Map { input: NodeId, kind: MappingKind },
    AdaptiveMap { input: NodeId, alpha: NodeId, beta: NodeId },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sum(NodeId),
    FocalLoss { probs: NodeId, target: NodeId, cfg: FocalLossConfig },
    MseLoss { pred: NodeId, target: NodeId },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Param { .. } => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Elu { .. } => "elu",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::AvgPool2(_) => "avg_pool2",
            Op::PadChannels { .. } => "pad_channels",
            Op::Dense { .. } => "dense",
            Op::Softmax(_) => "softmax",
            Op::Map { .. } => "map",
            Op::AdaptiveMap { .. } => "adaptive_map",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Sum(_) => "sum",
            Op::FocalLoss { .. } => "focal_loss",
            Op::MseLoss { .. } => "mse_loss",
        }
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input { .. } | Op::Param { .. } => vec![],
            Op::Conv2d { input, kernel, .. } => vec![*input, *kernel],
            Op::BatchNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::Elu { input, .. } | Op::PadChannels { input, .. } | Op::Map { input, .. } => vec![*input],
            Op::GlobalAvgPool(x) | Op::AvgPool2(x) | Op::Softmax(x) | Op::Sum(x) => vec![*x],
            Op::Dense { input, weight, bias } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::AdaptiveMap { input, alpha, beta } => vec![*input, *alpha, *beta],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::FocalLoss { probs, target, .. } => vec![*probs, *target],
            Op::MseLoss { pred, target } => vec![*pred, *target],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub label: String,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: Vec<(String, NodeId)>,
}

pub type Feeds<T> = HashMap<String, Tensor<T>>;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Evaluation order. Always total: construction order.
    pub fn topological_order(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Appends a node after checking that every operand already exists.
    pub fn push(&mut self, op: Op, label: impl Into<String>) -> Result<NodeId> {
        let id = self.nodes.len();
        for input in op.inputs() {
            if input.0 >= id {
                return Err(Error::Graph(format!(
                    "{} node `{}` references node {} which does not precede it",
                    op.kind(),
                    label.into(),
                    input.0
                )));
            }
        }
        self.nodes.push(Node { op, label: label.into() });
        Ok(NodeId(id))
    }

    pub fn input(&mut self, name: &str, shape: &[Option<usize>]) -> NodeId {
        self.push(Op::Input { name: name.into(), shape: shape.to_vec() }, name).expect("no operands")
    }

    pub fn param(&mut self, name: &str) -> NodeId {
        self.push(Op::Param { name: name.into() }, name).expect("no operands")
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, padding: Padding, label: &str) -> Result<NodeId> {
        self.push(Op::Conv2d { input, kernel, stride, padding }, label)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: RunningStats,
        eps: f64,
        momentum: f64,
        label: &str,
    ) -> Result<NodeId> {
        self.push(Op::BatchNorm { input, gamma, beta, stats, eps, momentum }, label)
    }

    pub fn elu(&mut self, input: NodeId, alpha: f64, label: &str) -> Result<NodeId> {
        self.push(Op::Elu { input, alpha }, label)
    }

    pub fn global_avg_pool(&mut self, input: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::GlobalAvgPool(input), label)
    }

    pub fn avg_pool2(&mut self, input: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::AvgPool2(input), label)
    }

    pub fn pad_channels(&mut self, input: NodeId, channels: usize, label: &str) -> Result<NodeId> {
        self.push(Op::PadChannels { input, channels }, label)
    }

    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>, label: &str) -> Result<NodeId> {
        self.push(Op::Dense { input, weight, bias }, label)
    }

    pub fn softmax(&mut self, input: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::Softmax(input), label)
    }

    pub fn map(&mut self, input: NodeId, kind: MappingKind, label: &str) -> Result<NodeId> {
        kind.validate()?;
        if kind.is_adaptive() {
            return Err(Error::Graph("adaptive mappings need alpha/beta parameters; use adaptive_map".into()));
        }
        self.push(Op::Map { input, kind }, label)
    }

    pub fn adaptive_map(&mut self, input: NodeId, alpha: NodeId, beta: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::AdaptiveMap { input, alpha, beta }, label)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::Add(a, b), label)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::Mul(a, b), label)
    }

    pub fn sum(&mut self, input: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::Sum(input), label)
    }

    pub fn focal_loss(&mut self, probs: NodeId, target: NodeId, cfg: FocalLossConfig, label: &str) -> Result<NodeId> {
        self.push(Op::FocalLoss { probs, target, cfg }, label)
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId, label: &str) -> Result<NodeId> {
        self.push(Op::MseLoss { pred, target }, label)
    }

    pub fn mark_output(&mut self, name: &str, node: NodeId) {
        self.outputs.retain(|(n, _)| n != name);
        self.outputs.push((name.into(), node));
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, id)| id)
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    /// Inference-mode evaluation of every named output. Read-only on the
    /// store, so it may run concurrently over a shared frozen model.
    pub fn evaluate<T: Real>(&self, store: &ParamStore<T>, feeds: &Feeds<T>) -> Result<HashMap<String, Tensor<T>>> {
        let targets: Vec<NodeId> = self.outputs.iter().map(|&(_, id)| id).collect();
        let (mut acts, _) = self.run_forward(store, feeds, &targets, Mode::Infer, false)?;
        Ok(self.outputs.iter().map(|(name, id)| (name.clone(), acts.values[id.0].take().expect("computed"))).collect())
    }

    /// Values of `targets` in inference mode.
    pub fn evaluate_nodes<T: Real>(&self, store: &ParamStore<T>, feeds: &Feeds<T>, targets: &[NodeId]) -> Result<Vec<Tensor<T>>> {
        let (acts, _) = self.run_forward(store, feeds, targets, Mode::Infer, false)?;
        Ok(targets.iter().map(|id| acts.values[id.0].clone().expect("computed")).collect())
    }

    fn ancestors(&self, targets: &[NodeId]) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        for t in targets {
            needed[t.0] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if needed[i] {
                for input in self.nodes[i].op.inputs() {
                    needed[input.0] = true;
                }
            }
        }
        needed
    }

    fn run_forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        feeds: &Feeds<T>,
        targets: &[NodeId],
        mode: Mode,
        check_finite: bool,
    ) -> Result<(Activations<T>, Vec<StatUpdate<T>>)> {
        for t in targets {
            if t.0 >= self.nodes.len() {
                return Err(Error::Graph(format!("node {} is not part of this graph", t.0)));
            }
        }
        let needed = self.ancestors(targets);
        let mut acts = Activations { values: vec![None; self.nodes.len()], bn: vec![None; self.nodes.len()], mode };
        let mut updates = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if !needed[i] {
                continue;
            }
            let value = self
                .forward_node(i, node, store, feeds, &mut acts, &mut updates)
                .map_err(|e| match e {
                    Error::Shape(detail) => Error::NodeShape { node: i, op: node.op.kind(), detail },
                    other => other,
                })?;
            if check_finite && !value.is_finite() {
                return Err(Error::NonFinite { node: i, op: node.op.kind(), label: node.label.clone() });
            }
            acts.values[i] = Some(value);
        }
        Ok((acts, updates))
    }

    fn forward_node<T: Real>(
        &self,
        i: usize,
        node: &Node,
        store: &ParamStore<T>,
        feeds: &Feeds<T>,
        acts: &mut Activations<T>,
        updates: &mut Vec<StatUpdate<T>>,
    ) -> Result<Tensor<T>> {
        let v = |id: &NodeId| acts.values[id.0].as_ref().expect("operands precede their users");
        Ok(match &node.op {
            Op::Input { name, shape } => {
                let fed = feeds.get(name).ok_or_else(|| Error::MissingFeed(name.clone()))?;
                let ok = fed.rank() == shape.len()
                    && fed.shape().iter().zip(shape).all(|(&got, want)| want.is_none_or(|w| w == got));
                if !ok {
                    return Err(Error::Shape(format!("feed `{name}` has shape {:?}, declared {shape:?}", fed.shape())));
                }
                fed.clone()
            }
            Op::Param { name } => store.value(name)?.clone(),
            Op::Conv2d { input, kernel, stride, padding } => kernels::conv2d(v(input), v(kernel), *stride, *padding)?,
            Op::BatchNorm { input, gamma, beta, stats, eps, momentum } => {
                let eps_t = T::of(*eps);
                match acts.mode {
                    Mode::Train => {
                        let (y, batch) = kernels::batch_norm_train(v(input), v(gamma).data(), v(beta).data(), eps_t)?;
                        updates.push(StatUpdate {
                            stats: stats.clone(),
                            momentum: *momentum,
                            mean: batch.mean.clone(),
                            var: batch.var.clone(),
                        });
                        acts.bn[i] = Some(batch);
                        y
                    }
                    Mode::Infer => {
                        if store.value(&stats.updates)?.item() == T::zero() {
                            return Err(Error::NoRunningStats(node.label.clone()));
                        }
                        kernels::batch_norm_infer(
                            v(input),
                            v(gamma).data(),
                            v(beta).data(),
                            store.value(&stats.mean)?.data(),
                            store.value(&stats.var)?.data(),
                            eps_t,
                        )?
                    }
                }
            }
            Op::Elu { input, alpha } => kernels::elu(v(input), *alpha),
            Op::GlobalAvgPool(x) => kernels::global_avg_pool(v(x))?,
            Op::AvgPool2(x) => kernels::avg_pool2(v(x))?,
            Op::PadChannels { input, channels } => kernels::pad_channels(v(input), *channels)?,
            Op::Dense { input, weight, bias } => kernels::dense(v(input), v(weight), bias.as_ref().map(v))?,
            Op::Softmax(x) => kernels::softmax(v(x))?,
            Op::Map { input, kind } => v(input).map(|x| kind.value(x, MappingParams::arctan())),
            Op::AdaptiveMap { input, alpha, beta } => {
                let p = scalar_params(v(alpha), v(beta))?;
                mapping::breg_forward(v(input), p)
            }
            Op::Add(a, b) => {
                let (a, b) = (v(a), v(b));
                same_shape(a, b)?;
                let mut out = a.clone();
                out.add_assign(b);
                out
            }
            Op::Mul(a, b) => {
                let (a, b) = (v(a), v(b));
                same_shape(a, b)?;
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
                Tensor::new(a.shape().to_vec(), data)?
            }
            Op::Sum(x) => Tensor::scalar(v(x).sum()),
            Op::FocalLoss { probs, target, cfg } => Tensor::scalar(loss::focal_forward(v(probs), v(target), *cfg)?),
            Op::MseLoss { pred, target } => Tensor::scalar(loss::mse_loss(v(pred), v(target))?),
        })
    }

    fn run_backward<T: Real>(
        &self,
        acts: &Activations<T>,
        loss: NodeId,
        store: &mut ParamStore<T>,
        wrt_inputs: bool,
    ) -> Result<HashMap<String, Tensor<T>>> {
        let loss_value = acts.values.get(loss.0).and_then(Option::as_ref).ok_or(Error::BackwardBeforeForward)?;
        if loss_value.len() != 1 {
            return Err(Error::Graph(format!("loss node {} is not scalar: {:?}", loss.0, loss_value.shape())));
        }
        let n = loss.0 + 1;
        let mut requires = vec![false; n];
        for i in 0..n {
            requires[i] = match &self.nodes[i].op {
                Op::Param { name } => store.entry(name)?.trainable,
                Op::Input { .. } => wrt_inputs,
                op => op.inputs().iter().any(|d| requires[d.0]),
            };
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));
        let mut input_grads = HashMap::new();
        store.zero_grads();
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !requires[i] {
                continue;
            }
            let node = &self.nodes[i];
            let v = |id: &NodeId| acts.values[id.0].as_ref().expect("forward computed every ancestor");
            let mut push = |id: NodeId, contrib: Tensor<T>| {
                if !requires[id.0] {
                    return;
                }
                match &mut grads[id.0] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Input { name, .. } => {
                    input_grads.insert(name.clone(), g);
                }
                Op::Param { name } => store.accumulate_grad(name, &g)?,
                Op::Conv2d { input, kernel, stride, padding } => {
                    let (dx, dk) = kernels::conv2d_backward(v(input), v(kernel), *stride, *padding, &g, requires[input.0])?;
                    if let Some(dx) = dx {
                        push(*input, dx);
                    }
                    push(*kernel, dk);
                }
                Op::BatchNorm { input, gamma, beta, stats, eps, .. } => {
                    let (dx, dg, db) = match acts.mode {
                        Mode::Train => {
                            let batch = acts.bn[i].as_ref().expect("train forward caches statistics");
                            kernels::batch_norm_train_backward(v(input), v(gamma).data(), batch, &g)
                        }
                        Mode::Infer => kernels::batch_norm_infer_backward(
                            v(input),
                            v(gamma).data(),
                            store.value(&stats.mean)?.data(),
                            store.value(&stats.var)?.data(),
                            T::of(*eps),
                            &g,
                        ),
                    };
                    let c = dg.len();
                    push(*input, dx);
                    push(*gamma, Tensor::new([c], dg)?);
                    push(*beta, Tensor::new([c], db)?);
                }
                Op::Elu { input, alpha } => push(*input, kernels::elu_backward(v(input), *alpha, &g)),
                Op::GlobalAvgPool(x) => push(*x, kernels::global_avg_pool_backward(v(x).shape(), &g)),
                Op::AvgPool2(x) => push(*x, kernels::avg_pool2_backward(v(x).shape(), &g)),
                Op::PadChannels { input, .. } => push(*input, kernels::pad_channels_backward(v(input).shape(), &g)),
                Op::Dense { input, weight, bias } => {
                    let (dx, dw, db) = kernels::dense_backward(v(input), v(weight), &g);
                    push(*input, dx);
                    push(*weight, dw);
                    if let Some(b) = bias {
                        push(*b, db);
                    }
                }
                Op::Softmax(x) => {
                    let probs = acts.values[i].as_ref().expect("computed");
                    push(*x, kernels::softmax_backward(probs, &g));
                }
                Op::Map { input, kind } => {
                    let x = v(input);
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xi, &gi)| gi * kind.derivative(xi, MappingParams::arctan()))
                        .collect();
                    push(*input, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::AdaptiveMap { input, alpha, beta } => {
                    let x = v(input);
                    let p = scalar_params(v(alpha), v(beta))?;
                    let mut da = 0.0;
                    let mut db = 0.0;
                    let mut dx = Vec::with_capacity(x.len());
                    for (&xi, &gi) in x.data().iter().zip(g.data()) {
                        let (pa, pb) = mapping::breg_param_partials(xi.as_f64(), p);
                        da += gi.as_f64() * pa;
                        db += gi.as_f64() * pb;
                        dx.push(gi * mapping::breg_derivative_value(xi, p));
                    }
                    push(*input, Tensor::new(x.shape().to_vec(), dx)?);
                    push(*alpha, Tensor::from_f64([1], &[da])?);
                    push(*beta, Tensor::from_f64([1], &[db])?);
                }
                Op::Add(a, b) => {
                    push(*a, g.clone());
                    push(*b, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (v(a), v(b));
                    let ga = g.data().iter().zip(vb.data()).map(|(&gi, &y)| gi * y).collect();
                    let gb = g.data().iter().zip(va.data()).map(|(&gi, &x)| gi * x).collect();
                    push(*a, Tensor::new(va.shape().to_vec(), ga)?);
                    push(*b, Tensor::new(vb.shape().to_vec(), gb)?);
                }
                Op::Sum(x) => push(*x, Tensor::full(v(x).shape().to_vec(), g.item())),
                Op::FocalLoss { probs, target, cfg } => {
                    push(*probs, loss::focal_backward(v(probs), v(target), *cfg, g.item()));
                }
                Op::MseLoss { pred, target } => {
                    let d = loss::mse_backward(v(pred), v(target), g.item());
                    push(*target, d.map(|x| -x));
                    push(*pred, d);
                }
            }
        }
        store.mark_grads_ready(true);
        Ok(input_grads)
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("operands {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn scalar_params<T: Real>(alpha: &Tensor<T>, beta: &Tensor<T>) -> Result<MappingParams> {
    if alpha.len() != 1 || beta.len() != 1 {
        return Err(Error::Shape("mapping alpha and beta must be scalars".into()));
    }
    Ok(MappingParams::new(alpha.item().as_f64(), beta.item().as_f64()))
}

/// Per-node values (and batch-norm caches) of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations<T: Real> {
    values: Vec<Option<Tensor<T>>>,
    bn: Vec<Option<BatchStats<T>>>,
    mode: Mode,
}

impl<T: Real> Activations<T> {
    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Clone, Debug)]
struct StatUpdate<T> {
    stats: RunningStats,
    momentum: f64,
    mean: Vec<T>,
    var: Vec<T>,
}

fn apply_stat_update<T: Real>(store: &mut ParamStore<T>, u: &StatUpdate<T>) -> Result<()> {
    let count = store.value(&u.stats.updates)?.item();
    // The first update adopts the batch statistics outright.
    let m = if count == T::zero() { T::zero() } else { T::of(u.momentum) };
    let blend = |running: &mut Tensor<T>, batch: &[T]| {
        for (r, &b) in running.data_mut().iter_mut().zip(batch) {
            *r = m * *r + (T::one() - m) * b;
        }
    };
    blend(store.value_mut(&u.stats.mean)?, &u.mean);
    blend(store.value_mut(&u.stats.var)?, &u.var);
    store.value_mut(&u.stats.updates)?.data_mut()[0] = count + T::one();
    Ok(())
}

/// One forward/backward cycle over a graph.
pub struct Session<'g, T: Real> {
    graph: &'g Graph,
    acts: Option<Activations<T>>,
    /// Reject any node whose output contains NaN or ±Inf.
    pub check_finite: bool,
}

impl<'g, T: Real> Session<'g, T> {
    pub fn new(graph: &'g Graph) -> Self {
        Self { graph, acts: None, check_finite: true }
    }

    /// Runs the ancestors of `targets`. In training mode batch-norm running
    /// statistics in `store` are updated once the whole pass succeeded.
    pub fn forward(&mut self, store: &mut ParamStore<T>, feeds: &Feeds<T>, targets: &[NodeId], mode: Mode) -> Result<()> {
        self.acts = None;
        let (acts, updates) = self.graph.run_forward(store, feeds, targets, mode, self.check_finite)?;
        for u in &updates {
            apply_stat_update(store, u)?;
        }
        self.acts = Some(acts);
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor<T>> {
        self.acts
            .as_ref()
            .ok_or(Error::BackwardBeforeForward)?
            .value(id)
            .ok_or_else(|| Error::Graph(format!("node {} was not evaluated", id.0)))
    }

    pub fn activations(&self) -> Option<&Activations<T>> {
        self.acts.as_ref()
    }

    /// Populates gradients of every trainable parameter in `store`.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        let acts = self.acts.as_ref().ok_or(Error::BackwardBeforeForward)?;
        self.graph.run_backward(acts, loss, store, false).map(|_| ())
    }

    /// As [`Session::backward`], also returning gradients for every fed input.
    pub fn backward_with_inputs(&mut self, loss: NodeId, store: &mut ParamStore<T>) -> Result<HashMap<String, Tensor<T>>> {
        let acts = self.acts.as_ref().ok_or(Error::BackwardBeforeForward)?;
        self.graph.run_backward(acts, loss, store, true)
    }
}
