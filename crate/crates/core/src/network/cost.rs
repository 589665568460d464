use serde::Serialize;

use super::build::Model;
use crate::error::{Error, Result};
use crate::graph::Op;
use crate::kernels::ConvGeometry;
use crate::mapping::MappingKind;
use crate::tensor::Real;

/// Elementwise FLOPs charged per output element.
const BN_FLOPS: u64 = 2;
const ELU_FLOPS: u64 = 1;
const MAP_FLOPS: u64 = 4;
const ADD_FLOPS: u64 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub parameters: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub parameters: u64,
    pub flops: u64,
    pub layers: Vec<LayerCost>,
}

fn layer_of(name: &str) -> &str {
    name.rsplit_once('/').map_or(name, |(head, _)| head)
}

fn charge(layers: &mut Vec<LayerCost>, name: &str, parameters: u64, flops: u64) {
    match layers.iter_mut().find(|l| l.name == name) {
        Some(l) => {
            l.parameters += parameters;
            l.flops += flops;
        }
        None => layers.push(LayerCost { name: name.into(), parameters, flops }),
    }
}

/// All trainable scalars (weights, biases, BN scale/shift and mapping
/// parameters; running statistics excluded), grouped by layer.
pub fn count_parameters<T: Real>(model: &Model<T>) -> CostReport {
    let mut layers = Vec::new();
    for e in model.store.iter().filter(|e| e.role.is_trainable()) {
        charge(&mut layers, layer_of(&e.name), e.value.len() as u64, 0);
    }
    let parameters = layers.iter().map(|l| l.parameters).sum();
    CostReport { parameters, flops: 0, layers }
}

/// Inference cost of one `height × width` image: 2·MACs for convolutions
/// and the dense head plus fixed per-element charges for normalization,
/// activations, bypass mappings, pooling and additions. Loss nodes are
/// excluded. Parameters are included so the report is complete.
pub fn count_flops<T: Real>(model: &Model<T>, height: usize, width: usize) -> Result<CostReport> {
    let graph = &model.graph;
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(graph.len());
    let mut report = count_parameters(model);
    for node in graph.nodes() {
        let of = |id: crate::graph::NodeId| shapes[id.index()].clone();
        let numel = |s: &[usize]| s.iter().product::<usize>() as u64;
        let (shape, flops) = match &node.op {
            Op::Input { name, shape } if name == super::build::IMAGE_FEED => {
                let c = shape.get(3).copied().flatten().unwrap_or(3);
                (vec![1, height, width, c], 0)
            }
            Op::Input { shape, .. } => (shape.iter().map(|d| d.unwrap_or(1)).collect(), 0),
            Op::Param { name } => (model.store.value(name)?.shape().to_vec(), 0),
            Op::Conv2d { input, kernel, stride, padding } => {
                let geo = ConvGeometry::new(&of(*input), &of(*kernel), *stride, *padding)?;
                (geo.output_shape().to_vec(), 2 * geo.macs())
            }
            Op::BatchNorm { input, .. } => {
                let s = of(*input);
                let f = BN_FLOPS * numel(&s);
                (s, f)
            }
            Op::Elu { input, .. } => {
                let s = of(*input);
                let f = ELU_FLOPS * numel(&s);
                (s, f)
            }
            Op::Map { input, kind } => {
                let s = of(*input);
                let f = if *kind == MappingKind::Identity { 0 } else { MAP_FLOPS * numel(&s) };
                (s, f)
            }
            Op::AdaptiveMap { input, .. } => {
                let s = of(*input);
                let f = MAP_FLOPS * numel(&s);
                (s, f)
            }
            Op::GlobalAvgPool(input) => {
                let s = of(*input);
                (vec![s[0], s[3]], numel(&s))
            }
            Op::AvgPool2(input) => {
                let s = of(*input);
                (vec![s[0], s[1].div_ceil(2), s[2].div_ceil(2), s[3]], numel(&s))
            }
            Op::PadChannels { input, channels } => {
                let mut s = of(*input);
                s[3] = *channels;
                (s, 0)
            }
            Op::Dense { input, weight, bias } => {
                let (x, w) = (of(*input), of(*weight));
                let macs = (x[0] * w[0] * w[1]) as u64;
                let extra = if bias.is_some() { (x[0] * w[1]) as u64 } else { 0 };
                (vec![x[0], w[1]], 2 * macs + extra)
            }
            Op::Softmax(input) => {
                let s = of(*input);
                let f = 3 * numel(&s);
                (s, f)
            }
            Op::Add(a, _) | Op::Mul(a, _) => {
                let s = of(*a);
                let f = ADD_FLOPS * numel(&s);
                (s, f)
            }
            Op::Sum(_) | Op::FocalLoss { .. } | Op::MseLoss { .. } => (vec![1], 0),
        };
        if flops > 0 {
            charge(&mut report.layers, &node.label, 0, flops);
        }
        shapes.push(shape);
    }
    if shapes.is_empty() {
        return Err(Error::Graph("cannot cost an empty graph".into()));
    }
    report.flops = report.layers.iter().map(|l| l.flops).sum();
    Ok(report)
}
