use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Head, NetworkConfig, ResidualUnitConfig};
use crate::error::{Error, Result};
use crate::graph::{Feeds, Graph, NodeId, RunningStats};
use crate::kernels::Padding;
use crate::loss::FocalLossConfig;
use crate::mapping::{MappingKind, MappingParams};
use crate::params::{ParamRole, ParamStore};
use crate::tensor::{Real, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const ELU_ALPHA: f64 = 1.0;

/// Feed names used by every built model.
pub const IMAGE_FEED: &str = "image";
pub const TARGET_FEED: &str = "target";

#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub struct BuildOptions {
    pub seed: u64,
    pub focal: FocalLossConfig,
}


/// Zero-mean Gaussian initializer with `std = sqrt(2 / fan_in)`.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn he_normal<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(normal.sample(&mut self.rng))).collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches")
    }
}

/// Graph handles of one residual unit.
#[derive(Clone, Debug)]
pub struct UnitHandle {
    pub name: String,
    pub config: ResidualUnitConfig,
    pub input: NodeId,
    pub conv1: NodeId,
    pub conv2: NodeId,
    pub bypass: NodeId,
    pub output: NodeId,
    /// Parameter names of `(α, β)` for adaptive units.
    pub mapping: Option<(String, String)>,
}

fn batch_norm<T: Real>(graph: &mut Graph, store: &mut ParamStore<T>, name: &str, x: NodeId, channels: usize) -> Result<NodeId> {
    let p = |s: &str| format!("{name}/{s}");
    store.insert(p("gamma"), ParamRole::BnScale, Tensor::ones([channels]))?;
    store.insert(p("beta"), ParamRole::BnShift, Tensor::zeros([channels]))?;
    store.insert(p("running_mean"), ParamRole::BnRunningMean, Tensor::zeros([channels]))?;
    store.insert(p("running_var"), ParamRole::BnRunningVar, Tensor::ones([channels]))?;
    store.insert(p("updates"), ParamRole::BnUpdates, Tensor::zeros([1]))?;
    let gamma = graph.param(&p("gamma"));
    let beta = graph.param(&p("beta"));
    let stats = RunningStats { mean: p("running_mean"), var: p("running_var"), updates: p("updates") };
    graph.batch_norm(x, gamma, beta, stats, BN_EPSILON, BN_MOMENTUM, name)
}

#[allow(clippy::too_many_arguments)]
fn conv3x3<T: Real>(
    graph: &mut Graph,
    store: &mut ParamStore<T>,
    init: &mut Initializer,
    name: &str,
    x: NodeId,
    cin: usize,
    cout: usize,
    stride: usize,
) -> Result<NodeId> {
    let kname = format!("{name}/kernel");
    store.insert(kname.clone(), ParamRole::ConvKernel, init.he_normal(&[3, 3, cin, cout], 9 * cin))?;
    let k = graph.param(&kname);
    graph.conv2d(x, k, stride, Padding::Same, name)
}

/// Appends one pre-activation residual unit reading `input`:
/// `F = conv(ELU(BN(conv(ELU(BN(x))))))`, bypass `H(x)` (average-pooled and
/// zero-padded to the new width on transitions), output `H(x) + F`.
pub fn build_unit<T: Real>(
    graph: &mut Graph,
    store: &mut ParamStore<T>,
    init: &mut Initializer,
    name: &str,
    cfg: &ResidualUnitConfig,
    input: NodeId,
) -> Result<UnitHandle> {
    cfg.validate()?;
    let bn1 = batch_norm(graph, store, &format!("{name}/bn1"), input, cfg.in_channels)?;
    let a1 = graph.elu(bn1, ELU_ALPHA, &format!("{name}/elu1"))?;
    let conv1 = conv3x3(graph, store, init, &format!("{name}/conv1"), a1, cfg.in_channels, cfg.out_channels, cfg.stride)?;
    let bn2 = batch_norm(graph, store, &format!("{name}/bn2"), conv1, cfg.out_channels)?;
    let a2 = graph.elu(bn2, ELU_ALPHA, &format!("{name}/elu2"))?;
    let conv2 = conv3x3(graph, store, init, &format!("{name}/conv2"), a2, cfg.out_channels, cfg.out_channels, 1)?;

    let mut mapping = None;
    let mut bypass = match cfg.bypass {
        MappingKind::Identity => input,
        MappingKind::Adaptive => {
            let (an, bn) = (format!("{name}/alpha"), format!("{name}/beta"));
            let init = MappingParams::arctan();
            store.insert(an.clone(), ParamRole::MappingAlpha, Tensor::from_f64([1], &[init.alpha])?)?;
            store.insert(bn.clone(), ParamRole::MappingBeta, Tensor::from_f64([1], &[init.beta])?)?;
            let (a, b) = (graph.param(&an), graph.param(&bn));
            mapping = Some((an, bn));
            graph.adaptive_map(input, a, b, &format!("{name}/bypass"))?
        }
        kind => graph.map(input, kind, &format!("{name}/bypass"))?,
    };
    if cfg.stride == 2 {
        bypass = graph.avg_pool2(bypass, &format!("{name}/bypass_pool"))?;
    }
    if cfg.out_channels > cfg.in_channels {
        bypass = graph.pad_channels(bypass, cfg.out_channels, &format!("{name}/bypass_pad"))?;
    }
    let output = graph.add(bypass, conv2, &format!("{name}/sum"))?;
    Ok(UnitHandle { name: name.into(), config: *cfg, input, conv1, conv2, bypass, output, mapping })
}

/// A built network: graph, parameters and the handles needed to drive it.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub config: NetworkConfig,
    pub graph: Graph,
    pub store: ParamStore<T>,
    pub image: NodeId,
    pub target: NodeId,
    pub stem: NodeId,
    pub units: Vec<UnitHandle>,
    /// Final normalized activation map ahead of global pooling.
    pub features: NodeId,
    /// Logits (categorical) or the linear prediction (dimensional).
    pub output: NodeId,
    pub probs: Option<NodeId>,
    pub loss: NodeId,
    pub focal: FocalLossConfig,
    /// Per-channel means subtracted from images before they enter the graph.
    pub input_mean: Vec<f64>,
}

/// stem conv → residual stages → BN → ELU → global average pool → dense head,
/// with the loss appended (focal for categorical, MSE for dimensional).
pub fn build_network<T: Real>(cfg: &NetworkConfig, opts: &BuildOptions) -> Result<Model<T>> {
    cfg.validate()?;
    let mut graph = Graph::new();
    let mut store = ParamStore::new();
    let mut init = Initializer::new(opts.seed);
    let [h, w, c] = cfg.input;
    let image = graph.input(IMAGE_FEED, &[None, Some(h), Some(w), Some(c)]);
    let stem = {
        let kname = "stem/kernel";
        store.insert(kname, ParamRole::ConvKernel, init.he_normal::<T>(&[3, 3, c, cfg.stem.channels], 9 * c))?;
        let k = graph.param(kname);
        graph.conv2d(image, k, cfg.stem.stride, Padding::Same, "stem")?
    };
    let mut x = stem;
    let mut units = Vec::with_capacity(cfg.total_units());
    for (i, unit_cfg) in cfg.units().iter().enumerate() {
        let handle = build_unit(&mut graph, &mut store, &mut init, &format!("unit{:02}", i + 1), unit_cfg, x)?;
        x = handle.output;
        units.push(handle);
    }
    let width = units.last().map_or(cfg.stem.channels, |u| u.config.out_channels);
    let bn = batch_norm(&mut graph, &mut store, "final/bn", x, width)?;
    let features = graph.elu(bn, ELU_ALPHA, "final/elu")?;
    let pooled = graph.global_avg_pool(features, "pool")?;

    let k = cfg.head.outputs();
    store.insert("head/weight", ParamRole::DenseWeight, init.he_normal::<T>(&[width, k], width))?;
    store.insert("head/bias", ParamRole::DenseBias, Tensor::zeros([k]))?;
    let (wn, bn_) = (graph.param("head/weight"), graph.param("head/bias"));
    let output = graph.dense(pooled, wn, Some(bn_), "head")?;
    let target = graph.input(TARGET_FEED, &[None, Some(k)]);
    let (probs, loss) = match cfg.head {
        Head::Categorical { .. } => {
            let probs = graph.softmax(output, "probs")?;
            graph.mark_output("probs", probs);
            (Some(probs), graph.focal_loss(probs, target, opts.focal, "loss")?)
        }
        Head::Dimensional => (None, graph.mse_loss(output, target, "loss")?),
    };
    graph.mark_output("output", output);
    Ok(Model {
        config: cfg.clone(),
        graph,
        store,
        image,
        target,
        stem,
        units,
        features,
        output,
        probs,
        loss,
        focal: opts.focal,
        input_mean: vec![0.0; c],
    })
}

impl<T: Real> Model<T> {
    /// Head output in inference mode for raw `[0, 1]` images:
    /// probabilities or (valence, arousal).
    pub fn predict(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let node = self.probs.unwrap_or(self.output);
        self.evaluate(images, &[node]).map(|mut v| v.remove(0))
    }

    /// Inference-mode values of `nodes` for raw `[0, 1]` images.
    pub fn evaluate(&self, images: &Tensor<T>, nodes: &[NodeId]) -> Result<Vec<Tensor<T>>> {
        let feeds = self.image_feeds(images.clone());
        self.graph.evaluate_nodes(&self.store, &feeds, nodes)
    }

    /// Subtracts [`Model::input_mean`] from every pixel.
    pub fn center(&self, mut images: Tensor<T>) -> Tensor<T> {
        crate::augment::zero_center(&mut images, &self.input_mean);
        images
    }

    /// Feeds for raw images (centered here).
    pub fn image_feeds(&self, images: Tensor<T>) -> Feeds<T> {
        Feeds::from([(IMAGE_FEED.to_string(), self.center(images))])
    }

    /// Feeds for raw images (centered here) and head targets.
    pub fn feeds(&self, images: Tensor<T>, targets: Tensor<T>) -> Feeds<T> {
        Feeds::from([(IMAGE_FEED.to_string(), self.center(images)), (TARGET_FEED.to_string(), targets)])
    }

    /// Current `(α, β)` of every adaptive unit, in network order.
    pub fn mapping_params(&self) -> Vec<MappingParams> {
        self.units
            .iter()
            .filter_map(|u| u.mapping.as_ref())
            .map(|(a, b)| {
                MappingParams::new(
                    self.store.value(a).expect("registered").item().as_f64(),
                    self.store.value(b).expect("registered").item().as_f64(),
                )
            })
            .collect()
    }

    pub fn set_mapping_params(&mut self, params: MappingParams) -> Result<()> {
        for (a, b) in self.units.iter().filter_map(|u| u.mapping.as_ref()) {
            self.store.value_mut(a)?.data_mut()[0] = T::of(params.alpha);
            self.store.value_mut(b)?.data_mut()[0] = T::of(params.beta);
        }
        Ok(())
    }

    /// Excludes every `(α, β)` from optimization.
    pub fn freeze_mappings(&mut self) -> Result<()> {
        for (a, b) in self.units.iter().filter_map(|u| u.mapping.clone()) {
            self.store.set_trainable(&a, false)?;
            self.store.set_trainable(&b, false)?;
        }
        Ok(())
    }

    /// Same model at another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            graph: self.graph.clone(),
            store: self.store.cast(),
            image: self.image,
            target: self.target,
            stem: self.stem,
            units: self.units.clone(),
            features: self.features,
            output: self.output,
            probs: self.probs,
            loss: self.loss,
            focal: self.focal,
            input_mean: self.input_mean.clone(),
        }
    }

    /// Node behind a depth selector: 1 is the stem convolution, `2..=2U+1`
    /// the two convolutions of each unit in order, and `2U+2` the final
    /// activation map.
    pub fn layer_node(&self, depth: usize) -> Result<NodeId> {
        let last = 2 * self.units.len() + 2;
        match depth {
            1 => Ok(self.stem),
            d if d >= 2 && d < last => {
                let unit = &self.units[(d - 2) / 2];
                Ok(if (d - 2) % 2 == 0 { unit.conv1 } else { unit.conv2 })
            }
            d if d == last => Ok(self.features),
            d => Err(Error::InvalidArgument(format!("layer {d} does not exist (valid: 1..={last})"))),
        }
    }

    pub fn layer_count(&self) -> usize {
        2 * self.units.len() + 2
    }
}
