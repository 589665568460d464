//! Mini-batch training loop and its log.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Mode, Session};
use crate::loss::one_hot;
use crate::mapping::MappingParams;
use crate::network::{Head, Model};
use crate::optim::{adam_step, AdamConfig, LrSchedule, OptimizerState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 128,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Rmse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Rmse => "rmse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// Training accuracy or RMSE over the epoch's (augmented) batches.
    pub metric: f64,
    pub mappings: Vec<MappingParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub metric: MetricKind,
    pub units: usize,
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn header(&self) -> String {
        let mut h = format!("epoch,lr,loss,{}", self.metric.name());
        for i in 1..=self.units {
            write!(h, ",alpha_{i:02}").expect("string write");
        }
        for i in 1..=self.units {
            write!(h, ",beta_{i:02}").expect("string write");
        }
        h
    }

    /// CSV row of one record; floats use their shortest exact form.
    pub fn row(&self, r: &EpochRecord) -> String {
        let mut s = format!("{},{},{},{}", r.epoch, r.lr, r.loss, r.metric);
        for m in &r.mappings {
            write!(s, ",{}", m.alpha).expect("string write");
        }
        for m in &r.mappings {
            write!(s, ",{}", m.beta).expect("string write");
        }
        s
    }

    pub fn lines(&self) -> Vec<String> {
        self.records.iter().map(|r| self.row(r)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for l in self.lines() {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Sums over one batch, before averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub samples: usize,
    /// Correct predictions (categorical) or summed squared error (dimensional).
    pub score: f64,
}

/// Owns optimizer state and the shuffling/augmentation stream of one run.
pub struct Trainer {
    pub config: TrainConfig,
    optimizer: OptimizerState<f32>,
    rng: ChaCha8Rng,
    epoch: usize,
    log: TrainLog,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: &Model<f32>) -> Result<Self> {
        config.augment.validate()?;
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let metric = match model.config.head {
            Head::Categorical { .. } => MetricKind::Accuracy,
            Head::Dimensional => MetricKind::Rmse,
        };
        Ok(Self {
            config,
            optimizer: OptimizerState::new(config.adam, config.schedule),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            epoch: 0,
            log: TrainLog { metric, units: model.mapping_params().len(), records: Vec::new() },
        })
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn into_log(self) -> TrainLog {
        self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Head targets for `indices` of `data`.
    pub fn targets(model: &Model<f32>, data: &Dataset, indices: &[usize]) -> Result<Tensor<f32>> {
        match model.config.head {
            Head::Categorical { classes } => {
                let labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
                one_hot(&labels, classes)
            }
            Head::Dimensional => {
                let va = data
                    .dimensional
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("dataset `{}` has no dimensional labels", data.name)))?;
                let rows: Vec<f32> = indices.iter().flat_map(|&i| [va.data()[2 * i], va.data()[2 * i + 1]]).collect();
                Tensor::new([indices.len(), 2], rows)
            }
        }
    }

    /// One forward/backward/update on raw images with head targets.
    pub fn step(&mut self, model: &mut Model<f32>, images: Tensor<f32>, targets: Tensor<f32>, lr: f64) -> Result<StepOutcome> {
        let n = images.shape()[0];
        let feeds = model.feeds(images, targets.clone());
        let head = model.probs.unwrap_or(model.output);
        let mut session = Session::new(&model.graph);
        session.forward(&mut model.store, &feeds, &[model.loss, head], Mode::Train)?;
        let loss = session.value(model.loss)?.item() as f64;
        let out = session.value(head)?;
        let k = out.shape()[1];
        let score = match model.config.head {
            Head::Categorical { .. } => out
                .data()
                .chunks(k)
                .zip(targets.data().chunks(k))
                .filter(|(p, t)| argmax(p) == argmax(t))
                .count() as f64,
            Head::Dimensional => out.data().iter().zip(targets.data()).map(|(&p, &t)| ((p - t) as f64).powi(2)).sum(),
        };
        session.backward(model.loss, &mut model.store)?;
        adam_step(&mut model.store, &mut self.optimizer, lr)?;
        Ok(StepOutcome { loss: loss * n as f64, samples: n, score })
    }

    /// One shuffled pass over `data` (final partial batch kept).
    pub fn run_epoch(&mut self, model: &mut Model<f32>, data: &Dataset) -> Result<&EpochRecord> {
        let epoch = self.epoch;
        let lr = self.optimizer.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let [h, w, c] = data.image_shape();
        let per = h * w * c;
        let mut total = StepOutcome::default();
        for batch in order.chunks(self.config.batch_size) {
            let mut pixels = Vec::with_capacity(batch.len() * per);
            for &i in batch {
                let start = pixels.len();
                pixels.extend_from_slice(&data.images.data()[i * per..(i + 1) * per]);
                augment(&mut pixels[start..], h, w, c, &self.config.augment, &mut self.rng);
            }
            let images = Tensor::new([batch.len(), h, w, c], pixels)?;
            let targets = Self::targets(model, data, batch)?;
            let out = self
                .step(model, images, targets, lr)
                .map_err(|e| if e.is_numerical() { Error::Diverged { epoch, source: Box::new(e) } } else { e })?;
            total.loss += out.loss;
            total.samples += out.samples;
            total.score += out.score;
        }
        let n = total.samples.max(1) as f64;
        let metric = match self.log.metric {
            MetricKind::Accuracy => total.score / n,
            MetricKind::Rmse => (total.score / (2.0 * n)).sqrt(),
        };
        self.log.records.push(EpochRecord { epoch, lr, loss: total.loss / n, metric, mappings: model.mapping_params() });
        self.epoch += 1;
        Ok(self.log.records.last().expect("just pushed"))
    }
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains for `cfg.epochs` passes. The model's input means are set from
/// `data` before the first epoch; with zero epochs nothing is touched.
pub fn train_epochs(
    model: &mut Model<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    let mut trainer = Trainer::new(*cfg, model)?;
    if cfg.epochs == 0 {
        return Ok(trainer.into_log());
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if data.image_shape() != model.config.input {
        return Err(Error::Shape(format!(
            "dataset images are {:?} but the network expects {:?}",
            data.image_shape(),
            model.config.input
        )));
    }
    model.input_mean = data.channel_means();
    for _ in 0..cfg.epochs {
        on_epoch(trainer.run_epoch(model, data)?);
    }
    Ok(trainer.into_log())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::network::{build_network, depth_config, BuildOptions};

    fn small() -> (Model<f32>, Dataset) {
        let data = synth_blobs(4, 4, 3).unwrap().downsample(8).unwrap();
        let cfg = depth_config(26).unwrap().with_input(8, 8);
        (build_network(&cfg, &BuildOptions::default()).unwrap(), data)
    }

    #[test]
    fn zero_epochs_touch_nothing() {
        let (mut m, data) = small();
        let before: Vec<_> = m.store.iter().map(|e| e.value.clone()).collect();
        let log = train_epochs(&mut m, &data, &TrainConfig { epochs: 0, ..Default::default() }, |_| {}).unwrap();
        assert!(log.records.is_empty());
        assert!(m.store.iter().zip(&before).all(|(e, b)| &e.value == b));
        assert_eq!(m.input_mean, vec![0.0; 3]);
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let cfg = TrainConfig { epochs: 2, batch_size: 6, seed: 11, augment: AugmentConfig { probability: 0.5, ..Default::default() }, ..Default::default() };
        let run = || {
            let (mut m, data) = small();
            train_epochs(&mut m, &data, &cfg, |_| {}).unwrap().to_csv()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.lines().count(), 3);
        assert!(a.starts_with("epoch,lr,loss,accuracy,alpha_01"));
    }

    #[test]
    fn dimensional_log_reports_rmse() {
        let (_, data) = small();
        let cfg = depth_config(26).unwrap().with_input(8, 8).with_head(Head::Dimensional);
        let mut m: Model<f32> = build_network(&cfg, &BuildOptions::default()).unwrap();
        let log = train_epochs(&mut m, &data, &TrainConfig { epochs: 1, batch_size: 8, ..Default::default() }, |_| {}).unwrap();
        assert!(log.to_csv().starts_with("epoch,lr,loss,rmse"));
        assert!(log.records[0].metric.is_finite());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut m, _) = small();
        let data = synth_blobs(2, 2, 0).unwrap();
        assert!(train_epochs(&mut m, &data, &TrainConfig::default(), |_| {}).is_err());
    }
}
