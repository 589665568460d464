//! File-producing commands behind the `bregnext` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::augment::AugmentConfig;
use crate::data::{load_checkpoint, load_fer2013, save_checkpoint, synth_blobs, Dataset, Split};
use crate::error::{Error, Result};
use crate::mapping::{linspace, mapping_curve, write_curve_csv, CurvePoint, MappingKind, MappingParams};
use crate::metrics::{error_histogram, histogram_edges, ClassReport, DimensionalReport};
use crate::network::{
    build_network, config_by_name, count_flops, count_parameters, BuildOptions, Head, Model, NetworkConfig, DEPTH_SERIES,
};
use crate::optim::LrSchedule;
use crate::tensor::Tensor;
use crate::train::{train_epochs, TrainConfig, TrainLog};

/// Environment switch recorded in manifests; every kernel here is
/// sequential, so runs are deterministic whatever its value.
pub const DETERMINISTIC_ENV: &str = "BREG_DETERMINISTIC";

pub fn deterministic_mode() -> bool {
    std::env::var(DETERMINISTIC_ENV).map_or(true, |v| v != "0" && !v.eq_ignore_ascii_case("false"))
}

/// Where a dataset comes from: `synth[:K=8,n=200,seed=0]` or `fer2013:PATH`.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Synth { classes: usize, per_class: usize, seed: u64 },
    Fer2013(PathBuf),
}

impl DataSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        match kind.to_ascii_lowercase().as_str() {
            "synth" => {
                let (mut classes, mut per_class, mut seed) = (8, 200, 0);
                for kv in rest.split(',').filter(|s| !s.is_empty()) {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::InvalidArgument(format!("expected key=value in `{kv}`")))?;
                    let n: u64 = v.parse().map_err(|_| Error::InvalidArgument(format!("bad number `{v}` in data spec")))?;
                    match k {
                        "K" | "k" => classes = n as usize,
                        "n" => per_class = n as usize,
                        "seed" => seed = n,
                        _ => return Err(Error::InvalidArgument(format!("unknown synth option `{k}`"))),
                    }
                }
                Ok(DataSpec::Synth { classes, per_class, seed })
            }
            "fer2013" if !rest.is_empty() => Ok(DataSpec::Fer2013(rest.into())),
            _ => Err(Error::InvalidArgument(format!("unrecognized data spec `{spec}` (synth:K=..,n=..,seed=.. or fer2013:PATH)"))),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSpec::Synth { classes, per_class, seed } => synth_blobs(*classes, *per_class, *seed),
            DataSpec::Fer2013(path) => load_fer2013(path),
        }
    }
}

/// Brings images to the network's input size by integer box downsampling.
pub fn fit_to_input(data: Dataset, cfg: &NetworkConfig) -> Result<Dataset> {
    let [h, w, _] = data.image_shape();
    let [ih, iw, _] = cfg.input;
    if (h, w) == (ih, iw) {
        return Ok(data);
    }
    if h % ih == 0 && w % iw == 0 && h / ih == w / iw {
        return data.downsample(h / ih);
    }
    Err(Error::Shape(format!("cannot bring {h}×{w} images to the network's {ih}×{iw} input")))
}

/// Inputs recorded alongside every run's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self { command: command.into(), entries: Vec::new() };
        m.set("deterministic", deterministic_mode());
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command: {}\n", self.command);
        for (k, v) in &self.entries {
            writeln!(s, "{k}: {v}").expect("string write");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.txt"), self.to_text())?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainRequest {
    pub arch: String,
    /// JSON network config used instead of `arch` when present.
    pub config: Option<PathBuf>,
    pub head: Head,
    pub data: DataSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Integer factor the 64×64 images are box-downsampled by.
    pub downsample: usize,
    pub augment: bool,
    pub out_dir: PathBuf,
}

impl Default for TrainRequest {
    fn default() -> Self {
        Self {
            arch: "BReG-NeXt-50".into(),
            config: None,
            head: Head::categorical(),
            data: DataSpec::Synth { classes: 8, per_class: 200, seed: 0 },
            epochs: 1,
            batch_size: 128,
            lr: LrSchedule::default().base,
            seed: 0,
            downsample: 1,
            augment: true,
            out_dir: PathBuf::from("runs/train"),
        }
    }
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub log: TrainLog,
    pub out_dir: PathBuf,
}

/// Trains and writes `manifest.txt`, `log.csv`, `model.bngx` and
/// `reports/dataset_stats.json` under `out_dir`.
pub fn run_train(req: &TrainRequest) -> Result<TrainOutcome> {
    let data = req.data.load()?;
    let data = if req.downsample > 1 { data.downsample(req.downsample)? } else { data };
    let [h, w, _] = data.image_shape();
    let base = match &req.config {
        Some(path) => NetworkConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => config_by_name(&req.arch)?,
    };
    let head = match req.head {
        Head::Categorical { .. } => Head::Categorical { classes: base.head.categorical_classes().unwrap_or(8).max(data.classes()) },
        Head::Dimensional => Head::Dimensional,
    };
    let cfg = base.with_head(head).with_input(h, w);
    let mut model: Model<f32> = build_network(&cfg, &BuildOptions { seed: req.seed, ..Default::default() })?;
    let train_cfg = TrainConfig {
        epochs: req.epochs,
        batch_size: req.batch_size,
        schedule: LrSchedule { base: req.lr, ..Default::default() },
        augment: if req.augment { AugmentConfig::default() } else { AugmentConfig::disabled() },
        seed: req.seed,
        ..Default::default()
    };
    let train_data = if data.splits.contains(&Split::Train) { data.split(Split::Train) } else { data };

    std::fs::create_dir_all(req.out_dir.join("reports"))?;
    let mut manifest = RunManifest::new("train");
    manifest.set("arch", &cfg.name);
    if let Some(p) = &req.config {
        manifest.set("config", p.display());
    }
    manifest.set("head", serde_json::to_string(&cfg.head)?);
    manifest.set("data", &train_data.name);
    manifest.set("input", format!("{h}x{w}"));
    manifest.set("downsample", req.downsample);
    manifest.set("seed", req.seed);
    manifest.set("epochs", req.epochs);
    manifest.set("batch_size", req.batch_size);
    manifest.set("lr", req.lr);
    manifest.set("augment", req.augment);
    manifest.set("out_dir", req.out_dir.display());
    manifest.write(&req.out_dir)?;
    train_data.stats().write_json(&req.out_dir.join("reports/dataset_stats.json"))?;

    let log = train_epochs(&mut model, &train_data, &train_cfg, |r| {
        eprintln!("epoch {:3}  lr {:.3e}  loss {:.6}  metric {:.4}", r.epoch, r.lr, r.loss, r.metric);
    })?;
    log.write_csv(req.out_dir.join("log.csv"))?;
    let tail: Vec<String> = log.lines().into_iter().rev().take(5).rev().collect();
    save_checkpoint(&model, &tail, req.out_dir.join("model.bngx"))?;
    Ok(TrainOutcome { model, log, out_dir: req.out_dir.clone() })
}

/// Side-by-side final-epoch summary of several runs.
pub fn comparison_table(runs: &[(String, &TrainLog, u64)]) -> String {
    let mut s = String::from("arch,parameters,epochs,final_loss,final_metric\n");
    for (name, log, params) in runs {
        let (loss, metric) = log.last().map_or((f64::NAN, f64::NAN), |r| (r.loss, r.metric));
        writeln!(s, "{name},{params},{},{loss},{metric}", log.records.len()).expect("string write");
    }
    s
}

#[derive(Clone, Debug)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub data: DataSpec,
    pub split: Option<Split>,
    /// Score the ground truth against itself instead of the model.
    pub oracle: bool,
    pub batch_size: usize,
    pub histogram_bins: usize,
    pub out_dir: PathBuf,
}

/// Predictions in batches: class indices or `N×2` (valence, arousal).
pub fn predict_all(model: &Model<f32>, data: &Dataset, batch: usize) -> Result<Tensor<f32>> {
    let mut rows = Vec::new();
    let mut k = 0;
    for start in (0..data.len()).step_by(batch.max(1)) {
        let end = (start + batch.max(1)).min(data.len());
        let out = model.predict(&data.images.slice_batch(start, end))?;
        k = out.shape()[1];
        rows.extend_from_slice(out.data());
    }
    Tensor::new([data.len(), k], rows)
}

fn argmax_rows(t: &Tensor<f32>) -> Vec<usize> {
    let k = t.shape()[1];
    t.data()
        .chunks(k)
        .map(|r| r.iter().enumerate().fold(0, |best, (i, &v)| if v > r[best] { i } else { best }))
        .collect()
}

pub enum EvalReport {
    Categorical(ClassReport),
    Dimensional(DimensionalReport),
}

/// Scores a checkpoint and writes `reports/` plus `manifest.txt`.
pub fn run_eval(req: &EvalRequest) -> Result<EvalReport> {
    let model = load_checkpoint(&req.checkpoint)?.model;
    let mut data = req.data.load()?;
    if let Some(split) = req.split {
        data = data.split(split);
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("the selected split is empty".into()));
    }
    let data = fit_to_input(data, &model.config)?;
    let reports = req.out_dir.join("reports");
    std::fs::create_dir_all(&reports)?;
    let mut manifest = RunManifest::new("eval");
    manifest.set("checkpoint", req.checkpoint.display());
    manifest.set("arch", &model.config.name);
    manifest.set("data", &data.name);
    manifest.set("split", req.split.map_or("all".into(), |s| format!("{s:?}").to_lowercase()));
    manifest.set("oracle", req.oracle);
    manifest.write(&req.out_dir)?;

    match model.config.head {
        Head::Categorical { classes } => {
            if data.classes() > classes {
                return Err(Error::InvalidArgument(format!(
                    "dataset has {} classes but the model predicts {classes}",
                    data.classes()
                )));
            }
            let pred = if req.oracle { data.labels.clone() } else { argmax_rows(&predict_all(&model, &data, req.batch_size)?) };
            let report = ClassReport::compute(&pred, &data.labels, classes)?;
            let mut names = data.class_names.clone();
            names.extend((names.len()..classes).map(|i| format!("class{i}")));
            std::fs::write(reports.join("metrics.txt"), report.to_key_value())?;
            std::fs::write(reports.join("class_report.csv"), report.to_csv(&names))?;
            std::fs::write(reports.join("confusion.csv"), report.confusion_csv(&names))?;
            Ok(EvalReport::Categorical(report))
        }
        Head::Dimensional => {
            let truth = data.dimensional.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("dimensional model but dataset `{}` has no valence/arousal labels", data.name))
            })?;
            let truth: Vec<f64> = truth.data().iter().map(|&v| v as f64).collect();
            let pred: Vec<f64> = if req.oracle {
                truth.clone()
            } else {
                predict_all(&model, &data, req.batch_size)?.data().iter().map(|&v| v as f64).collect()
            };
            let report = DimensionalReport::compute(&pred, &truth)?;
            std::fs::write(reports.join("metrics.txt"), report.to_key_value())?;
            std::fs::write(reports.join("dimensional.csv"), report.to_csv())?;
            let mut hist = String::from("bin_left,valence,arousal\n");
            let col = |v: &[f64], c: usize| v.iter().skip(c).step_by(2).copied().collect::<Vec<_>>();
            let hv = error_histogram(&col(&pred, 0), &col(&truth, 0), req.histogram_bins)?;
            let ha = error_histogram(&col(&pred, 1), &col(&truth, 1), req.histogram_bins)?;
            for ((edge, v), a) in histogram_edges(req.histogram_bins).iter().zip(hv).zip(ha) {
                writeln!(hist, "{edge},{v},{a}").expect("string write");
            }
            std::fs::write(reports.join("error_histogram.csv"), hist)?;
            Ok(EvalReport::Dimensional(report))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub name: String,
    pub parameters: u64,
    pub flops: u64,
}

pub fn cost_row(name: &str, side: usize) -> Result<CostRow> {
    let cfg = config_by_name(name)?;
    let model: Model<f32> = build_network(&cfg, &BuildOptions::default())?;
    let params = count_parameters(&model).parameters;
    let flops = count_flops(&model, side, side)?.flops;
    Ok(CostRow { name: cfg.name, parameters: params, flops })
}

/// Parameter/FLOP rows for `names`, plus the step delta when `series`.
pub fn cost_table(names: &[String], side: usize, with_deltas: bool) -> Result<String> {
    let rows = names.iter().map(|n| cost_row(n, side)).collect::<Result<Vec<_>>>()?;
    let mut s = String::from("arch,parameters,flops");
    s.push_str(if with_deltas { ",param_delta,flop_delta\n" } else { "\n" });
    for (i, r) in rows.iter().enumerate() {
        write!(s, "{},{},{}", r.name, r.parameters, r.flops).expect("string write");
        if with_deltas {
            match i.checked_sub(1).map(|p| &rows[p]) {
                Some(p) => write!(s, ",{},{}", r.parameters - p.parameters, r.flops - p.flops),
                None => write!(s, ",,"),
            }
            .expect("string write");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn series_names() -> Vec<String> {
    DEPTH_SERIES.iter().map(|d| format!("BReG-NeXt-{d}")).collect()
}

/// `kind` is one of identity, lambda, h1, h2, h3, adaptive.
pub fn parse_mapping_kind(kind: &str, lambda: f64, h3_alpha: f64) -> Result<MappingKind> {
    let k = match kind.to_ascii_lowercase().as_str() {
        "identity" => MappingKind::Identity,
        "lambda" => MappingKind::LambdaScaled { lambda },
        "h1" | "arctan" => MappingKind::Arctan,
        "h2" => MappingKind::XArctanLog,
        "h3" => MappingKind::LogExp { alpha: h3_alpha },
        "adaptive" => MappingKind::Adaptive,
        other => return Err(Error::InvalidArgument(format!("unknown mapping kind `{other}`"))),
    };
    k.validate()?;
    Ok(k)
}

pub fn plot_mapping(kind: MappingKind, params: MappingParams, lo: f64, hi: f64, points: usize, out: Option<&Path>) -> Result<Vec<CurvePoint>> {
    let curve = mapping_curve(kind, params, &linspace(lo, hi, points))?;
    match out {
        Some(path) => write_curve_csv(&curve, std::fs::File::create(path)?)?,
        None => write_curve_csv(&curve, std::io::stdout().lock())?,
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_specs_parse() {
        assert_eq!(
            DataSpec::parse("synth:K=4,n=10,seed=3").unwrap(),
            DataSpec::Synth { classes: 4, per_class: 10, seed: 3 }
        );
        assert_eq!(DataSpec::parse("synth").unwrap(), DataSpec::Synth { classes: 8, per_class: 200, seed: 0 });
        assert_eq!(DataSpec::parse("fer2013:/x/y.csv").unwrap(), DataSpec::Fer2013("/x/y.csv".into()));
        assert!(DataSpec::parse("imagenet").is_err());
        assert!(DataSpec::parse("synth:q=1").is_err());
    }

    #[test]
    fn series_table_has_eight_rows() {
        let t = cost_table(&series_names(), 64, true).unwrap();
        assert_eq!(t.lines().count(), 9);
        assert!(t.lines().nth(1).unwrap().starts_with("BReG-NeXt-26,"));
    }

    #[test]
    fn oracle_eval_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config_by_name("BReG-NeXt-32").unwrap().with_input(8, 8);
        let model: Model<f32> = build_network(&cfg, &BuildOptions::default()).unwrap();
        let ck = dir.path().join("m.bngx");
        save_checkpoint(&model, &[], &ck).unwrap();
        let req = EvalRequest {
            checkpoint: ck,
            data: DataSpec::Synth { classes: 8, per_class: 2, seed: 1 },
            split: None,
            oracle: true,
            batch_size: 16,
            histogram_bins: 8,
            out_dir: dir.path().join("eval"),
        };
        match run_eval(&req).unwrap() {
            EvalReport::Categorical(r) => assert_eq!(r.accuracy, 1.0),
            EvalReport::Dimensional(_) => panic!("categorical head expected"),
        }
        assert!(dir.path().join("eval/reports/confusion.csv").exists());
        assert!(dir.path().join("eval/manifest.txt").exists());
    }
}
