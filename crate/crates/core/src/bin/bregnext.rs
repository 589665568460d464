use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bregnext::checks::{run_suite, SuiteOptions};
use bregnext::commands::{
    comparison_table, cost_table, parse_mapping_kind, plot_mapping, run_eval, run_train, series_names, DataSpec,
    EvalReport, EvalRequest, TrainRequest,
};
use bregnext::data::Split;
use bregnext::mapping::{CurvePreset, MappingParams};
use bregnext::network::{count_parameters, Head};
use bregnext::Error;

#[derive(Parser)]
#[command(name = "bregnext", version, about = "Residual networks with adaptive bounded-gradient bypass mappings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Categorical,
    Dimensional,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more architectures and write logs and checkpoints.
    Train {
        /// Architecture name; repeat to train several and write comparison.csv.
        #[arg(long, default_value = "BReG-NeXt-50")]
        arch: Vec<String>,
        /// JSON network config, overriding --arch.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "categorical")]
        head: HeadArg,
        /// synth[:K=8,n=200,seed=0] or fer2013:PATH
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Integer box-downsampling factor applied to the 64×64 images.
        #[arg(long, default_value_t = 1)]
        downsample: usize,
        #[arg(long)]
        no_augment: bool,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "synth")]
        data: String,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Score the labels against themselves (pipeline check).
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Compare autodiff gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value = "BReG-NeXt-26")]
        arch: String,
        /// Restrict to one mapping kind (adaptive, identity, lambda, h1, h2, h3).
        #[arg(long)]
        mapping: Option<String>,
        /// Coordinates probed per network tensor.
        #[arg(long, default_value_t = 3)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 8)]
        side: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and FLOP counts.
    Params {
        #[arg(long)]
        arch: Vec<String>,
        /// The BReG-NeXt depth series with per-step deltas.
        #[arg(long)]
        series: bool,
        #[arg(long, default_value_t = 64)]
        side: usize,
    },
    /// Tabulate a mapping and its derivative as CSV.
    PlotMapping {
        #[arg(long, default_value = "adaptive")]
        kind: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
        /// Reference setting a-d of the adaptive mapping, overriding --alpha/--beta.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 1.1, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical() => EXIT_NUMERICAL,
        Error::Io(_)
        | Error::Csv(_)
        | Error::Parse { .. }
        | Error::CheckpointVersion { .. }
        | Error::CheckpointTruncated(_)
        | Error::CheckpointConfigMismatch { .. }
        | Error::CheckpointParam { .. }
        | Error::LabelOutOfRange { .. } => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Train { arch, config, head, data, epochs, batch, lr, seed, downsample, no_augment, out } => {
            let base = TrainRequest {
                config,
                head: match head {
                    HeadArg::Categorical => Head::categorical(),
                    HeadArg::Dimensional => Head::Dimensional,
                },
                data: DataSpec::parse(&data)?,
                epochs,
                batch_size: batch,
                lr,
                seed,
                downsample,
                augment: !no_augment,
                ..Default::default()
            };
            let several = arch.len() > 1;
            let mut runs = Vec::new();
            for name in &arch {
                let out_dir = if several { out.join(name) } else { out.clone() };
                let outcome = run_train(&TrainRequest { arch: name.clone(), out_dir, ..base.clone() })?;
                let params = count_parameters(&outcome.model).parameters;
                println!("{}: {} parameters, written to {}", outcome.model.config.name, params, outcome.out_dir.display());
                runs.push((outcome.model.config.name.clone(), outcome.log, params));
            }
            if several {
                let rows: Vec<_> = runs.iter().map(|(n, l, p)| (n.clone(), l, *p)).collect();
                std::fs::write(out.join("comparison.csv"), comparison_table(&rows))?;
            }
            Ok(0)
        }
        Command::Eval { checkpoint, data, split, oracle, batch, bins, out } => {
            let req = EvalRequest {
                checkpoint,
                data: DataSpec::parse(&data)?,
                split: split.map(|s| match s {
                    SplitArg::Train => Split::Train,
                    SplitArg::Validation => Split::Validation,
                    SplitArg::Test => Split::Test,
                }),
                oracle,
                batch_size: batch,
                histogram_bins: bins,
                out_dir: out,
            };
            match run_eval(&req)? {
                EvalReport::Categorical(r) => print!("{}", r.to_key_value()),
                EvalReport::Dimensional(r) => print!("{}", r.to_key_value()),
            }
            Ok(0)
        }
        Command::Gradcheck { arch, mapping, samples, tolerance, side, batch, seed } => {
            let opts = SuiteOptions { arch: Some(arch), batch, side, per_tensor: samples, mapping, seed, ..Default::default() };
            let mut failed = false;
            for r in run_suite(&opts)? {
                let ok = r.passed(tolerance);
                failed |= !ok;
                println!(
                    "{:<5} {:<24} max_rel_error {:.3e}  probed {:>5}  {}",
                    if ok { "PASS" } else { "FAIL" },
                    r.name,
                    r.max_rel_error,
                    r.probed,
                    r.note
                );
            }
            Ok(if failed { EXIT_NUMERICAL } else { 0 })
        }
        Command::Params { arch, series, side } => {
            let (names, deltas) = match (series, arch.is_empty()) {
                (true, _) => (series_names(), true),
                (false, false) => (arch, false),
                (false, true) => (bregnext::network::TABLE2_NAMES.iter().map(|s| s.to_string()).collect(), false),
            };
            print!("{}", cost_table(&names, side, deltas)?);
            Ok(0)
        }
        Command::PlotMapping { kind, alpha, beta, preset, lambda, from, to, points, out } => {
            let params = match preset {
                Some(p) => CurvePreset::parse(&p)?.params(),
                None => MappingParams::new(alpha, beta),
            };
            let kind = parse_mapping_kind(&kind, lambda, alpha)?;
            plot_mapping(kind, params, from, to, points, out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
