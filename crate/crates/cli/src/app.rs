//! Command-line interface and subcommand handlers.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcp::data::{gen_cubic, gen_sine_outliers, load_csv, Normalization, TargetColumn};
use gcp::dynamics::{GroundTruth, Mode, OdeConfig, Scheme};
use gcp::eval::EvalReport;
use gcp::nn::{train, Checkpoint, HeadKind, MlpModel, OptimizerKind, TrainConfig};
use gcp::specfun::solve_a_root;
use gcp::NormalGammaParams;
use serde_json::json;

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, CliResult};
use crate::experiment::{curve_csv, predict, predictions_csv, run_experiment, RunStatus};
use crate::output::{read_file, write_file, write_json};
use crate::simulate::run_simulation;

#[derive(Debug, Parser)]
#[command(name = "gcp", version, about = "Variance estimation with the Gaussian conjugate prior")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print A(alpha) and the residual of its defining equation as JSON.
    SolveA {
        #[arg(long)]
        alpha: f64,
    },
    /// Integrate the expected-gradient ODE and write a trajectory CSV and summary.
    Simulate(SimulateArgs),
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train one network on a CSV dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a CSV dataset.
    Evaluate(EvaluateArgs),
    /// Run a cross-validated experiment from a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Full,
    FixedAlpha,
    MeanOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Rk4,
    Rosenbrock,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Ground-truth mean.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mean: f64,
    /// Ground-truth variance.
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 50.0)]
    pub max_time: f64,
    #[arg(long, value_enum, default_value = "rk4")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-13)]
    pub atol: f64,
    #[arg(long, default_value_t = 96)]
    pub quadrature_nodes: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub stop_tolerance: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeneratorArg {
    Cubic,
    Sine,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: GeneratorArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outlier probability of the sine generator.
    #[arg(long, default_value_t = 0.0)]
    pub outlier_prob: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Rmsprop,
    Nesterov,
    Sgd,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Rmsprop => OptimizerKind::Rmsprop,
            OptimizerArg::Nesterov => OptimizerKind::Nesterov,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name or zero-based index.
    #[arg(long, default_value = "y")]
    pub target: TargetColumn,
    /// One of gcp, gaussian_ml, squared_error, dpd.
    #[arg(long, default_value = "gcp")]
    pub method: Method,
    #[arg(long, default_value_t = 50)]
    pub hidden_units: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub minibatch: usize,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub normalization: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: TargetColumn,
    /// Variance used for ranking; defaults to gcp_corr for GCP checkpoints.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Number of random folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Epochs for every method.
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::SolveA { alpha } => {
            let r = solve_a_root(alpha)?;
            println!("{}", json!({ "alpha": r.alpha, "a": r.a, "residual": r.residual }));
            Ok(0)
        }
        Command::Simulate(a) => simulate(a),
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn simulate(a: SimulateArgs) -> CliResult<i32> {
    let params0 = NormalGammaParams::new(a.m, a.nu, a.alpha, a.beta)?;
    let gt = GroundTruth::new(a.mean, a.variance)?;
    let cfg = OdeConfig {
        step: a.step,
        max_time: a.max_time,
        quadrature_nodes: a.quadrature_nodes,
        stop_tolerance: a.stop_tolerance,
        mode: match a.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::FixedAlpha => Mode::FixedAlpha,
            ModeArg::MeanOnly => Mode::MeanOnly,
        },
        scheme: match a.scheme {
            SchemeArg::Rk4 => Scheme::Rk4,
            SchemeArg::Rosenbrock => Scheme::Rosenbrock {
                rtol: a.rtol,
                atol: a.atol,
            },
        },
    };
    cfg.validate()?;
    let s = run_simulation(params0, gt, cfg, &a.out)?;
    println!("{}", serde_json::to_string(&s)?);
    Ok(0)
}

fn gen_data(a: GenDataArgs) -> CliResult<i32> {
    let ds = match a.kind {
        GeneratorArg::Cubic => gen_cubic(a.n, a.seed)?,
        GeneratorArg::Sine => gen_sine_outliers(a.n, a.outlier_prob, a.seed)?,
    };
    write_file(&a.out, &ds.to_csv_string())?;
    Ok(0)
}

fn train_cmd(a: TrainArgs) -> CliResult<i32> {
    if a.method != a.method.trained_as() {
        return Err(CliError::Usage(format!(
            "train the '{}' network and pick '{}' at evaluation",
            a.method.trained_as(),
            a.method
        )));
    }
    let raw = load_csv(&a.data, &a.target).map_err(CliError::from_data)?;
    let norm = Normalization::fit(&raw).map_err(CliError::from_data)?;
    let data = raw.apply_normalization(&norm)?;
    let mut cfg = TrainConfig {
        loss: a.method.loss(),
        minibatch: a.minibatch,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.optimizer.kind = a.optimizer.into();
    cfg.optimizer.rate = a.rate;
    cfg.validate()?;
    let model = MlpModel::new(data.n_features, a.hidden_units, a.dropout_rate, cfg.loss.head_kind(), a.seed)?;
    let (model, history) = train(&model, &data, &cfg)?;
    let ck = model.to_checkpoint(Some(&cfg));
    write_file(&a.out.join("checkpoints").join(format!("{}.json", a.method)), &(ck.to_json()? + "\n"))?;
    write_json(&a.out.join("normalization.json"), &norm)?;
    write_json(&a.out.join("history.json"), &history)?;
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> CliResult<i32> {
    let ck = Checkpoint::from_json(&read_file(&a.checkpoint)?).map_err(CliError::from_data)?;
    let model = MlpModel::from_checkpoint(&ck).map_err(CliError::from_data)?;
    let norm: Normalization = serde_json::from_str(&read_file(&a.normalization)?)?;
    let raw = load_csv(&a.data, &a.target).map_err(CliError::from_data)?;
    let method = match (a.method, model.head()) {
        (Some(m), head) if m.loss().head_kind() != head => {
            return Err(CliError::Usage(format!("method '{m}' does not match the checkpoint heads")));
        }
        (Some(m), _) => m,
        (None, HeadKind::NormalGamma) => Method::GcpCorr,
        (None, HeadKind::Gaussian) => Method::GaussianMl,
    };
    let p = predict(&model, &norm, &raw, method)?;
    let report = EvalReport::compute(0, method.name(), &p.means, &p.variances, &raw.targets)?;
    write_json(&a.out.join("evaluation.json"), &report)?;
    write_file(&a.out.join("curves").join(format!("{method}.csv")), &curve_csv(&report.rmse_curve))?;
    write_file(&a.out.join("predictions").join(format!("{method}.csv")), &predictions_csv(&raw, &p))?;
    println!("{}", json!({ "method": method, "rmse": report.rmse, "auc": report.auc }));
    Ok(0)
}

fn experiment(a: ExperimentArgs) -> CliResult<i32> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a);
    let report = run_experiment(&cfg)?;
    for f in report.folds.iter().filter(|f| !f.ok) {
        eprintln!("fold {} failed: {}", f.fold_id, f.error.as_deref().unwrap_or(""));
    }
    for agg in &report.aggregates {
        println!(
            "{:<14} folds={:<3} rmse={:.6} auc={:.6}",
            agg.method.name(),
            agg.n_folds,
            agg.mean_rmse,
            agg.mean_auc
        );
    }
    Ok(match report.status {
        RunStatus::Complete => 0,
        RunStatus::Partial | RunStatus::Failed => 3,
    })
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &ExperimentArgs) {
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    } else if cfg.output_dir.is_relative() {
        cfg.output_dir = a.config.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(f) = a.folds {
        cfg.folds.count = f;
        cfg.folds.first_k = None;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = Some(e);
        for o in cfg.overrides.values_mut() {
            o.epochs = None;
        }
    }
}
