//! Cross-validated experiments: fold splitting, normalization, training-set
//! contamination, concurrent training, evaluation and the canonical report.

use std::collections::BTreeMap;

use gcp::data::{contaminate, gen_cubic, gen_sine_outliers, load_csv, split_first_k, split_folds, Dataset, Fold, Normalization};
use gcp::eval::{paired_diff_test, EvalReport, Significance};
use gcp::nn::{train, Checkpoint, MlpModel, TrainHistory};
use gcp::rng::{stream_id, streams, RNG_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, Method, ResolvedMethod};
use crate::error::{CliError, CliResult};
use crate::output::write_file;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub provenance: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold_id: usize,
    pub ok: bool,
    pub n_train: usize,
    pub n_test: usize,
    /// Dataset row indices whose training targets were replaced.
    pub contaminated: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    /// Mean loss of the last epoch, per training method.
    pub final_train_loss: BTreeMap<Method, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fold_id: usize,
    pub method: Method,
    pub n_test: usize,
    pub rmse: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub n_folds: usize,
    pub mean_rmse: f64,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Rmse,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: Method,
    pub method_b: Method,
    pub measure: Measure,
    pub n_pairs: usize,
    /// Absent when fewer than two folds succeeded.
    pub result: Option<Significance>,
}

/// The canonical run report. It contains no timestamps or host details, so
/// identical configurations produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub rng_version: u32,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub resolved: Vec<ResolvedMethod>,
    pub dataset: DatasetSummary,
    pub folds: Vec<FoldRecord>,
    pub evaluations: Vec<Evaluation>,
    pub aggregates: Vec<Aggregate>,
    pub comparisons: Vec<Comparison>,
}

impl Report {
    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Denormalized test-set predictions of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub means: Vec<f64>,
    /// Ranking variance: `v_est` for `gcp` (infinite where undefined),
    /// `v_corrected` for `gcp_corr`, `1/p` for the Gaussian heads.
    pub variances: Vec<f64>,
    pub alphas: Vec<f64>,
}

/// Predicts on raw (unnormalized) inputs and returns values in target units.
pub fn predict(model: &MlpModel, norm: &Normalization, raw: &Dataset, method: Method) -> CliResult<Predictions> {
    if raw.n_features != model.input_dim() {
        return Err(CliError::Data(format!(
            "data has {} features, model expects {}",
            raw.n_features,
            model.input_dim()
        )));
    }
    let mut out = Predictions {
        means: Vec::with_capacity(raw.len()),
        variances: Vec::with_capacity(raw.len()),
        alphas: Vec::with_capacity(raw.len()),
    };
    for i in 0..raw.len() {
        let est = model.predict(&norm.normalize_input(raw.row(i)))?;
        let v = match method {
            Method::Gcp => est.v_est.unwrap_or(f64::INFINITY),
            _ => est.v_corrected,
        };
        let mean = norm.denormalize_target(est.mean_est);
        if !mean.is_finite() || v.is_nan() {
            return Err(CliError::Numerical(format!("non-finite prediction at test row {i}")));
        }
        out.means.push(mean);
        out.variances.push(norm.denormalize_variance(v));
        out.alphas.push(est.alpha);
    }
    Ok(out)
}

pub fn predictions_csv(raw: &Dataset, p: &Predictions) -> String {
    let mut s = String::from("row,y,mean,variance,alpha\n");
    for i in 0..raw.len() {
        s.push_str(&format!(
            "{i},{:?},{:?},{:?},{:?}\n",
            raw.targets[i], p.means[i], p.variances[i], p.alphas[i]
        ));
    }
    s
}

pub fn curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("n,rmse\n");
    for (n, v) in curve.iter().enumerate() {
        s.push_str(&format!("{n},{v:?}\n"));
    }
    s
}

pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> CliResult<Dataset> {
    match spec {
        DatasetSpec::Cubic { n, seed: s } => {
            gen_cubic(*n, s.unwrap_or_else(|| stream_id(&[seed, streams::CUBIC]))).map_err(CliError::from)
        }
        DatasetSpec::Sine { n, outlier_prob, seed: s } => {
            gen_sine_outliers(*n, *outlier_prob, s.unwrap_or_else(|| stream_id(&[seed, streams::SINE])))
                .map_err(CliError::from)
        }
        DatasetSpec::Csv { path, target } => load_csv(path, target).map_err(CliError::from_data),
    }
}

struct PreparedFold {
    fold: Fold,
    norm: Normalization,
    train: Dataset,
    test_raw: Dataset,
    contaminated: Vec<usize>,
}

fn prepare_fold(ds: &Dataset, fold: &Fold, fraction: f64, seed: u64, fold_id: usize) -> CliResult<PreparedFold> {
    let train_raw = ds.subset(&fold.train)?;
    let norm = Normalization::fit(&train_raw).map_err(CliError::from_data)?;
    let clean = train_raw.apply_normalization(&norm)?;
    let (train, replaced) = contaminate(&clean, fraction, stream_id(&[seed, fold_id as u64, streams::CONTAMINATE]))?;
    Ok(PreparedFold {
        contaminated: replaced.iter().map(|&i| fold.train[i]).collect(),
        fold: fold.clone(),
        norm,
        train,
        test_raw: ds.subset(&fold.test)?,
    })
}

struct Trained {
    model: MlpModel,
    history: TrainHistory,
    resolved: ResolvedMethod,
}

fn train_job(p: &PreparedFold, r: &ResolvedMethod, seed: u64, fold_id: usize) -> CliResult<Trained> {
    let job_seed = stream_id(&[seed, fold_id as u64, r.method.code()]);
    let model = MlpModel::new(p.train.n_features, r.hidden_units, r.dropout_rate, r.train.loss.head_kind(), job_seed)?;
    let mut resolved = r.clone();
    resolved.train.seed = job_seed;
    let (model, history) = train(&model, &p.train, &resolved.train)?;
    Ok(Trained {
        model,
        history,
        resolved,
    })
}

/// A file to write, as (path relative to the output directory, contents).
type Artifact = (String, String);

struct FoldOutput {
    record: FoldRecord,
    reports: Vec<EvalReport>,
    files: Vec<Artifact>,
}

fn evaluate_fold(
    cfg: &ExperimentConfig,
    fold_id: usize,
    prep: &PreparedFold,
    trained: &BTreeMap<Method, Trained>,
) -> CliResult<(Vec<EvalReport>, Vec<Artifact>)> {
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for (m, t) in trained {
        let ck: Checkpoint = t.model.to_checkpoint(Some(&t.resolved.train));
        files.push((format!("checkpoints/fold{fold_id}_{m}.json"), ck.to_json()? + "\n"));
    }
    for &m in &cfg.methods {
        let t = &trained[&m.trained_as()];
        let p = predict(&t.model, &prep.norm, &prep.test_raw, m)?;
        let rep = EvalReport::compute(fold_id, m.name(), &p.means, &p.variances, &prep.test_raw.targets)?;
        files.push((format!("curves/fold{fold_id}_{m}.csv"), curve_csv(&rep.rmse_curve)));
        files.push((format!("predictions/fold{fold_id}_{m}.csv"), predictions_csv(&prep.test_raw, &p)));
        reports.push(rep);
    }
    Ok((reports, files))
}

fn failed_record(fold_id: usize, fold: Option<&Fold>, error: String) -> FoldRecord {
    FoldRecord {
        fold_id,
        ok: false,
        n_train: fold.map_or(0, |f| f.train.len()),
        n_test: fold.map_or(0, |f| f.test.len()),
        contaminated: Vec::new(),
        normalization: None,
        final_train_loss: BTreeMap::new(),
        error: Some(error),
    }
}

/// Runs every fold, writes all artifacts under `cfg.output_dir`, and returns
/// the report. A failing fold is recorded and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Report> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.dataset, cfg.seed)?;
    let folds = match cfg.folds.first_k {
        Some(k) => vec![split_first_k(ds.len(), k)?],
        None => split_folds(ds.len(), cfg.folds.count, cfg.folds.train_fraction, cfg.seed)?,
    };
    let prepared: Vec<CliResult<PreparedFold>> = folds
        .iter()
        .enumerate()
        .map(|(k, f)| prepare_fold(&ds, f, cfg.contamination.fraction, cfg.seed, k))
        .collect();
    let methods = cfg.training_methods();
    let resolved: Vec<ResolvedMethod> = methods.iter().map(|&m| cfg.resolve(m)).collect();

    let jobs: Vec<(usize, usize)> = prepared
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_ok())
        .flat_map(|(k, _)| (0..resolved.len()).map(move |j| (k, j)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<CliResult<Trained>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, j)| {
                let p = prepared[k].as_ref().expect("filtered to prepared folds");
                train_job(p, &resolved[j], cfg.seed, k)
            })
            .collect()
    });
    let mut by_fold: Vec<Vec<(Method, CliResult<Trained>)>> = (0..folds.len()).map(|_| Vec::new()).collect();
    for (&(k, j), r) in jobs.iter().zip(results) {
        by_fold[k].push((resolved[j].method, r));
    }

    let mut outputs = Vec::with_capacity(folds.len());
    for (k, (prep, trained)) in prepared.into_iter().zip(by_fold).enumerate() {
        let prep = match prep {
            Ok(p) => p,
            Err(e) => {
                outputs.push(FoldOutput {
                    record: failed_record(k, Some(&folds[k]), e.to_string()),
                    reports: Vec::new(),
                    files: Vec::new(),
                });
                continue;
            }
        };
        let mut models = BTreeMap::new();
        let mut error = None;
        for (m, r) in trained {
            match r {
                Ok(t) => {
                    models.insert(m, t);
                }
                Err(e) if error.is_none() => error = Some(format!("{m}: {e}")),
                Err(_) => {}
            }
        }
        let evaluated = match error {
            Some(e) => Err(e),
            None => evaluate_fold(cfg, k, &prep, &models).map_err(|e| e.to_string()),
        };
        outputs.push(match evaluated {
            Ok((reports, files)) => FoldOutput {
                record: FoldRecord {
                    fold_id: k,
                    ok: true,
                    n_train: prep.fold.train.len(),
                    n_test: prep.fold.test.len(),
                    contaminated: prep.contaminated,
                    normalization: Some(prep.norm),
                    final_train_loss: models
                        .iter()
                        .map(|(m, t)| (*m, t.history.epoch_losses.last().copied().unwrap_or(f64::NAN)))
                        .collect(),
                    error: None,
                },
                reports,
                files,
            },
            Err(e) => FoldOutput {
                record: failed_record(k, Some(&prep.fold), e),
                reports: Vec::new(),
                files: Vec::new(),
            },
        });
    }

    let report = assemble(cfg, &ds, resolved, &outputs)?;
    let out = &cfg.output_dir;
    for o in &outputs {
        for (rel, text) in &o.files {
            write_file(&out.join(rel), text)?;
        }
    }
    write_file(&out.join("report.json"), &report.to_json()?)?;
    Ok(report)
}

fn assemble(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    resolved: Vec<ResolvedMethod>,
    outputs: &[FoldOutput],
) -> CliResult<Report> {
    let evaluations: Vec<Evaluation> = outputs
        .iter()
        .flat_map(|o| o.reports.iter().map(move |r| (o.record.n_test, r)))
        .map(|(n_test, r)| Evaluation {
            fold_id: r.fold_id,
            method: r.method.parse().expect("method names round-trip"),
            n_test,
            rmse: r.rmse,
            auc: r.auc,
        })
        .collect();
    let n_ok = outputs.iter().filter(|o| o.record.ok).count();
    let status = match n_ok {
        0 => RunStatus::Failed,
        n if n == outputs.len() => RunStatus::Complete,
        _ => RunStatus::Partial,
    };
    let scores = |m: Method, measure: Measure| -> Vec<f64> {
        evaluations
            .iter()
            .filter(|e| e.method == m)
            .map(|e| match measure {
                Measure::Rmse => e.rmse,
                Measure::Auc => e.auc,
            })
            .collect()
    };
    let aggregates = cfg
        .methods
        .iter()
        .map(|&m| {
            let r = scores(m, Measure::Rmse);
            let a = scores(m, Measure::Auc);
            Aggregate {
                method: m,
                n_folds: r.len(),
                mean_rmse: mean(&r),
                mean_auc: mean(&a),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for (i, &a) in cfg.methods.iter().enumerate() {
        for &b in &cfg.methods[i + 1..] {
            for measure in [Measure::Rmse, Measure::Auc] {
                let (sa, sb) = (scores(a, measure), scores(b, measure));
                let result = if sa.len() >= 2 {
                    Some(paired_diff_test(&sa, &sb, cfg.p_threshold)?)
                } else {
                    None
                };
                comparisons.push(Comparison {
                    method_a: a,
                    method_b: b,
                    measure,
                    n_pairs: sa.len(),
                    result,
                });
            }
        }
    }
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        rng_version: RNG_VERSION,
        status,
        config: cfg.clone(),
        resolved,
        dataset: DatasetSummary {
            provenance: ds.provenance.clone(),
            n_samples: ds.len(),
            n_features: ds.n_features,
            feature_names: ds.feature_names.clone(),
            target_name: ds.target_name.clone(),
        },
        folds: outputs.iter().map(|o| o.record.clone()).collect(),
        evaluations,
        aggregates,
        comparisons,
    })
}

/// Arithmetic mean; NaN for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
