//! Experiment configuration: a TOML file whose keys may be overridden from
//! the command line.
//!
//! ```toml
//! seed = 7
//! methods = ["gcp", "gcp_corr", "gaussian_ml"]
//! preset = "boston"          # optional per-dataset defaults
//! p_threshold = 0.05
//!
//! [dataset]
//! kind = "sine"              # "cubic", "sine" or "csv"
//! n = 400
//! outlier_prob = 0.05
//! # kind = "csv": path = "data.csv", target = "y" (name or column index)
//!
//! [folds]
//! count = 20
//! train_fraction = 0.9       # or first_k = 300 for one fixed split
//!
//! [contamination]
//! fraction = 0.05
//!
//! [model]
//! hidden_units = 50
//! dropout_rate = 0.0
//!
//! [train]                    # shared by all methods
//! epochs = 100
//! minibatch = 32
//! optimizer = { kind = "adam", rate = 1e-3 }
//!
//! [overrides.gcp]            # per training method
//! epochs = 200
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gcp::data::TargetColumn;
use gcp::nn::{LossKind, OptimizerConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::presets::Preset;

/// A method as reported. `gcp` and `gcp_corr` share one trained GCP network
/// and differ only in which variance estimate ranks the test samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gcp,
    GcpCorr,
    GaussianMl,
    SquaredError,
    Dpd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gcp,
        Method::GcpCorr,
        Method::GaussianMl,
        Method::SquaredError,
        Method::Dpd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gcp => "gcp",
            Method::GcpCorr => "gcp_corr",
            Method::GaussianMl => "gaussian_ml",
            Method::SquaredError => "squared_error",
            Method::Dpd => "dpd",
        }
    }

    /// The method whose network is trained to produce this one's predictions.
    pub fn trained_as(self) -> Method {
        match self {
            Method::GcpCorr => Method::Gcp,
            m => m,
        }
    }

    pub fn loss(self) -> LossKind {
        match self.trained_as() {
            Method::GaussianMl => LossKind::GaussianMl,
            Method::SquaredError => LossKind::SquaredError,
            Method::Dpd => LossKind::Dpd,
            _ => LossKind::Gcp,
        }
    }

    /// Stable code used to derive the method's random streams.
    pub fn code(self) -> u64 {
        match self.trained_as() {
            Method::Gcp | Method::GcpCorr => 100,
            Method::GaussianMl => 101,
            Method::SquaredError => 102,
            Method::Dpd => 103,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Cubic {
        n: usize,
        /// Generator seed; derived from the global seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Sine {
        n: usize,
        #[serde(default)]
        outlier_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        target: TargetColumn,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSpec {
    pub count: usize,
    pub train_fraction: f64,
    /// A single split training on the first `first_k` rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_k: Option<usize>,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            count: 20,
            train_fraction: 0.9,
            first_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminationSpec {
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
}

/// Training settings where every key is optional; unset keys fall through
/// to the preset and then to the library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpd_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_multipliers: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
}

impl TrainSpec {
    fn apply(&self, r: &mut ResolvedMethod) {
        if let Some(o) = self.optimizer {
            r.train.optimizer = o;
        }
        if let Some(v) = self.minibatch {
            r.train.minibatch = v;
        }
        if let Some(v) = self.epochs {
            r.train.epochs = v;
        }
        if let Some(v) = self.dpd_exponent {
            r.train.dpd_exponent = v;
        }
        if let Some(v) = self.rate_multipliers {
            r.train.rate_multipliers = v;
        }
        if let Some(v) = self.dropout_rate {
            r.dropout_rate = v;
        }
        if let Some(v) = self.hidden_units {
            r.hidden_units = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub folds: FoldSpec,
    #[serde(default)]
    pub contamination: ContaminationSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<Method, TrainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
    /// Not part of the canonical report.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    /// Upper bound on concurrent training jobs; not part of the canonical
    /// report since results do not depend on it.
    #[serde(default = "default_jobs", skip_serializing)]
    pub jobs: usize,
}

fn default_p_threshold() -> f64 {
    0.05
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("gcp-run")
}

fn default_jobs() -> usize {
    1
}

/// Fully resolved settings of one training method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMethod {
    pub method: Method,
    pub hidden_units: usize,
    pub dropout_rate: f64,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative CSV paths are resolved against the config file.
        if let DatasetSpec::Csv { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Distinct training methods in first-mention order.
    pub fn training_methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for m in &self.methods {
            let t = m.trained_as();
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }

    /// Library defaults, then preset, then `[model]` and `[train]`, then the
    /// per-method override.
    pub fn resolve(&self, method: Method) -> ResolvedMethod {
        let method = method.trained_as();
        let mut r = ResolvedMethod {
            method,
            hidden_units: 50,
            dropout_rate: 0.0,
            train: TrainConfig {
                loss: method.loss(),
                ..TrainConfig::default()
            },
        };
        if let Some(p) = self.preset {
            let e = p.entry(method);
            r.hidden_units = e.hidden_units;
            r.dropout_rate = e.dropout_rate;
            r.train.epochs = e.epochs;
            r.train.minibatch = e.minibatch;
            r.train.optimizer.kind = e.optimizer;
            r.train.optimizer.rate = e.rate;
        }
        if let Some(h) = self.model.hidden_units {
            r.hidden_units = h;
        }
        if let Some(d) = self.model.dropout_rate {
            r.dropout_rate = d;
        }
        self.train.apply(&mut r);
        if let Some(o) = self.overrides.get(&method) {
            o.apply(&mut r);
        }
        r
    }

    pub fn validate(&self) -> CliResult<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.methods.is_empty() {
            return usage("at least one method is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return usage(format!("method '{m}' is listed twice"));
            }
        }
        for m in self.overrides.keys() {
            if *m != m.trained_as() {
                return usage(format!(
                    "override for '{m}' is not allowed; it shares the '{}' network",
                    m.trained_as()
                ));
            }
        }
        match &self.dataset {
            DatasetSpec::Cubic { n, .. } | DatasetSpec::Sine { n, .. } if *n < 4 => {
                return usage(format!("dataset needs at least 4 samples, got {n}"));
            }
            DatasetSpec::Sine { outlier_prob, .. } if !(0.0..1.0).contains(outlier_prob) => {
                return usage(format!("outlier_prob must lie in [0, 1), got {outlier_prob}"));
            }
            DatasetSpec::Csv { path, .. } if !path.is_file() => {
                return usage(format!("dataset file {} does not exist", path.display()));
            }
            _ => {}
        }
        if self.folds.first_k.is_none() {
            if self.folds.count == 0 {
                return usage("folds.count must be at least 1".into());
            }
            if !(self.folds.train_fraction > 0.0 && self.folds.train_fraction < 1.0) {
                return usage(format!(
                    "folds.train_fraction must lie in (0, 1), got {}",
                    self.folds.train_fraction
                ));
            }
        }
        if !(0.0..1.0).contains(&self.contamination.fraction) {
            return usage(format!(
                "contamination.fraction must lie in [0, 1), got {}",
                self.contamination.fraction
            ));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return usage(format!("p_threshold must lie in (0, 1), got {}", self.p_threshold));
        }
        if self.jobs == 0 {
            return usage("jobs must be at least 1".into());
        }
        for m in self.training_methods() {
            let r = self.resolve(m);
            if r.hidden_units == 0 {
                return usage(format!("{m}: hidden_units must be at least 1"));
            }
            if !(0.0..1.0).contains(&r.dropout_rate) {
                return usage(format!("{m}: dropout_rate must lie in [0, 1)"));
            }
            r.train
                .validate()
                .map_err(|e| CliError::Usage(format!("{m}: {e}")))?;
        }
        Ok(())
    }

    pub fn n_folds(&self) -> usize {
        if self.folds.first_k.is_some() {
            1
        } else {
            self.folds.count
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        methods = ["gcp", "gcp_corr", "dpd"]
        [dataset]
        kind = "sine"
        n = 100
        outlier_prob = 0.05
    "#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.training_methods(), vec![Method::Gcp, Method::Dpd]);
        assert_eq!(cfg.n_folds(), 20);
        let r = cfg.resolve(Method::GcpCorr);
        assert_eq!(r.method, Method::Gcp);
        assert_eq!(r.train.loss, LossKind::Gcp);
        assert_eq!((r.hidden_units, r.train.epochs), (50, 100));
    }

    #[test]
    fn layering_order() {
        let text = format!(
            "preset = \"yacht\"\n{MINIMAL}\n[train]\nepochs = 7\n[overrides.dpd]\nminibatch = 3\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let g = cfg.resolve(Method::Gcp);
        assert_eq!(g.train.optimizer.kind, gcp::nn::OptimizerKind::Rmsprop);
        assert_eq!((g.train.epochs, g.train.minibatch, g.dropout_rate), (7, 5, 0.1));
        let d = cfg.resolve(Method::Dpd);
        assert_eq!((d.train.epochs, d.train.minibatch), (7, 3));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::from_toml("methods = []\n[dataset]\nkind = \"cubic\"\nn = 10\n")
            .unwrap()
            .validate()
            .is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"nope\"]\n[dataset]\nkind = \"cubic\"\nn = 10\n").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).is_err());
        let bad = ExperimentConfig::from_toml(&format!("{MINIMAL}\n[overrides.gcp_corr]\nepochs = 1\n")).unwrap();
        assert!(bad.validate().is_err());
        let csv = ExperimentConfig::from_toml(
            "methods = [\"gcp\"]\n[dataset]\nkind = \"csv\"\npath = \"/nonexistent.csv\"\ntarget = \"y\"\n",
        )
        .unwrap();
        assert!(csv.validate().is_err());
    }
}
