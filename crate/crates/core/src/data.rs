//! Datasets: synthetic generators, outlier contamination, CSV input/output,
//! normalization and train/test fold splitting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{stream_id, streams, Rng};

/// Per-column affine normalization statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalization {
    /// Statistics of `ds` in its current units.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let d = ds.n_features;
        let n = ds.len() as f64;
        let mut input_mean = vec![0.0; d];
        let mut input_std = vec![0.0; d];
        for j in 0..d {
            let (m, s) = mean_std((0..ds.len()).map(|i| ds.inputs[i * d + j]), n);
            if !(s > 0.0) {
                return Err(domain(format!(
                    "column '{}' has zero variance",
                    ds.feature_names[j]
                )));
            }
            input_mean[j] = m;
            input_std[j] = s;
        }
        let (target_mean, target_std) = mean_std(ds.targets.iter().copied(), n);
        if !(target_std > 0.0) {
            return Err(domain(format!(
                "column '{}' has zero variance",
                ds.target_name
            )));
        }
        Ok(Self {
            input_mean,
            input_std,
            target_mean,
            target_std,
        })
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    pub fn denormalize_variance(&self, v: f64) -> f64 {
        v * self.target_std * self.target_std
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A regression dataset with row-major inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_features: usize,
    /// `len() × n_features`, row-major.
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Present when inputs and targets are in normalized units.
    pub normalization: Option<Normalization>,
    /// Which samples were drawn from an outlier distribution, when known.
    pub outlier_flags: Option<Vec<bool>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        n_features: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(domain("dataset must contain at least one sample"));
        }
        if n_features == 0 || inputs.len() != n_features * targets.len() {
            return Err(domain(format!(
                "inputs have {} values, expected {} x {}",
                inputs.len(),
                targets.len(),
                n_features
            )));
        }
        Ok(Self {
            n_features,
            inputs,
            targets,
            feature_names: (0..n_features).map(|j| format!("x{j}")).collect(),
            target_name: "y".into(),
            normalization: None,
            outlier_flags: None,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_features..(i + 1) * self.n_features]
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(domain("subset must not be empty"));
        }
        let mut inputs = Vec::with_capacity(indices.len() * self.n_features);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(domain(format!("index {i} out of range")));
            }
            inputs.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Ok(Self {
            inputs,
            targets,
            outlier_flags: self
                .outlier_flags
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            n_features: self.n_features,
            inputs: Vec::new(),
            targets: Vec::new(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            normalization: self.normalization.clone(),
            outlier_flags: None,
            provenance: self.provenance.clone(),
        }
    }

    /// Applies a normalization record (typically fitted on a training split).
    pub fn apply_normalization(&self, norm: &Normalization) -> Result<Self> {
        if self.normalization.is_some() {
            return Err(domain("dataset is already normalized"));
        }
        if norm.input_mean.len() != self.n_features {
            return Err(domain("normalization record has the wrong dimension"));
        }
        let d = self.n_features;
        let inputs = self
            .inputs
            .iter()
            .enumerate()
            .map(|(k, v)| (v - norm.input_mean[k % d]) / norm.input_std[k % d])
            .collect();
        let targets = self
            .targets
            .iter()
            .map(|y| (y - norm.target_mean) / norm.target_std)
            .collect();
        Ok(Self {
            inputs,
            targets,
            normalization: Some(norm.clone()),
            outlier_flags: self.outlier_flags.clone(),
            ..self.clone_header()
        })
    }

    /// Fits statistics on this dataset and normalizes it.
    pub fn normalize(&self) -> Result<Self> {
        self.apply_normalization(&Normalization::fit(self)?)
    }

    /// Back to original units; identity for raw datasets.
    pub fn denormalize(&self) -> Self {
        let Some(norm) = &self.normalization else {
            return self.clone();
        };
        let d = self.n_features;
        let inputs = self
            .inputs
            .iter()
            .enumerate()
            .map(|(k, v)| v * norm.input_std[k % d] + norm.input_mean[k % d])
            .collect();
        let targets = self
            .targets
            .iter()
            .map(|&y| norm.denormalize_target(y))
            .collect();
        let mut out = self.clone_header();
        out.normalization = None;
        out.inputs = inputs;
        out.targets = targets;
        out.outlier_flags = self.outlier_flags.clone();
        out
    }

    /// Writes the dataset as CSV, preceded by a `#` provenance line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&self.provenance.replace('\n', " "));
        out.push('\n');
        for name in &self.feature_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str(&self.target_name);
        out.push('\n');
        for i in 0..self.len() {
            for v in self.row(i) {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{:?}\n", self.targets[i]));
        }
        out
    }
}

/// Column selector for CSV input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse::<usize>()
            .map(TargetColumn::Index)
            .unwrap_or_else(|_| TargetColumn::Name(s.to_string())))
    }
}

/// Reads a headed, comma-separated numeric table. Lines starting with `#`
/// are comments.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_csv(&text, target, &path.as_ref().display().to_string())
}

pub fn parse_csv(text: &str, target: &TargetColumn, provenance: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(0, "header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let t = match target {
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| domain(format!("target column '{name}' not found")))?,
        TargetColumn::Index(i) => {
            return Err(domain(format!(
                "target column {i} out of range ({} columns)",
                headers.len()
            )))
        }
    };
    if headers.len() < 2 {
        return Err(domain("CSV needs at least one input and one target column"));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(parse_err(
                row,
                "-",
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &headers[j], format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &headers[j], format!("non-finite value '{cell}'")));
            }
            if j == t {
                targets.push(v);
            } else {
                inputs.push(v);
            }
        }
    }
    let mut ds = Dataset::new(headers.len() - 1, inputs, targets, provenance)?;
    ds.feature_names = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != t)
        .map(|(_, h)| h.clone())
        .collect();
    ds.target_name = headers[t].clone();
    Ok(ds)
}

fn parse_err(row: usize, column: &str, message: String) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message,
    }
}

/// Loads a CSV and normalizes it with statistics fitted on the same data.
pub fn load_csv_and_normalize(path: impl AsRef<Path>, target: &TargetColumn) -> Result<Dataset> {
    load_csv(path, target)?.normalize()
}

/// `x` uniform on `[−4,−2] ∪ [2,4]`, `y ~ N(x³, 3²)`.
pub fn gen_cubic(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    let mut rng = Rng::new(seed, streams::CUBIC);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let w = rng.uniform_range(-2.0, 2.0);
        let x = if w < 0.0 { w - 2.0 } else { w + 2.0 };
        xs.push(x);
        ys.push(x * x * x + 3.0 * rng.normal());
    }
    Dataset::new(1, xs, ys, format!("cubic n={n} seed={seed}"))
}

/// Mean and standard deviation of the clean part of the sine generator.
pub fn sine_truth(x: f64) -> (f64, f64) {
    let c = x.cos();
    ((3.0 * x).sin(), 0.5 * c * c * c * c)
}

/// `x` uniform on `(−1, 1)`; with probability `1 − p`, `y ~ N(sin 3x,
/// (0.5 cos⁴x)²)`, otherwise `y ~ U(−4, 16)`. Flags mark the outliers.
pub fn gen_sine_outliers(n: usize, outlier_prob: f64, seed: u64) -> Result<Dataset> {
    gen_sine_outliers_in(n, outlier_prob, None, seed)
}

/// As [`gen_sine_outliers`], with outliers restricted to inputs inside
/// `region` when one is given.
pub fn gen_sine_outliers_in(
    n: usize,
    outlier_prob: f64,
    region: Option<(f64, f64)>,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    if !(0.0..1.0).contains(&outlier_prob) {
        return Err(domain(format!("outlier_prob must lie in [0, 1), got {outlier_prob}")));
    }
    let mut rng = Rng::new(seed, streams::SINE);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.uniform_range(-1.0, 1.0);
        let eligible = region.is_none_or(|(a, b)| x >= a && x <= b);
        let u = rng.uniform();
        let z = rng.normal();
        let v = rng.uniform();
        let is_outlier = eligible && u < outlier_prob;
        let y = if is_outlier {
            // Strictly inside (−4, 16).
            let y = -4.0 + 20.0 * v;
            if y == -4.0 {
                -4.0 + f64::EPSILON * 8.0
            } else {
                y
            }
        } else {
            let (mean, sd) = sine_truth(x);
            mean + sd * z
        };
        xs.push(x);
        ys.push(y);
        flags.push(is_outlier);
    }
    let mut ds = Dataset::new(1, xs, ys, format!("sine p={outlier_prob} n={n} seed={seed}"))?;
    ds.outlier_flags = Some(flags);
    Ok(ds)
}

/// Replaces `round(fraction · N)` randomly chosen targets with draws from
/// `N(mean, (10·std)²)` of the original targets. Returns the new dataset and
/// the sorted replaced indices.
pub fn contaminate(train: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(domain(format!("fraction must lie in [0, 1), got {fraction}")));
    }
    let n = train.len();
    let k = (fraction * n as f64).round() as usize;
    let mut out = train.clone();
    if k == 0 {
        return Ok((out, Vec::new()));
    }
    let (mean, std) = mean_std(train.targets.iter().copied(), n as f64);
    let mut rng = Rng::new(seed, streams::CONTAMINATE);
    let mut idx: Vec<usize> = (0..n).collect();
    // Partial Fisher–Yates: the first k entries are a uniform k-subset.
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    let mut flags = train.outlier_flags.clone().unwrap_or_else(|| vec![false; n]);
    for &i in &chosen {
        out.targets[i] = mean + 10.0 * std * rng.normal();
        flags[i] = true;
    }
    out.outlier_flags = Some(flags);
    out.provenance = format!("{} | contaminated {k} (seed={seed})", train.provenance);
    Ok((out, chosen))
}

/// One train/test partition of sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Independent random splits with `round(train_fraction · N)` training samples.
pub fn split_folds(n: usize, n_folds: usize, train_fraction: f64, seed: u64) -> Result<Vec<Fold>> {
    if n_folds == 0 {
        return Err(domain("n_folds must be at least 1"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(domain(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(domain(format!(
            "split of {n} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    Ok((0..n_folds)
        .map(|k| {
            let mut rng = Rng::new(seed, stream_id(&[streams::FOLDS, k as u64]));
            let mut idx: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut idx);
            let mut train = idx[..n_train].to_vec();
            let mut test = idx[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Fold { train, test }
        })
        .collect())
}

/// A single deterministic split: the first `n_train` samples train.
pub fn split_first_k(n: usize, n_train: usize) -> Result<Fold> {
    if n_train == 0 || n_train >= n {
        return Err(domain(format!("first-k split needs 0 < k < {n}, got {n_train}")));
    }
    Ok(Fold {
        train: (0..n_train).collect(),
        test: (n_train..n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_deterministic_and_in_range() {
        let a = gen_cubic(20, 5).unwrap();
        let b = gen_cubic(20, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.inputs.iter().all(|x| (2.0..=4.0).contains(&x.abs())));
        assert_ne!(a, gen_cubic(20, 6).unwrap());
    }

    #[test]
    fn cubic_noise_is_centered() {
        let ds = gen_cubic(100_000, 11).unwrap();
        let mean: f64 = (0..ds.len())
            .map(|i| (ds.targets[i] - ds.inputs[i].powi(3)) / 3.0)
            .sum::<f64>()
            / ds.len() as f64;
        assert!(mean.abs() < 0.02);
        // Equal mass on both intervals.
        let neg = ds.inputs.iter().filter(|x| **x < 0.0).count() as f64 / ds.len() as f64;
        assert!((neg - 0.5).abs() < 0.01);
    }

    #[test]
    fn sine_flags() {
        let ds = gen_sine_outliers(1000, 0.0, 1).unwrap();
        assert!(ds.outlier_flags.as_ref().unwrap().iter().all(|f| !f));

        let ds = gen_sine_outliers(100_000, 0.05, 2).unwrap();
        let flags = ds.outlier_flags.as_ref().unwrap();
        let frac = flags.iter().filter(|f| **f).count() as f64 / ds.len() as f64;
        assert!((frac - 0.05).abs() < 0.005);
        for (i, &f) in flags.iter().enumerate() {
            if f {
                assert!(ds.targets[i] > -4.0 && ds.targets[i] < 16.0);
            }
            assert!(ds.inputs[i] > -1.0 - 1e-12 && ds.inputs[i] < 1.0);
        }
        assert!(gen_sine_outliers(10, 1.0, 0).is_err());
    }

    #[test]
    fn sine_region_restricts_outliers() {
        let ds = gen_sine_outliers_in(5000, 0.3, Some((0.2, 0.8)), 9).unwrap();
        for (i, &f) in ds.outlier_flags.as_ref().unwrap().iter().enumerate() {
            if f {
                assert!(ds.inputs[i] >= 0.2 && ds.inputs[i] <= 0.8);
            }
        }
    }

    #[test]
    fn contaminate_counts() {
        let ds = gen_cubic(1000, 3).unwrap();
        let (same, idx) = contaminate(&ds, 0.0, 1).unwrap();
        assert!(idx.is_empty());
        assert_eq!(same.targets, ds.targets);

        let (c, idx) = contaminate(&ds, 0.05, 1).unwrap();
        assert_eq!(idx.len(), 50);
        let changed = (0..ds.len()).filter(|&i| c.targets[i] != ds.targets[i]).count();
        assert_eq!(changed, 50);
        assert_eq!(c.outlier_flags.unwrap().iter().filter(|f| **f).count(), 50);
    }

    #[test]
    fn contaminate_replacement_spread() {
        let ds = gen_cubic(200_000, 4).unwrap();
        let (_, orig_std) = mean_std(ds.targets.iter().copied(), ds.len() as f64);
        let (c, idx) = contaminate(&ds, 0.5, 8).unwrap();
        assert_eq!(idx.len(), 100_000);
        let (_, s) = mean_std(idx.iter().map(|&i| c.targets[i]), idx.len() as f64);
        assert!((s / (10.0 * orig_std) - 1.0).abs() < 0.02);
    }

    #[test]
    fn normalization_round_trip() {
        let ds = gen_cubic(500, 2).unwrap();
        let norm = ds.normalize().unwrap();
        let (m, s) = mean_std(norm.targets.iter().copied(), norm.len() as f64);
        assert!(m.abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
        let back = norm.denormalize();
        for (a, b) in back.inputs.iter().zip(&ds.inputs) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in back.targets.iter().zip(&ds.targets) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        assert!(norm.normalize().is_err());
    }

    #[test]
    fn csv_hand_example() {
        let text = "a,b,target\n1,10,2\n2,20,4\n3,30,9\n";
        let ds = parse_csv(text, &TargetColumn::Name("target".into()), "hand").unwrap();
        assert_eq!(ds.n_features, 2);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        let n = ds.normalize().unwrap();
        // a: mean 2, population std √(2/3).
        let s = (2.0f64 / 3.0).sqrt();
        assert_eq!(n.row(0)[0], -1.0 / s);
        assert_eq!(n.row(1)[0], 0.0);
        // target: mean 5, population std √(26/3).
        let st = (26.0f64 / 3.0).sqrt();
        assert!((n.targets[2] - 4.0 / st).abs() < 1e-15);
        let by_index = parse_csv(text, &TargetColumn::Index(2), "hand").unwrap();
        assert_eq!(by_index.targets, ds.targets);
    }

    #[test]
    fn csv_errors_name_the_cell() {
        let err = parse_csv("a,y\n1,2\n3,\n", &TargetColumn::Index(1), "t").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            e => panic!("unexpected {e}"),
        }
        let err = parse_csv("a,y\n1,NaN\n", &TargetColumn::Index(1), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        let err = parse_csv("a,y\n1,2\n1,3\n", &TargetColumn::Index(1), "t")
            .unwrap()
            .normalize()
            .unwrap_err();
        assert!(err.to_string().contains("'a'"));
        assert!(parse_csv("a,y\n1,2\n", &TargetColumn::Name("z".into()), "t").is_err());
    }

    #[test]
    fn csv_export_round_trip() {
        let ds = gen_sine_outliers(50, 0.1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# sine"));
        let back = load_csv(&path, &TargetColumn::Name("y".into())).unwrap();
        for (a, b) in back.inputs.iter().zip(&ds.inputs) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(back.targets, ds.targets);
    }

    #[test]
    fn folds_partition() {
        let folds = split_folds(100, 3, 0.95, 7).unwrap();
        assert_eq!(folds, split_folds(100, 3, 0.95, 7).unwrap());
        for f in &folds {
            assert_eq!(f.train.len(), 95);
            assert_eq!(f.test.len(), 5);
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
        assert_ne!(folds[0], folds[1]);
        assert!(split_folds(100, 0, 0.9, 1).is_err());
        assert!(split_folds(100, 1, 1.0, 1).is_err());
        let f = split_first_k(10, 7).unwrap();
        assert_eq!(f.test, vec![7, 8, 9]);
    }
}
