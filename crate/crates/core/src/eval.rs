//! Evaluation measures: RMSE, the variance-ordered RMSE(n) curve, its
//! normalized area, and a paired significance test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Result};

/// Scores of one method on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold_id: usize,
    pub method: String,
    pub rmse: f64,
    pub auc: f64,
    pub rmse_curve: Vec<f64>,
}

impl EvalReport {
    /// Scores predictions on denormalized values.
    pub fn compute(
        fold_id: usize,
        method: impl Into<String>,
        predictions: &[f64],
        variances: &[f64],
        targets: &[f64],
    ) -> Result<Self> {
        let rmse_curve = rmse_curve(predictions, variances, targets)?;
        Ok(Self {
            fold_id,
            method: method.into(),
            rmse: rmse(predictions, targets)?,
            auc: auc(&rmse_curve)?,
            rmse_curve,
        })
    }
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(domain(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(domain("rmse of an empty set"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// `RMSE(n)` for `n = 0..N−1`: the RMSE over the `N − n` samples left after
/// removing the `n` with the largest predicted variance. Ties are removed in
/// original index order.
pub fn rmse_curve(predictions: &[f64], variances: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    let n = targets.len();
    if predictions.len() != n || variances.len() != n {
        return Err(domain("predictions, variances and targets differ in length"));
    }
    if n < 2 {
        return Err(domain("rmse_curve needs at least two samples"));
    }
    if variances.iter().any(|v| v.is_nan()) {
        return Err(domain("NaN predicted variance"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort, descending variance: equal variances keep index order.
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let sq: Vec<f64> = order
        .iter()
        .map(|&i| (predictions[i] - targets[i]).powi(2))
        .collect();
    // Suffix sums of squared errors, accumulated from the lowest variance up.
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + sq[k];
    }
    let mut curve: Vec<f64> = (0..n)
        .map(|removed| (suffix[removed] / (n - removed) as f64).sqrt())
        .collect();
    // Summed in index order so that RMSE(0) equals `rmse` bit for bit.
    curve[0] = rmse(predictions, targets)?;
    Ok(curve)
}

/// `(1/(N−1)) Σ (RMSE(n) + RMSE(n+1))/2`.
pub fn auc(curve: &[f64]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(domain("auc needs a curve of length at least two"));
    }
    let s: f64 = curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    Ok(s / (curve.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    SignificantABetter,
    SignificantBBetter,
    Indistinguishable,
}

/// Two-tailed paired t-test on `a − b`; lower scores are better.
pub fn paired_diff_test(scores_a: &[f64], scores_b: &[f64], p_threshold: f64) -> Result<Significance> {
    let n = scores_a.len();
    if scores_b.len() != n {
        return Err(domain("paired test needs equal-length score vectors"));
    }
    if n < 2 {
        return Err(domain("paired test needs at least two pairs"));
    }
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return Err(domain(format!("p threshold must lie in (0, 1), got {p_threshold}")));
    }
    let diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        // Constant differences: zero is indistinguishable, anything else is a
        // deterministic improvement.
        return Ok(if mean == 0.0 {
            Significance::Indistinguishable
        } else if mean < 0.0 {
            Significance::SignificantABetter
        } else {
            Significance::SignificantBBetter
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| domain(e.to_string()))?;
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(if p >= p_threshold {
        Significance::Indistinguishable
    } else if mean < 0.0 {
        Significance::SignificantABetter
    } else {
        Significance::SignificantBBetter
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(
            rmse(&[0.0, 1.0, 5.0], &[3.0, 4.0, 1.0]).unwrap(),
            rmse(&[5.0, 0.0, 1.0], &[1.0, 3.0, 4.0]).unwrap()
        );
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn curve_examples() {
        let c = rmse_curve(&[9.0, 0.0, 0.0], &[3.0, 2.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c, vec![27.0f64.sqrt(), 0.0, 0.0]);
        let preds = [1.0, 2.0, 3.0, 4.0];
        let targets = [0.0, 0.0, 0.0, 0.0];
        let c = rmse_curve(&preds, &[1.0; 4], &targets).unwrap();
        assert_eq!(c[0], rmse(&preds, &targets).unwrap());
        // Ties removed in index order: RMSE(3) keeps only the last sample.
        assert_eq!(c[3], 4.0);
        // Anti-calibrated: the lowest variance sits on the largest error.
        let c = rmse_curve(&preds, &[4.0, 3.0, 2.0, 1.0], &targets).unwrap();
        assert_eq!(c[3], 4.0);
        assert!(rmse_curve(&[1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[2.0, 1.0]).unwrap(), 1.5);
        assert_eq!(auc(&[3.0, 2.0, 1.0]).unwrap(), 2.0);
        assert_eq!(auc(&[0.7; 5]).unwrap(), 0.7);
        assert!(auc(&[1.0]).is_err());
    }

    #[test]
    fn paired_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(paired_diff_test(&a, &a, 0.05).unwrap(), Significance::Indistinguishable);
        assert_eq!(
            paired_diff_test(&[1.0, 2.0], &[2.0, 1.0], 0.05).unwrap(),
            Significance::Indistinguishable
        );
        let b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let a: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(i, v)| v + 10.0 + 1e-3 * ((i * 7919) % 13) as f64)
            .collect();
        assert_eq!(paired_diff_test(&a, &b, 0.05).unwrap(), Significance::SignificantBBetter);
        assert_eq!(paired_diff_test(&b, &a, 0.05).unwrap(), Significance::SignificantABetter);
    }

    #[test]
    fn t_cdf_reference() {
        // Two-tailed p for t = 2.262 with 9 degrees of freedom is 0.05.
        let d = StudentsT::new(0.0, 1.0, 9.0).unwrap();
        assert!((2.0 * d.cdf(-2.262157) - 0.05).abs() < 1e-6);
    }
}
