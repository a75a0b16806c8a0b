//! Expected per-sample gradients under a Gaussian ground truth.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::prior::{GcpGradient, NormalGammaParams};
use crate::quadrature::{normal_expectation, GaussHermite};
use crate::specfun::{digamma_unchecked, half_minus_x_f_unchecked};

use super::GroundTruth;

/// Tolerance for the agreement between the `n`- and `2n`-node rules.
const GH_TOL: f64 = 1e-8;

/// A Gauss–Hermite rule together with its doubled companion, used to gate
/// accuracy. Integrands the pair cannot resolve (sharply peaked ones) fall
/// back to adaptive Gauss–Kronrod.
#[derive(Debug, Clone)]
pub struct ExpectationRule {
    base: GaussHermite,
    check: GaussHermite,
}

impl ExpectationRule {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 32 {
            return Err(Error::Domain(format!(
                "quadrature_nodes must be at least 32, got {nodes}"
            )));
        }
        Ok(Self {
            base: GaussHermite::new(nodes)?,
            check: GaussHermite::new(2 * nodes)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.base.len()
    }

    /// The shared 96-node rule.
    pub fn default_rule() -> &'static ExpectationRule {
        static RULE: OnceLock<ExpectationRule> = OnceLock::new();
        RULE.get_or_init(|| ExpectationRule::new(96).expect("96-node rule"))
    }

    /// `E[f(z)]` componentwise, with the n/2n gate and adaptive fallback.
    pub(crate) fn expect<const K: usize>(&self, f: impl Fn(f64) -> [f64; K]) -> Result<[f64; K]> {
        let a = self.expect_fast(&f);
        let b = self.expect_with(&self.check, &f);
        let mut out = b;
        for k in 0..K {
            if !b[k].is_finite() {
                return Err(Error::Numerical("non-finite expectation".into()));
            }
            if (a[k] - b[k]).abs() > GH_TOL * b[k].abs().max(1.0) {
                out[k] = normal_expectation(|z| f(z)[k], 1e-13, 1e-11)
                    .map_err(|e| {
                        Error::Numerical(format!(
                            "expectation component {k} unresolved by {}/{} Hermite nodes \
                             and adaptive fallback: {e}",
                            self.base.len(),
                            self.check.len()
                        ))
                    })?
                    .value;
            }
        }
        Ok(out)
    }

    /// `E[f(z)]` with the base rule only.
    pub(crate) fn expect_fast<const K: usize>(&self, f: impl Fn(f64) -> [f64; K]) -> [f64; K] {
        self.expect_with(&self.base, f)
    }

    fn expect_with<const K: usize>(
        &self,
        rule: &GaussHermite,
        f: impl Fn(f64) -> [f64; K],
    ) -> [f64; K] {
        rule.expect_array(f)
    }
}

/// `E[ln(1 + z²/(2s))]` for standard normal `z`.
pub(crate) fn expected_log_term(s: f64, rule: &ExpectationRule) -> Result<f64> {
    let inv = 0.5 / s;
    Ok(rule.expect(|z| [(z * z * inv).ln_1p()])?[0])
}

/// `E[∂K/∂(m, α, β, ν)]` for `y ~ N(gt.mean, gt.variance)`, using the shared
/// 96-node rule.
pub fn expected_gradients(params: &NormalGammaParams, gt: &GroundTruth) -> Result<GcpGradient> {
    expected_gradients_with(params, gt, ExpectationRule::default_rule())
}

/// As [`expected_gradients`] with an explicit quadrature rule.
///
/// At `m = E[y]` the β and ν components use the closed forms in `F`; the m
/// component is zero by symmetry there.
pub fn expected_gradients_with(
    params: &NormalGammaParams,
    gt: &GroundTruth,
    rule: &ExpectationRule,
) -> Result<GcpGradient> {
    params.validate()?;
    let NormalGammaParams { m, nu, alpha, beta } = *params;
    let sigma = params.sigma();
    let ap = alpha + 0.5;
    let psi = digamma_unchecked(alpha) - digamma_unchecked(ap);
    let delta = m - gt.mean;
    let sv = gt.variance.sqrt();
    let g = if delta == 0.0 {
        let s = sigma / gt.variance;
        // G = 1 − 2sF(s) = E[q/(1+q)], q = (m−y)²/(2σ).
        let big_g = 2.0 * half_minus_x_f_unchecked(s);
        GcpGradient {
            d_m: 0.0,
            d_alpha: expected_log_term(s, rule)? + psi,
            d_beta: (0.5 - ap * big_g) / beta,
            d_nu: ((2.0 * alpha + 1.0) * big_g - 1.0) / (2.0 * nu * (nu + 1.0)),
        }
    } else {
        let [em, elog, ew] = rule.expect(|z| integrands(delta, sv, sigma, z))?;
        from_moments(ap, alpha, beta, nu, em, elog, ew, psi)
    };
    if !g.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite expected gradient at {params:?}"
        )));
    }
    Ok(g)
}

/// Base-rule-only evaluation for Jacobian finite differences, where the
/// accuracy gate would only cost time.
pub(crate) fn expected_gradients_fast(
    params: &NormalGammaParams,
    gt: &GroundTruth,
    rule: &ExpectationRule,
) -> GcpGradient {
    let NormalGammaParams { m, nu, alpha, beta } = *params;
    let sigma = params.sigma();
    let ap = alpha + 0.5;
    let psi = digamma_unchecked(alpha) - digamma_unchecked(ap);
    let delta = m - gt.mean;
    let sv = gt.variance.sqrt();
    let [em, elog, ew] = rule.expect_fast(|z| integrands(delta, sv, sigma, z));
    from_moments(ap, alpha, beta, nu, em, elog, ew, psi)
}

/// `[(m−y)/(σ(1+q)), ln(1+q), 1/(1+q)]` at `y = E[y] + √V z`.
#[inline]
fn integrands(delta: f64, sv: f64, sigma: f64, z: f64) -> [f64; 3] {
    let r = delta - sv * z;
    let q = r * r / (2.0 * sigma);
    let w = 1.0 / (1.0 + q);
    [r * w / sigma, q.ln_1p(), w]
}

#[allow(clippy::too_many_arguments)]
fn from_moments(
    ap: f64,
    alpha: f64,
    beta: f64,
    nu: f64,
    em: f64,
    elog: f64,
    ew: f64,
    psi: f64,
) -> GcpGradient {
    GcpGradient {
        d_m: ap * em,
        d_alpha: elog + psi,
        d_beta: (ap * ew - alpha) / beta,
        d_nu: ((2.0 * alpha + 1.0) * (1.0 - ew) - 1.0) / (2.0 * nu * (nu + 1.0)),
    }
}
