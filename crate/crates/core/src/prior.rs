//! The normal-gamma prior: exact Bayesian update, KL divergence between two
//! priors, the per-sample gradient of that divergence, the Student-t
//! predictive density, and the mean/variance estimators.

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_finite, Result};
use crate::specfun::{digamma_unchecked, ln_gamma_unchecked, solve_a_root};

/// Parameters `(m, ν, α, β)` of a normal-gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaParams {
    pub m: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGammaParams {
    /// Validating constructor.
    pub fn new(m: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { m, nu, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("m", self.m)?;
        for (name, v) in [("nu", self.nu), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `σ = β(ν+1)/ν`, the squared scale of the predictive Student-t up to `α`.
    pub fn sigma(&self) -> f64 {
        self.beta * (self.nu + 1.0) / self.nu
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.m, self.nu, self.alpha, self.beta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            m: a[0],
            nu: a[1],
            alpha: a[2],
            beta: a[3],
        }
    }
}

/// Gradient of the per-sample KL divergence with respect to `(m, α, β, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcpGradient {
    pub d_m: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
    pub d_nu: f64,
}

impl GcpGradient {
    pub fn is_finite(&self) -> bool {
        self.d_m.is_finite()
            && self.d_alpha.is_finite()
            && self.d_beta.is_finite()
            && self.d_nu.is_finite()
    }
}

/// Point and spread estimates derived from a prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEstimates {
    pub mean_est: f64,
    /// `β(ν+1)/((α−1)ν)`; only defined for `α > 1`.
    pub v_est: Option<f64>,
    /// `β(ν+1)/((α−A(α))ν)`.
    pub v_corrected: f64,
    /// Small values flag unreliable predictions.
    pub alpha: f64,
}

/// The exact Bayesian update after one observation `y`.
pub fn cp_update(prior: &NormalGammaParams, y: f64) -> Result<NormalGammaParams> {
    prior.validate()?;
    require_finite("y", y)?;
    let NormalGammaParams { m, nu, alpha, beta } = *prior;
    let r = y - m;
    Ok(NormalGammaParams {
        m: (nu * m + y) / (nu + 1.0),
        nu: nu + 1.0,
        alpha: alpha + 0.5,
        beta: beta + nu / (nu + 1.0) * r * r / 2.0,
    })
}

/// `KL(p_post ‖ p)` in closed form.
pub fn kl_divergence(p: &NormalGammaParams, p_post: &NormalGammaParams) -> Result<f64> {
    p.validate()?;
    p_post.validate()?;
    Ok(kl_unchecked(p, p_post))
}

fn kl_unchecked(p: &NormalGammaParams, q: &NormalGammaParams) -> f64 {
    let dm = p.m - q.m;
    let ratio = p.nu / q.nu;
    0.5 * (q.alpha / q.beta) * dm * dm * p.nu + 0.5 * ratio - 0.5 * ratio.ln() - 0.5
        - p.alpha * (p.beta / q.beta).ln()
        + ln_gamma_unchecked(p.alpha)
        - ln_gamma_unchecked(q.alpha)
        - (p.alpha - q.alpha) * digamma_unchecked(q.alpha)
        + (p.beta - q.beta) * q.alpha / q.beta
}

/// Gradient of `KL(p′ ‖ p)` with respect to `p`, where the posterior `p′`
/// is computed from `p` and `y` and then held fixed.
pub fn gcp_gradients(params: &NormalGammaParams, y: f64) -> Result<GcpGradient> {
    params.validate()?;
    require_finite("y", y)?;
    Ok(gcp_gradients_unchecked(params, y))
}

pub(crate) fn gcp_gradients_unchecked(p: &NormalGammaParams, y: f64) -> GcpGradient {
    let NormalGammaParams { m, nu, alpha, beta } = *p;
    let sigma = p.sigma();
    let r = m - y;
    let q = r * r / (2.0 * sigma);
    let ap = alpha + 0.5;
    GcpGradient {
        d_m: ap * r / (sigma * (1.0 + q)),
        d_alpha: q.ln_1p() + digamma_unchecked(alpha) - digamma_unchecked(ap),
        d_beta: (ap / (1.0 + q) - alpha) / beta,
        d_nu: (ap * 2.0 * q / (1.0 + q) - 1.0) / (2.0 * nu * (nu + 1.0)),
    }
}

/// Log density of the predictive Student-t with `2α` degrees of freedom,
/// location `m` and squared scale `σ/α`.
pub fn student_t_logpdf(params: &NormalGammaParams, y: f64) -> Result<f64> {
    params.validate()?;
    require_finite("y", y)?;
    Ok(student_t_logpdf_unchecked(params, y))
}

pub(crate) fn student_t_logpdf_unchecked(p: &NormalGammaParams, y: f64) -> f64 {
    let sigma = p.sigma();
    let r = y - p.m;
    ln_gamma_unchecked(p.alpha + 0.5)
        - ln_gamma_unchecked(p.alpha)
        - 0.5 * (2.0 * std::f64::consts::PI * sigma).ln()
        - (p.alpha + 0.5) * (r * r / (2.0 * sigma)).ln_1p()
}

/// Mean estimate, the uncorrected variance estimate (for `α > 1`) and the
/// corrected variance estimate.
pub fn predictive_estimates(params: &NormalGammaParams) -> Result<PredictiveEstimates> {
    params.validate()?;
    let sigma = params.sigma();
    let root = solve_a_root(params.alpha)?;
    Ok(PredictiveEstimates {
        mean_est: params.m,
        v_est: (params.alpha > 1.0).then(|| sigma / (params.alpha - 1.0)),
        v_corrected: sigma / root.alpha_minus_a,
        alpha: params.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(m: f64, nu: f64, alpha: f64, beta: f64) -> NormalGammaParams {
        NormalGammaParams::new(m, nu, alpha, beta).unwrap()
    }

    #[test]
    fn cp_update_examples() {
        assert_eq!(cp_update(&p(0.0, 1.0, 1.0, 1.0), 2.0).unwrap(), p(1.0, 2.0, 1.5, 2.0));
        // m′ = (3·0 + 4)/4 = 1 and β′ = 1 + (3/4)·16/2 = 7.
        assert_eq!(cp_update(&p(0.0, 3.0, 2.0, 1.0), 4.0).unwrap(), p(1.0, 4.0, 2.5, 7.0));
        let q = p(0.5, 2.0, 3.0, 0.4);
        assert_eq!(cp_update(&q, 0.5).unwrap(), p(0.5, 3.0, 3.5, 0.4));
        assert!(cp_update(&q, f64::NAN).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(NormalGammaParams::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(NormalGammaParams::new(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(NormalGammaParams::new(f64::INFINITY, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kl_zero_on_identity() {
        let q = p(0.3, 2.0, 1.7, 0.9);
        assert!(kl_divergence(&q, &q).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gradients_at_zero_residual() {
        let g = gcp_gradients(&p(0.0, 1.0, 1.0, 2.0), 0.0).unwrap();
        assert_eq!(g.d_m, 0.0);
        assert!((g.d_beta - 0.25).abs() < 1e-15);
        assert!((g.d_nu + 0.25).abs() < 1e-15);
    }

    #[test]
    fn logpdf_symmetry() {
        let q = p(1.5, 1.0, 2.0, 1.0);
        for d in [0.1, 1.0, 5.0] {
            let a = student_t_logpdf(&q, 1.5 + d).unwrap();
            let b = student_t_logpdf(&q, 1.5 - d).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn predictive_examples() {
        let e = predictive_estimates(&p(0.0, 1.0, 2.0, 1.0)).unwrap();
        assert_eq!(e.mean_est, 0.0);
        assert!((e.v_est.unwrap() - 2.0).abs() < 1e-15);
        assert!((e.v_corrected - 2.0 / (2.0 - 0.6188663866582079)).abs() < 1e-12);
        assert!((e.v_corrected - 1.448).abs() < 1e-3);

        let e = predictive_estimates(&p(0.0, 1.0, 0.8, 1.0)).unwrap();
        assert!(e.v_est.is_none());
        assert!(e.v_corrected > 0.0);
    }

    #[test]
    fn large_alpha_estimates_agree() {
        let alpha = 1e4;
        let d = solve_a_root(alpha).unwrap().alpha_minus_a;
        // σ = 2β at ν = 1; pick β so that v_corrected = 1.
        let q = p(0.0, 1.0, alpha, d / 2.0);
        let e = predictive_estimates(&q).unwrap();
        assert!((e.v_corrected - 1.0).abs() < 1e-12);
        assert!((e.v_est.unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn estimate_ratio() {
        for alpha in [1.5, 3.0, 40.0] {
            let e = predictive_estimates(&p(0.0, 2.0, alpha, 0.7)).unwrap();
            let a = solve_a_root(alpha).unwrap().a;
            let want = (alpha - a) / (alpha - 1.0);
            assert!((e.v_est.unwrap() / e.v_corrected - want).abs() < 1e-12);
        }
    }
}
