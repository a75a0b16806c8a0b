//! Per-sample losses and their gradients with respect to the head outputs.

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_finite, require_positive, Result};
use crate::prior::{gcp_gradients, student_t_logpdf, GcpGradient};

use super::{HeadKind, HeadOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Negative Student-t log-likelihood of the predictive distribution,
    /// whose gradient is the KL-divergence gradient of the GCP update.
    Gcp,
    /// `p(m − y)² − ln p`.
    GaussianMl,
    /// `(m − y)²`.
    SquaredError,
    /// Density power divergence for `N(m, 1/p)`.
    Dpd,
}

impl LossKind {
    pub fn head_kind(self) -> HeadKind {
        match self {
            LossKind::Gcp => HeadKind::NormalGamma,
            _ => HeadKind::Gaussian,
        }
    }
}

/// Gradient of a per-sample loss with respect to the activated heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadGradient {
    NormalGamma(GcpGradient),
    Gaussian { d_m: f64, d_p: f64 },
}

impl HeadGradient {
    /// Components in head-row order: `(m, α, β, ν)` or `(m, p)`.
    pub fn components(&self) -> Vec<f64> {
        match *self {
            HeadGradient::NormalGamma(g) => vec![g.d_m, g.d_alpha, g.d_beta, g.d_nu],
            HeadGradient::Gaussian { d_m, d_p } => vec![d_m, d_p],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

/// Loss value and head gradient for one sample.
///
/// The DPD objective with exponent `γ` is
/// `−(1 + 1/γ) f(y)^γ + ∫ f^{1+γ}`, where `f` is the `N(m, 1/p)` density and
/// `∫ f^{1+γ} = (p/2π)^{γ/2} / √(1+γ)`.
pub fn loss_and_head_grads(kind: LossKind, heads: &HeadOutput, y: f64, dpd_exponent: f64) -> Result<(f64, HeadGradient)> {
    require_finite("target", y)?;
    match (kind, *heads) {
        (LossKind::Gcp, HeadOutput::NormalGamma(p)) => {
            let loss = -student_t_logpdf(&p, y)?;
            Ok((loss, HeadGradient::NormalGamma(gcp_gradients(&p, y)?)))
        }
        (LossKind::SquaredError, HeadOutput::Gaussian { m, .. }) => {
            require_finite("m", m)?;
            let r = m - y;
            Ok((r * r, HeadGradient::Gaussian { d_m: 2.0 * r, d_p: 0.0 }))
        }
        (LossKind::GaussianMl, HeadOutput::Gaussian { m, p }) => {
            require_finite("m", m)?;
            require_positive("precision p", p)?;
            let r = m - y;
            Ok((
                p * r * r - p.ln(),
                HeadGradient::Gaussian {
                    d_m: 2.0 * p * r,
                    d_p: r * r - 1.0 / p,
                },
            ))
        }
        (LossKind::Dpd, HeadOutput::Gaussian { m, p }) => {
            require_finite("m", m)?;
            require_positive("precision p", p)?;
            require_positive("dpd exponent", dpd_exponent)?;
            let g = dpd_exponent;
            let r = y - m;
            let c = (p / (2.0 * std::f64::consts::PI)).powf(0.5 * g);
            let u = c * (-0.5 * g * p * r * r).exp();
            let integral = c / (1.0 + g).sqrt();
            let loss = -(1.0 + 1.0 / g) * u + integral;
            let d_m = -(1.0 + g) * u * p * r;
            let d_p = -(1.0 + g) * u * (0.5 / p - 0.5 * r * r) + g * integral / (2.0 * p);
            Ok((loss, HeadGradient::Gaussian { d_m, d_p }))
        }
        (kind, heads) => Err(domain(format!(
            "loss {kind:?} does not apply to heads {heads:?}"
        ))),
    }
}
