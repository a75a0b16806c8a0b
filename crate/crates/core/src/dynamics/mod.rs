//! Expectation-level dynamics of the prior parameters under a Gaussian ground
//! truth: the gradient-flow ODEs, their integration, and the curves and
//! constants that organize their phase portraits.

mod expect;
mod ode;

pub use expect::{expected_gradients, expected_gradients_with, ExpectationRule};
pub use ode::integrate;

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_finite, require_positive, Error, Result};
use crate::prior::NormalGammaParams;
use crate::quadrature::normal_expectation;
use crate::specfun::{digamma_unchecked, solve_a_root};

/// Mean and variance of the Gaussian that generates the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mean: f64,
    pub variance: f64,
}

impl GroundTruth {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        require_finite("ground-truth mean", mean)?;
        require_positive("ground-truth variance", variance)?;
        Ok(Self { mean, variance })
    }
}

/// Which coordinates evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `(m, ν, α, β)` all evolve.
    Full,
    /// `α` is held at its initial value.
    FixedAlpha,
    /// Only `m` evolves.
    MeanOnly,
}

impl Mode {
    fn active(self) -> [bool; 4] {
        match self {
            Mode::Full => [true; 4],
            Mode::FixedAlpha => [true, true, false, true],
            Mode::MeanOnly => [true, false, false, false],
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    /// Classical fixed-step RK4; `step` is the step size and one state is
    /// recorded per step.
    Rk4,
    /// Adaptive L-stable Rosenbrock (2,3) pair for long stiff runs; `step` is
    /// the initial step size and every accepted step is recorded.
    Rosenbrock { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub step: f64,
    pub max_time: f64,
    pub quadrature_nodes: usize,
    /// Integration stops once the norm of the active time derivatives falls
    /// below this value.
    pub stop_tolerance: f64,
    pub mode: Mode,
    pub scheme: Scheme,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_time: 50.0,
            quadrature_nodes: 96,
            stop_tolerance: 1e-10,
            mode: Mode::Full,
            scheme: Scheme::Rk4,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("step", self.step)?;
        require_positive("max_time", self.max_time)?;
        if self.step >= self.max_time {
            return Err(domain(format!(
                "step {} must be smaller than max_time {}",
                self.step, self.max_time
            )));
        }
        if self.quadrature_nodes < 32 {
            return Err(domain(format!(
                "quadrature_nodes must be at least 32, got {}",
                self.quadrature_nodes
            )));
        }
        if !(self.stop_tolerance >= 0.0) {
            return Err(domain("stop_tolerance must be non-negative"));
        }
        if let Scheme::Rosenbrock { rtol, atol } = self.scheme {
            require_positive("rtol", rtol)?;
            require_positive("atol", atol)?;
        }
        Ok(())
    }
}

/// Quantities derived from one recorded state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub sigma: f64,
    pub v_est: Option<f64>,
    pub v_corrected: f64,
    /// `σ*(α) < σ < σ₀(α)`, evaluated as `σ < σ₀(α)` and `α̇ > 0` at `m = E[y]`.
    pub in_strip: bool,
    /// `β² + ν² + 2ν³/3`.
    pub integral_curve_constant: f64,
    /// Time derivatives `(ṁ, ν̇, α̇, β̇)` of the integrated system.
    pub rates: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NormalGammaParams>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// First recorded time inside the strip.
    pub strip_entry_time: Option<f64>,
    /// True when the stop tolerance ended the run before `max_time`.
    pub converged: bool,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &NormalGammaParams {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn final_diagnostics(&self) -> &StepDiagnostics {
        self.diagnostics.last().expect("trajectory holds the initial state")
    }

    /// Largest relative deviation of the integral-curve constant from its
    /// initial value.
    pub fn integral_curve_drift(&self) -> f64 {
        let c0 = self.diagnostics[0].integral_curve_constant;
        self.diagnostics
            .iter()
            .map(|d| ((d.integral_curve_constant - c0) / c0).abs())
            .fold(0.0, f64::max)
    }

    /// Whether any state after the strip entry lies outside the strip.
    pub fn left_strip_after_entry(&self) -> bool {
        match self.diagnostics.iter().position(|d| d.in_strip) {
            Some(i) => self.diagnostics[i..].iter().any(|d| !d.in_strip),
            None => false,
        }
    }

    /// CSV with columns `t,m,nu,alpha,beta,sigma,v_est,v_corrected,in_strip,C`;
    /// `v_est` is empty where undefined.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,m,nu,alpha,beta,sigma,v_est,v_corrected,in_strip,C\n");
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let v_est = d.v_est.map(|v| format!("{v:?}")).unwrap_or_default();
            out.push_str(&format!(
                "{t:?},{:?},{:?},{:?},{:?},{:?},{v_est},{:?},{},{:?}\n",
                s.m,
                s.nu,
                s.alpha,
                s.beta,
                d.sigma,
                d.v_corrected,
                u8::from(d.in_strip),
                d.integral_curve_constant
            ));
        }
        out
    }
}

/// `C = β² + ν² + 2ν³/3`, constant along `(ν, β)` trajectories.
pub fn integral_curve_constant(nu: f64, beta: f64) -> Result<f64> {
    require_positive("nu", nu)?;
    require_positive("beta", beta)?;
    Ok(beta * beta + nu * nu + 2.0 * nu * nu * nu / 3.0)
}

/// `σ₀(α) = (α − A(α))V`, where the expected β and ν gradients vanish.
pub fn sigma_zero(alpha: f64, variance: f64) -> Result<f64> {
    require_positive("variance", variance)?;
    Ok(solve_a_root(alpha)?.alpha_minus_a * variance)
}

/// The `σ` at which the expected α-gradient vanishes (with `m = E[y]`).
pub fn sigma_star(alpha: f64, gt: &GroundTruth, cfg: &OdeConfig) -> Result<f64> {
    require_positive("alpha", alpha)?;
    let rule = ExpectationRule::new(cfg.quadrature_nodes)?;
    let psi = digamma_unchecked(alpha) - digamma_unchecked(alpha + 0.5);
    // E[∂K/∂α] depends on σ only through s = σ/V and decreases in s.
    let phi = |s: f64| -> Result<f64> { Ok(expect::expected_log_term(s, &rule)? + psi) };
    let s0 = solve_a_root(alpha)?.alpha_minus_a;
    let (mut lo, mut hi) = (1e-8 * s0, s0);
    let (f_lo, f_hi) = (phi(lo)?, phi(hi)?);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Numerical(format!(
            "sigma_star bracket failed at alpha = {alpha}: phi = ({f_lo}, {f_hi})"
        )));
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * gt.variance)
}

/// Intersection of the integral curve through `(ν₀, β₀)` with the curve of
/// equilibria `β(ν+1)/ν = (α − A(α))V`. Returns `(ν*, β*)`.
pub fn fixed_alpha_equilibrium(alpha: f64, variance: f64, nu0: f64, beta0: f64) -> Result<(f64, f64)> {
    let c = integral_curve_constant(nu0, beta0)?;
    let s0 = sigma_zero(alpha, variance)?;
    let g2 = |nu: f64| c - nu * nu - 2.0 * nu * nu * nu / 3.0;
    // ν_max: where the integral curve meets β = 0.
    let (mut lo, mut hi) = (0.0, c.sqrt().max(1.0));
    while g2(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g2(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu_max = lo;
    // φ(ν) = g(ν)(ν+1)/ν − σ₀ decreases from +∞ to −σ₀ on (0, ν_max).
    let phi = |nu: f64| g2(nu).max(0.0).sqrt() * (nu + 1.0) / nu - s0;
    let (mut lo, mut hi) = (0.0, nu_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    if !(nu > 0.0 && nu < nu_max) {
        return Err(Error::Numerical(format!(
            "no equilibrium on the integral curve C = {c}"
        )));
    }
    Ok((nu, g2(nu).max(0.0).sqrt()))
}

/// `f′(ν) g′(ν)` for the equilibrium curve `f(ν) = σ₀ν/(ν+1)` and the
/// integral curve through `(ν, f(ν))`, whose slope is `g′ = −ν(ν+1)/β`.
pub fn orthogonality_check(alpha: f64, variance: f64, nu: f64) -> Result<f64> {
    require_positive("nu", nu)?;
    let s0 = sigma_zero(alpha, variance)?;
    let beta = s0 * nu / (nu + 1.0);
    let f_prime = s0 / ((nu + 1.0) * (nu + 1.0));
    let g_prime = -nu * (nu + 1.0) / beta;
    Ok(f_prime * g_prime)
}

/// `k(α) = (α + ½) E[(a − z²/2)/(a + z²/2)²]` with `a = c(α − A(α))`, the
/// coefficient of `1/V` in the expected m-gradient for large `V` at unit
/// offset `m − E[y] = 1` and `σ = cV(α − A(α))`.
pub fn mean_gradient_asymptote(alpha: f64, c: f64) -> Result<f64> {
    require_positive("c", c)?;
    let a = c * solve_a_root(alpha)?.alpha_minus_a;
    let e = normal_expectation(
        |z| {
            let h = 0.5 * z * z;
            (a - h) / ((a + h) * (a + h))
        },
        1e-14,
        1e-12,
    )?;
    let k = (alpha + 0.5) * e.value;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Numerical(format!("k({alpha}) = {k} is not positive")));
    }
    Ok(k)
}
