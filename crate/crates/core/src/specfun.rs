//! Special functions: log-gamma, digamma, the complementary error function,
//! the integral `F(x) = E[1/(2x + z²)]` for standard normal `z`, and the
//! root function `A(α)` together with the curves derived from it.
//!
//! Everything here is self-contained `f64` arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_finite, require_positive, Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// ζ(k) for k = 2..=30.
const ZETA: [f64; 29] = [
    1.6449340668482264,
    1.2020569031595942,
    1.0823232337111381,
    1.03692775514337,
    1.0173430619844492,
    1.008349277381923,
    1.0040773561979444,
    1.0020083928260821,
    1.000994575127818,
    1.0004941886041194,
    1.000246086553308,
    1.0001227133475785,
    1.0000612481350588,
    1.000030588236307,
    1.0000152822594086,
    1.0000076371976379,
    1.000003817293265,
    1.0000019082127165,
    1.0000009539620338,
    1.0000004769329869,
    1.0000002384505027,
    1.000000119219926,
    1.000000059608189,
    1.0000000298035034,
    1.0000000149015549,
    1.0000000074507118,
    1.000000003725334,
    1.0000000018626598,
    1.0000000009313275,
];

/// `ln Γ(1 + ε)` for small |ε| from its Taylor series in ζ values.
fn ln_gamma_1p(eps: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = -eps;
    for (i, z) in ZETA.iter().enumerate() {
        pow *= -eps;
        sum += z * pow / (i + 2) as f64;
    }
    -EULER_GAMMA * eps + sum
}

fn ln_gamma_stirling(x: f64) -> f64 {
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360360.0,
        1.0 / 156.0,
        -3617.0 / 122400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut p = inv;
    for c in C {
        series += c * p;
        p *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    require_positive("ln_gamma argument", x)?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if (x - 1.0).abs() <= 0.25 {
        return ln_gamma_1p(x - 1.0);
    }
    if (x - 2.0).abs() <= 0.25 {
        let e = x - 2.0;
        return e.ln_1p() + ln_gamma_1p(e);
    }
    if x >= 10.0 {
        return ln_gamma_stirling(x);
    }
    let mut prod = 1.0;
    let mut y = x;
    while y < 10.0 {
        prod *= y;
        y += 1.0;
    }
    ln_gamma_stirling(y) - prod.ln()
}

/// The digamma function Ψ(x) = Γ′(x)/Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    require_positive("digamma argument", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x <= 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    // B_{2k} / (2k), k = 1..=9.
    const C: [f64; 9] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
        -3617.0 / 8160.0,
        43867.0 / 14364.0,
    ];
    let inv2 = 1.0 / (x * x);
    let mut tail = 0.0;
    for c in C.iter().rev() {
        tail = (tail + c) * inv2;
    }
    shift + x.ln() - 0.5 / x - tail
}

/// Continued-fraction tail `R(t)` with `erfcx(t) = 1 / (√π (t + R(t)))`,
/// valid for `t ≥ 2` where the fraction converges quickly.
fn erfcx_cf_tail(t: f64) -> f64 {
    0.5 / (t + cf_e(t))
}

/// `E(t) = 1/(t + (3/2)/(t + 2/(t + (5/2)/(t + ...))))`, the part of the
/// erfcx continued fraction after its first two levels, by modified Lentz.
fn cf_e(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for n in 2..20_000 {
        let a = 0.5 * n as f64;
        d = t + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = t + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Power series `S(x) = Σ 2ⁿ x^{2n+1} / (1·3···(2n+1))`, so that
/// `erf(x) = (2/√π) e^{-x²} S(x)`.
fn erf_series(x: f64) -> f64 {
    let x2 = 2.0 * x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Scaled complementary error function `e^{x²} erfc(x)` for `x ≥ 0`.
fn erfcx_nonneg(x: f64) -> f64 {
    if x < 2.0 {
        (x * x).exp() - 2.0 / SQRT_PI * erf_series(x)
    } else {
        1.0 / (SQRT_PI * (x + erfcx_cf_tail(x)))
    }
}

/// The scaled complementary error function `e^{x²} erfc(x)` for `x ≥ 0`.
pub fn erfcx(x: f64) -> Result<f64> {
    require_finite("erfcx argument", x)?;
    if x < 0.0 {
        return Err(domain(format!("erfcx is only provided for x >= 0, got {x}")));
    }
    Ok(erfcx_nonneg(x))
}

/// The complementary error function.
pub fn erfc_func(x: f64) -> Result<f64> {
    require_finite("erfc argument", x)?;
    Ok(erfc_unchecked(x))
}

pub(crate) fn erfc_unchecked(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_unchecked(-x);
    }
    if x < 2.0 {
        1.0 - 2.0 / SQRT_PI * (-x * x).exp() * erf_series(x)
    } else if x > 27.3 {
        // Below the smallest subnormal.
        0.0
    } else {
        (-x * x).exp() * erfcx_nonneg(x)
    }
}

/// `F(x) = (√π/2) e^x erfc(√x) / √x`, which equals `E[1/(2x + z²)]` for a
/// standard normal `z`.
pub fn f_integral(x: f64) -> Result<f64> {
    require_positive("f_integral argument", x)?;
    Ok(f_unchecked(x))
}

pub(crate) fn f_unchecked(x: f64) -> f64 {
    let t = x.sqrt();
    if t < 2.0 {
        0.5 * SQRT_PI * erfcx_nonneg(t) / t
    } else {
        0.5 / (x + t * erfcx_cf_tail(t))
    }
}

/// `½ − x F(x)`, evaluated without cancellation for large `x`, where it
/// behaves like `1/(4x)`.
pub fn half_minus_x_f(x: f64) -> Result<f64> {
    require_positive("half_minus_x_f argument", x)?;
    Ok(half_minus_x_f_unchecked(x))
}

pub(crate) fn half_minus_x_f_unchecked(x: f64) -> f64 {
    let t = x.sqrt();
    if t < 2.0 {
        0.5 - x * f_unchecked(x)
    } else {
        let tr = t * erfcx_cf_tail(t);
        0.5 * tr / (x + tr)
    }
}

/// A solution of the root equation together with its conditioning data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRoot {
    pub alpha: f64,
    /// `A(α)`.
    pub a: f64,
    /// `α − A(α)`, carried separately because it is tiny for small α.
    pub alpha_minus_a: f64,
    /// `F(α−A)(2α+1)(α−A)/α − 1` at the returned root.
    pub residual: f64,
}

/// Residual `F(d)(2α+1)d/α − 1` at `d = α − A`, in a form that stays
/// accurate when `d F(d)` is close to ½.
fn root_residual(alpha: f64, d: f64) -> f64 {
    if d < 1.0 {
        (2.0 * alpha + 1.0) * d * f_unchecked(d) / alpha - 1.0
    } else {
        (1.0 - 2.0 * (2.0 * alpha + 1.0) * half_minus_x_f_unchecked(d)) / (2.0 * alpha)
    }
}

/// Solves `F(α−A) = α/((2α+1)(α−A))` for the unique `A ∈ (2α/(2α+3), min(α,1))`.
pub fn solve_a(alpha: f64) -> Result<f64> {
    Ok(solve_a_root(alpha)?.a)
}

/// As [`solve_a`], returning the full [`AlphaRoot`].
///
/// For `α ≤ 1` the unknown is `d = α − A` and the equation `(2α+1) d F(d) = α`
/// is solved directly. For `1 < α < 5` the unknown is `A` and the equation is
/// rewritten as `½ − d F(d) = 1/(2(2α+1))`, which avoids the cancellation in
/// `d F(d) → ½`; both residuals are monotone, so a bracketed Newton iteration
/// with bisection fallback always converges. For `α ≥ 5` the equivalent fixed
/// point `A = t E(t)`, `t = √(α − A)`, keeps `1 − A` accurate to the last bit.
pub fn solve_a_root(alpha: f64) -> Result<AlphaRoot> {
    require_positive("alpha", alpha)?;
    let lower_a = 2.0 * alpha / (2.0 * alpha + 3.0);
    if alpha <= 1.0 {
        let target = alpha / (2.0 * alpha + 1.0);
        // g(d) = d F(d) - target is increasing in d.
        let g = |d: f64| d * f_unchecked(d) - target;
        // (d F)' = F/2 + d F - 1/2.
        let dg = |d: f64| {
            let f = f_unchecked(d);
            0.5 * f + d * f - 0.5
        };
        let hi = alpha - lower_a;
        let d = bracketed_newton(g, dg, 0.0, hi, true)?;
        Ok(AlphaRoot {
            alpha,
            a: alpha - d,
            alpha_minus_a: d,
            residual: root_residual(alpha, d),
        })
    } else if alpha >= 5.0 {
        // With t = √(α − A) the root equation is equivalent to A = t E(t),
        // a strong contraction once t ≥ 2.
        let mut a = (1.0 - 1.5 / alpha).max(lower_a);
        for _ in 0..100 {
            let t = (alpha - a).sqrt();
            let next = t * cf_e(t);
            let done = (next - a).abs() <= f64::EPSILON * 0.5 * next;
            a = next;
            if done {
                break;
            }
        }
        if !(a > lower_a && a < 1.0) {
            return Err(Error::Internal(format!(
                "fixed point A({alpha}) = {a} left its bracket"
            )));
        }
        let d = alpha - a;
        Ok(AlphaRoot {
            alpha,
            a,
            alpha_minus_a: d,
            residual: root_residual(alpha, d),
        })
    } else {
        let target = 0.5 / (2.0 * alpha + 1.0);
        // g(A) = h(α − A) − target with h = ½ − dF, increasing in A.
        let g = |a: f64| half_minus_x_f_unchecked(alpha - a) - target;
        // dg/dA = -h'(d) = (xF)'(d) = F/2 - h.
        let dg = |a: f64| {
            let d = alpha - a;
            0.5 * f_unchecked(d) - half_minus_x_f_unchecked(d)
        };
        let a = bracketed_newton(g, dg, lower_a, 1.0, true)?;
        let d = alpha - a;
        Ok(AlphaRoot {
            alpha,
            a,
            alpha_minus_a: d,
            residual: root_residual(alpha, d),
        })
    }
}

/// Root of an increasing function on `(lo, hi)` by Newton steps kept inside a
/// shrinking bracket.
fn bracketed_newton(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
) -> Result<f64> {
    let sign = if increasing { 1.0 } else { -1.0 };
    let g_lo = if lo > 0.0 { sign * g(lo) } else { -1.0 };
    let g_hi = sign * g(hi);
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::Internal(format!(
            "root not bracketed on ({lo}, {hi}): g = ({g_lo}, {g_hi})"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gx = sign * g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = sign * dg(x);
        let newton = x - gx / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= 2.0 * f64::EPSILON * x.abs() || hi - lo <= 2.0 * f64::EPSILON * hi.abs() {
            return Ok(x);
        }
    }
    Ok(x)
}

/// `A′(α) = 1 − 2(α − A)/((2α + 1)A)`.
pub fn a_prime(alpha: f64) -> Result<f64> {
    let r = solve_a_root(alpha)?;
    Ok(a_prime_from(alpha, r.a, r.alpha_minus_a))
}

fn a_prime_from(alpha: f64, a: f64, d: f64) -> f64 {
    1.0 - 2.0 * d / ((2.0 * alpha + 1.0) * a)
}

/// `σ_κ(α) = (1 − κ/α)(α − A(α))V`. Requires `κ ≤ α`.
pub fn sigma_kappa(alpha: f64, kappa: f64, v: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    require_positive("V", v)?;
    require_finite("kappa", kappa)?;
    if kappa < 0.0 || kappa > alpha {
        return Err(domain(format!(
            "kappa must lie in [0, alpha] = [0, {alpha}], got {kappa}"
        )));
    }
    let d = solve_a_root(alpha)?.alpha_minus_a;
    Ok((1.0 - kappa / alpha) * d * v)
}

/// How the node values of an [`AlphaFunctionTable`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMethod {
    DirectRootSolve,
    OdePropagated,
}

/// Tabulated `A(α)` with monotone cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFunctionTable {
    alphas: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    method: TableMethod,
}

impl AlphaFunctionTable {
    /// Solves the root equation at each node.
    pub fn direct(alphas: &[f64]) -> Result<Self> {
        check_nodes(alphas)?;
        let mut values = Vec::with_capacity(alphas.len());
        let mut slopes = Vec::with_capacity(alphas.len());
        for &a in alphas {
            let r = solve_a_root(a)?;
            values.push(r.a);
            slopes.push(a_prime_from(a, r.a, r.alpha_minus_a));
        }
        Self::assemble(alphas.to_vec(), values, slopes, TableMethod::DirectRootSolve)
    }

    /// Solves the root equation at the largest node only and propagates
    /// `A′ = 1 − 2(α−A)/((2α+1)A)` towards smaller α with RK4 in `ln α`.
    ///
    /// The equation is unstable when integrated towards larger α, so the
    /// sweep runs downward, where perturbations decay.
    pub fn ode_propagated(alphas: &[f64]) -> Result<Self> {
        check_nodes(alphas)?;
        let n = alphas.len();
        let mut values = vec![0.0; n];
        let top = solve_a_root(alphas[n - 1])?;
        values[n - 1] = top.a;
        // dA/du with u = ln α.
        let rhs = |u: f64, a: f64| {
            let al = u.exp();
            al * (1.0 - 2.0 * (al - a) / ((2.0 * al + 1.0) * a))
        };
        for i in (0..n - 1).rev() {
            let (u0, u1) = (alphas[i + 1].ln(), alphas[i].ln());
            // The linearization has rate ≈ α in u; keep h·rate well inside
            // the RK4 stability region.
            let rate = alphas[i + 1].max(1.0);
            let steps = (((u0 - u1) * rate / 0.02).ceil() as usize).max(16);
            let h = (u1 - u0) / steps as f64;
            let mut a = values[i + 1];
            let mut u = u0;
            for _ in 0..steps {
                let k1 = rhs(u, a);
                let k2 = rhs(u + 0.5 * h, a + 0.5 * h * k1);
                let k3 = rhs(u + 0.5 * h, a + 0.5 * h * k2);
                let k4 = rhs(u + h, a + h * k3);
                a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                u += h;
            }
            values[i] = a;
        }
        let slopes = alphas
            .iter()
            .zip(&values)
            .map(|(&al, &a)| a_prime_from(al, a, al - a))
            .collect();
        Self::assemble(alphas.to_vec(), values, slopes, TableMethod::OdePropagated)
    }

    fn assemble(
        alphas: Vec<f64>,
        values: Vec<f64>,
        mut slopes: Vec<f64>,
        method: TableMethod,
    ) -> Result<Self> {
        for (i, (&al, &v)) in alphas.iter().zip(&values).enumerate() {
            let lo = 2.0 * al / (2.0 * al + 3.0);
            if !(v > lo && v < al.min(1.0)) {
                return Err(Error::Numerical(format!(
                    "tabulated A({al}) = {v} violates its bounds at node {i}"
                )));
            }
            if i > 0 && v <= values[i - 1] {
                return Err(Error::Numerical(format!(
                    "tabulated A is not increasing at node {i} (alpha = {al})"
                )));
            }
        }
        // Fritsch–Carlson limiter so the interpolant stays monotone.
        for i in 0..alphas.len().saturating_sub(1) {
            let delta = (values[i + 1] - values[i]) / (alphas[i + 1] - alphas[i]);
            let (a, b) = (slopes[i] / delta, slopes[i + 1] / delta);
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[i] = tau * a * delta;
                slopes[i + 1] = tau * b * delta;
            }
        }
        Ok(Self {
            alphas,
            values,
            slopes,
            method,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> TableMethod {
        self.method
    }

    /// Interpolated `A(α)`; `α` must lie within the tabulated range.
    pub fn eval(&self, alpha: f64) -> Result<f64> {
        let (first, last) = (self.alphas[0], self.alphas[self.alphas.len() - 1]);
        if !(alpha >= first && alpha <= last) {
            return Err(domain(format!(
                "alpha = {alpha} outside the table range [{first}, {last}]"
            )));
        }
        let i = match self.alphas.partition_point(|&a| a <= alpha) {
            0 => 0,
            k => (k - 1).min(self.alphas.len().saturating_sub(2)),
        };
        if self.alphas.len() == 1 {
            return Ok(self.values[0]);
        }
        let (x0, x1) = (self.alphas[i], self.alphas[i + 1]);
        let h = x1 - x0;
        let t = (alpha - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.values[i]
            + h10 * h * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.slopes[i + 1])
    }
}

fn check_nodes(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(domain("table needs at least one node"));
    }
    for w in alphas.windows(2) {
        if w[1] <= w[0] {
            return Err(domain("table nodes must be strictly increasing"));
        }
    }
    for &a in alphas {
        require_positive("table node", a)?;
    }
    Ok(())
}

/// `n` points spaced evenly in `ln α` over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
