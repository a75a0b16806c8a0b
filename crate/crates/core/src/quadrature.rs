//! Numerical integration: Gauss–Hermite rules for expectations over a standard
//! normal, and adaptive Gauss–Kronrod (7/15) on finite and infinite ranges.

use crate::error::{Error, Result};

/// Gauss–Hermite rule rescaled to the standard normal density, so that
/// `expect(f) ≈ E[f(z)]`, `z ~ N(0, 1)`.
///
/// Only the non-negative half of the symmetric node set is stored; `expect`
/// evaluates `f(z) + f(−z)` pairwise, which makes odd integrands vanish
/// exactly.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    n: usize,
    /// Positive nodes and their weights.
    pairs: Vec<(f64, f64)>,
    /// Weight of the node at zero when `n` is odd.
    center: Option<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("Gauss–Hermite rule needs n >= 1".into()));
        }
        let (x, w) = hermite_physicists(n)?;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let half = n / 2;
        let pairs = (0..half)
            .map(|i| (std::f64::consts::SQRT_2 * x[i], w[i] * inv_sqrt_pi))
            .collect();
        let center = (n % 2 == 1).then(|| w[half] * inv_sqrt_pi);
        Ok(Self { n, pairs, center })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        // Outermost nodes (smallest weights) first to limit rounding.
        let mut sum = 0.0;
        for &(z, w) in self.pairs.iter() {
            sum += w * (f(z) + f(-z));
        }
        if let Some(w) = self.center {
            sum += w * f(0.0);
        }
        sum
    }

    /// Componentwise `E[f(z)]` for a vector-valued integrand, evaluating `f`
    /// once per node.
    pub fn expect_array<const K: usize>(&self, f: impl Fn(f64) -> [f64; K]) -> [f64; K] {
        let mut sum = [0.0; K];
        for &(z, w) in self.pairs.iter() {
            let (a, b) = (f(z), f(-z));
            for k in 0..K {
                sum[k] += w * (a[k] + b[k]);
            }
        }
        if let Some(w) = self.center {
            let c = f(0.0);
            for k in 0..K {
                sum[k] += w * c[k];
            }
        }
        sum
    }
}

/// Nodes (descending, positive half first) and weights of the physicists'
/// Hermite rule for `∫ e^{-x²} f(x) dx`, by Newton iteration on the
/// orthonormal recurrence.
fn hermite_physicists(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z: f64 = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Gauss–Hermite node {i} of {n} did not converge"
            )));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive G7/K15 integration of `f` over `[a, b]`.
///
/// Converges when the summed error estimate falls below
/// `max(abs_tol, rel_tol · |value|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadEstimate> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(QuadEstimate { value, error });
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {error:e}"
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `∫_a^∞ f(x) dx` through the substitution `x = a + t/(1 − t)`.
pub fn integrate_to_infinity(
    f: impl Fn(f64) -> f64,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadEstimate> {
    let g = |t: f64| {
        let u = 1.0 - t;
        let x = a + t / u;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v / (u * u)
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// `E[f(z)]` for `z ~ N(0, 1)` by adaptive quadrature on the whole line.
pub fn normal_expectation(
    f: impl Fn(f64) -> f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadEstimate> {
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let g = |z: f64| {
        let phi = inv * (-0.5 * z * z).exp();
        if phi == 0.0 {
            0.0
        } else {
            (f(z) + f(-z)) * phi
        }
    };
    integrate_to_infinity(g, 0.0, abs_tol, rel_tol)
}
