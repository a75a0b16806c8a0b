//! Time integration of the expected-gradient flow.

use crate::error::{Error, Result};
use crate::prior::NormalGammaParams;
use crate::specfun::{digamma_unchecked, solve_a_root};

use super::expect::{expected_gradients_fast, expected_gradients_with, expected_log_term, ExpectationRule};
use super::{integral_curve_constant, GroundTruth, OdeConfig, Scheme, StepDiagnostics, Trajectory};

type State = [f64; 4];

/// Number of halvings of the step the positivity guard may apply.
const MAX_HALVINGS: u32 = 10;

struct System<'a> {
    gt: GroundTruth,
    rule: &'a ExpectationRule,
    active: [bool; 4],
}

impl System<'_> {
    /// `(ṁ, ν̇, α̇, β̇)` with inactive coordinates frozen.
    fn rates(&self, y: &State) -> Result<State> {
        let p = admissible(y).ok_or_else(|| Error::Numerical(format!("inadmissible state {y:?}")))?;
        let g = expected_gradients_with(&p, &self.gt, self.rule)?;
        Ok(self.mask([-g.d_m, -g.d_nu, -g.d_alpha, -g.d_beta]))
    }

    fn rates_fast(&self, y: &State) -> Option<State> {
        let p = admissible(y)?;
        let g = expected_gradients_fast(&p, &self.gt, self.rule);
        let r = self.mask([-g.d_m, -g.d_nu, -g.d_alpha, -g.d_beta]);
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn mask(&self, mut r: State) -> State {
        for (v, on) in r.iter_mut().zip(self.active) {
            if !on {
                *v = 0.0;
            }
        }
        r
    }

    fn rate_norm(&self, r: &State) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn diagnostics(&self, y: &State, rates: State) -> Result<StepDiagnostics> {
        let p = NormalGammaParams::from_array(*y);
        let sigma = p.sigma();
        let root = solve_a_root(p.alpha)?;
        let sigma_zero = root.alpha_minus_a * self.gt.variance;
        // α̇ at m = E[y], which is what the strip refers to.
        let alpha_rate = -(expected_log_term(sigma / self.gt.variance, self.rule)?
            + digamma_unchecked(p.alpha)
            - digamma_unchecked(p.alpha + 0.5));
        Ok(StepDiagnostics {
            sigma,
            v_est: (p.alpha > 1.0).then(|| sigma / (p.alpha - 1.0)),
            v_corrected: sigma / root.alpha_minus_a,
            in_strip: sigma < sigma_zero && alpha_rate > 0.0,
            integral_curve_constant: integral_curve_constant(p.nu, p.beta)?,
            rates,
        })
    }
}

fn admissible(y: &State) -> Option<NormalGammaParams> {
    let ok = y[0].is_finite() && y[1..].iter().all(|v| v.is_finite() && *v > 0.0);
    ok.then(|| NormalGammaParams::from_array(*y))
}

fn axpy(y: &State, h: f64, k: &State) -> State {
    std::array::from_fn(|i| y[i] + h * k[i])
}

/// Integrates the expected-gradient flow from `params0`.
///
/// The initial state is always recorded. With RK4 a state is recorded every
/// `step` until `max_time`; the adaptive scheme records every accepted step.
/// The run ends early once the norm of the active rates falls below
/// `stop_tolerance`.
pub fn integrate(params0: &NormalGammaParams, gt: &GroundTruth, cfg: &OdeConfig) -> Result<Trajectory> {
    params0.validate()?;
    cfg.validate()?;
    let rule = ExpectationRule::new(cfg.quadrature_nodes)?;
    let sys = System {
        gt: *gt,
        rule: &rule,
        active: cfg.mode.active(),
    };
    let mut rec = Recorder::default();
    let y0 = params0.to_array();
    let r0 = sys.rates(&y0)?;
    rec.push(0.0, &y0, sys.diagnostics(&y0, r0)?);
    if sys.rate_norm(&r0) < cfg.stop_tolerance {
        return Ok(rec.finish(true, 0));
    }
    match cfg.scheme {
        Scheme::Rk4 => rk4(&sys, y0, r0, cfg, rec),
        Scheme::Rosenbrock { rtol, atol } => rosenbrock(&sys, y0, r0, cfg, rtol, atol, rec),
    }
}

#[derive(Default)]
struct Recorder {
    times: Vec<f64>,
    states: Vec<NormalGammaParams>,
    diagnostics: Vec<StepDiagnostics>,
    strip_entry_time: Option<f64>,
}

impl Recorder {
    fn push(&mut self, t: f64, y: &State, d: StepDiagnostics) {
        if d.in_strip && self.strip_entry_time.is_none() {
            self.strip_entry_time = Some(t);
        }
        self.times.push(t);
        self.states.push(NormalGammaParams::from_array(*y));
        self.diagnostics.push(d);
    }

    fn finish(self, converged: bool, rejected_steps: usize) -> Trajectory {
        Trajectory {
            times: self.times,
            states: self.states,
            diagnostics: self.diagnostics,
            strip_entry_time: self.strip_entry_time,
            converged,
            rejected_steps,
        }
    }
}

fn rk4_step(sys: &System, y: &State, k1: &State, h: f64) -> Option<State> {
    let inner = |y: &State| admissible(y).and_then(|_| sys.rates(y).ok());
    let k2 = inner(&axpy(y, 0.5 * h, k1))?;
    let k3 = inner(&axpy(y, 0.5 * h, &k2))?;
    let k4 = inner(&axpy(y, h, &k3))?;
    let out: State = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    admissible(&out).map(|_| out)
}

fn rk4(sys: &System, mut y: State, mut r: State, cfg: &OdeConfig, mut rec: Recorder) -> Result<Trajectory> {
    let n_steps = (cfg.max_time / cfg.step).floor() as u64;
    let mut rejected = 0;
    for n in 1..=n_steps {
        let t0 = (n - 1) as f64 * cfg.step;
        // Positivity guard: split the nominal step into 2^k equal substeps.
        let mut next = None;
        for halvings in 0..=MAX_HALVINGS {
            let parts = 1u32 << halvings;
            let h = cfg.step / parts as f64;
            let mut ys = y;
            let mut rs = r;
            let mut ok = true;
            for p in 0..parts {
                match rk4_step(sys, &ys, &rs, h) {
                    Some(v) => {
                        ys = v;
                        if p + 1 < parts {
                            rs = sys.rates(&ys)?;
                        }
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                next = Some(ys);
                break;
            }
            rejected += 1;
        }
        let Some(ynew) = next else {
            return Err(Error::StepSize {
                time: t0,
                message: format!(
                    "state left the positive region even with step {:e}",
                    cfg.step / f64::from(1u32 << MAX_HALVINGS)
                ),
            });
        };
        y = ynew;
        r = sys.rates(&y)?;
        let t = n as f64 * cfg.step;
        rec.push(t, &y, sys.diagnostics(&y, r)?);
        if sys.rate_norm(&r) < cfg.stop_tolerance {
            return Ok(rec.finish(true, rejected));
        }
    }
    Ok(rec.finish(false, rejected))
}

/// Finite-difference Jacobian of the rates from the base quadrature rule.
fn jacobian(sys: &System, y: &State) -> Result<[[f64; 4]; 4]> {
    let mut jac = [[0.0; 4]; 4];
    for j in 0..4 {
        if !sys.active[j] {
            continue;
        }
        let h = 1e-6 * y[j].abs().max(1e-3);
        let h = if j > 0 { h.min(0.5 * y[j]) } else { h };
        let (mut lo, mut hi) = (*y, *y);
        lo[j] -= h;
        hi[j] += h;
        let (Some(fl), Some(fh)) = (sys.rates_fast(&lo), sys.rates_fast(&hi)) else {
            return Err(Error::Numerical(format!("Jacobian evaluation failed at {y:?}")));
        };
        for i in 0..4 {
            jac[i][j] = (fh[i] - fl[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// LU factorization with partial pivoting of a 4×4 matrix.
struct Lu {
    a: [[f64; 4]; 4],
    piv: [usize; 4],
}

impl Lu {
    fn new(mut a: [[f64; 4]; 4]) -> Option<Self> {
        let mut piv = [0, 1, 2, 3];
        for k in 0..4 {
            let p = (k..4).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
            if a[p][k] == 0.0 || !a[p][k].is_finite() {
                return None;
            }
            a.swap(k, p);
            piv.swap(k, p);
            for i in k + 1..4 {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                for j in k + 1..4 {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Some(Self { a, piv })
    }

    fn solve(&self, b: &State) -> State {
        let mut x: State = std::array::from_fn(|i| b[self.piv[i]]);
        for i in 0..4 {
            for j in 0..i {
                x[i] -= self.a[i][j] * x[j];
            }
        }
        for i in (0..4).rev() {
            for j in i + 1..4 {
                x[i] -= self.a[i][j] * x[j];
            }
            x[i] /= self.a[i][i];
        }
        x
    }
}

/// Adaptive Rosenbrock (2,3) pair, L-stable, with the error estimate from
/// the embedded third-order solution.
fn rosenbrock(
    sys: &System,
    mut y: State,
    mut f0: State,
    cfg: &OdeConfig,
    rtol: f64,
    atol: f64,
    mut rec: Recorder,
) -> Result<Trajectory> {
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let mut t = 0.0;
    let mut h = cfg.step;
    let mut rejected = 0;
    let h_min = 1e-14 * cfg.max_time;
    while t < cfg.max_time {
        h = h.min(cfg.max_time - t);
        if h < h_min {
            return Err(Error::StepSize {
                time: t,
                message: format!("adaptive step fell to {h:e}"),
            });
        }
        let jac = jacobian(sys, &y)?;
        let mut w = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                w[i][j] = f64::from(u8::from(i == j)) - h * d * jac[i][j];
            }
        }
        let attempt = (|| -> Option<(State, State, f64)> {
            let lu = Lu::new(w)?;
            let k1 = lu.solve(&f0);
            let f1 = sys.rates(&axpy(&y, 0.5 * h, &k1)).ok()?;
            let k2: State = {
                let rhs: State = std::array::from_fn(|i| f1[i] - k1[i]);
                let v = lu.solve(&rhs);
                std::array::from_fn(|i| v[i] + k1[i])
            };
            let ynew = axpy(&y, h, &k2);
            admissible(&ynew)?;
            let f2 = sys.rates(&ynew).ok()?;
            let rhs: State = std::array::from_fn(|i| f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]));
            let k3 = lu.solve(&rhs);
            let mut en = 0.0;
            for i in 0..4 {
                let err = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
                let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
                en += (err / sc).powi(2);
            }
            Some((ynew, f2, (en / 4.0).sqrt()))
        })();
        match attempt {
            Some((ynew, f2, en)) if en <= 1.0 => {
                t += h;
                y = ynew;
                f0 = f2;
                rec.push(t, &y, sys.diagnostics(&y, f0)?);
                if sys.rate_norm(&f0) < cfg.stop_tolerance {
                    return Ok(rec.finish(true, rejected));
                }
                h *= (0.9 * en.max(1e-12).powf(-1.0 / 3.0)).clamp(0.2, 5.0);
            }
            Some((_, _, en)) if en.is_finite() => {
                rejected += 1;
                h *= (0.9 * en.powf(-1.0 / 3.0)).clamp(0.2, 1.0);
            }
            _ => {
                rejected += 1;
                h *= 0.5;
            }
        }
    }
    Ok(rec.finish(false, rejected))
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn gt(v: f64) -> GroundTruth {
        GroundTruth::new(0.0, v).unwrap()
    }

    #[test]
    fn rk4_records_every_step() {
        let cfg = OdeConfig {
            step: 0.01,
            max_time: 0.105,
            mode: Mode::Full,
            ..OdeConfig::default()
        };
        let p = NormalGammaParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let tr = integrate(&p, &gt(1.0), &cfg).unwrap();
        assert_eq!(tr.len(), 11);
        assert_eq!(tr.times[0], 0.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert!(!tr.converged);
    }

    #[test]
    fn mean_only_decreases_to_truth() {
        let cfg = OdeConfig {
            step: 0.01,
            max_time: 20.0,
            mode: Mode::MeanOnly,
            ..OdeConfig::default()
        };
        let p = NormalGammaParams::new(2.0, 0.7, 1.5, 0.9).unwrap();
        let tr = integrate(&p, &gt(1.0), &cfg).unwrap();
        assert!(tr.states.windows(2).all(|w| w[1].m < w[0].m));
        assert!(tr.final_state().m.abs() < 1e-3);
        let s = tr.final_state();
        assert_eq!((s.nu, s.alpha, s.beta), (0.7, 1.5, 0.9));
    }

    #[test]
    fn fixed_alpha_recovers_variance() {
        let cfg = OdeConfig {
            step: 1e-2,
            max_time: 200.0,
            mode: Mode::FixedAlpha,
            ..OdeConfig::default()
        };
        let p = NormalGammaParams::new(0.0, 1.0, 2.0, 1.0).unwrap();
        let tr = integrate(&p, &gt(1.0), &cfg).unwrap();
        let v = tr.final_diagnostics().v_corrected;
        assert!((v - 1.0).abs() < 5e-3, "v_corrected = {v}");
        assert!(tr.final_state().alpha == 2.0);
        assert!(tr.integral_curve_drift() < 1e-5);
        let (nu, beta) = fixed_alpha_equilibrium(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!((tr.final_state().nu - nu).abs() < 1e-3);
        assert!((tr.final_state().beta - beta).abs() < 1e-3);
    }

    #[test]
    fn rosenbrock_matches_rk4() {
        let p = NormalGammaParams::new(0.3, 1.0, 1.0, 1.0).unwrap();
        let base = OdeConfig {
            step: 1e-3,
            max_time: 2.0,
            ..OdeConfig::default()
        };
        let a = integrate(&p, &gt(1.0), &base).unwrap();
        let cfg = OdeConfig {
            step: 1e-3,
            scheme: Scheme::Rosenbrock {
                rtol: 1e-9,
                atol: 1e-12,
            },
            ..base
        };
        let b = integrate(&p, &gt(1.0), &cfg).unwrap();
        assert!((b.times.last().unwrap() - 2.0).abs() < 1e-12);
        let (x, y) = (a.final_state().to_array(), b.final_state().to_array());
        for i in 0..4 {
            assert!((x[i] - y[i]).abs() < 1e-6, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn positivity_guard_reports_step_error() {
        // Small ν makes ν̇ large and negative, so any step this coarse
        // overshoots zero.
        let cfg = OdeConfig {
            step: 1e4,
            max_time: 1e5,
            mode: Mode::FixedAlpha,
            ..OdeConfig::default()
        };
        let p = NormalGammaParams::new(0.0, 1e-3, 2.0, 1e-6).unwrap();
        match integrate(&p, &gt(1.0), &cfg) {
            Err(crate::error::Error::StepSize { .. }) => {}
            other => panic!("expected step-size error, got {other:?}"),
        }
    }
}
