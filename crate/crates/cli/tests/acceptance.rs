//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints a PASS/FAIL line; run with `--nocapture` to see all of them.

use std::path::Path;
use std::process::Command;

use gcp::data::{gen_sine_outliers, sine_truth, Normalization};
use gcp::dynamics::{
    expected_gradients, integrate, mean_gradient_asymptote, orthogonality_check, sigma_zero,
    GroundTruth, Mode, OdeConfig, Scheme,
};
use gcp::eval::{auc, rmse, rmse_curve};
use gcp::nn::{fit_constant, train, ConstantFitConfig, LossKind, MlpModel, OptimizerConfig, TrainConfig};
use gcp::prior::{cp_update, gcp_gradients, kl_divergence, student_t_logpdf};
use gcp::rng::{streams, Rng};
use gcp::specfun::{log_grid, solve_a, solve_a_root};
use gcp::NormalGammaParams;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {id:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_01_a_anchors() {
    let a1 = solve_a(1.0).unwrap();
    let a2 = solve_a(2.0).unwrap();
    let pass = (a1 - 0.46).abs() <= 0.005 && (a2 - 0.619).abs() <= 0.002;
    verdict(1, "A(alpha) anchors", pass, format!("A(1) = {a1:.6}, A(2) = {a2:.6}"));
}

/// Five-point central difference of `A` at `alpha`.
fn a_slope(alpha: f64) -> f64 {
    let h = 1e-3 * alpha;
    let f = |x: f64| solve_a(x).unwrap();
    (f(alpha - 2.0 * h) - 8.0 * f(alpha - h) + 8.0 * f(alpha + h) - f(alpha + 2.0 * h)) / (12.0 * h)
}

#[test]
fn criterion_02_a_properties() {
    let grid = log_grid(1e-4, 1e4, 1000);
    let roots: Vec<_> = grid.iter().map(|&a| solve_a_root(a).unwrap()).collect();
    let bounds = roots
        .iter()
        .all(|r| 2.0 * r.alpha / (2.0 * r.alpha + 3.0) < r.a && r.a < r.alpha.min(1.0));
    let monotone = roots.windows(2).all(|w| w[1].a > w[0].a);
    let worst_residual = roots.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let worst_ode = [0.1, 1.0, 10.0]
        .iter()
        .map(|&alpha| {
            let a = solve_a(alpha).unwrap();
            let rhs = 1.0 - 2.0 * (alpha - a) / ((2.0 * alpha + 1.0) * a);
            ((a_slope(alpha) - rhs) / rhs).abs()
        })
        .fold(0.0, f64::max);
    let small = 1e-3;
    let k0 = 4.0 / std::f64::consts::PI;
    let small_err = (solve_a(small).unwrap() - (small - k0 * small * small)).abs() / (k0 * small * small);
    let large = 1e4;
    let large_err = (large * (1.0 - solve_a(large).unwrap()) - 1.5).abs();
    let pass = bounds && monotone && worst_residual < 1e-12 && worst_ode < 1e-4 && small_err < 1e-2 && large_err < 1e-2;
    verdict(
        2,
        "A(alpha) property suite",
        pass,
        format!(
            "bounds {bounds}, monotone {monotone}, max residual {worst_residual:.1e}, ODE rel err {worst_ode:.1e}, \
             small-alpha err {small_err:.1e}, large-alpha err {large_err:.1e}"
        ),
    );
}

/// Richardson-extrapolated central difference of `f` along coordinate `i`.
fn partial(f: &dyn Fn([f64; 4]) -> f64, x: [f64; 4], i: usize) -> f64 {
    let d = |h: f64| {
        let (mut lo, mut hi) = (x, x);
        lo[i] -= h;
        hi[i] += h;
        (f(hi) - f(lo)) / (2.0 * h)
    };
    let h = 1e-3 * x[i].abs().max(0.1);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn params(v: [f64; 4]) -> NormalGammaParams {
    NormalGammaParams {
        m: v[0],
        nu: v[1],
        alpha: v[2],
        beta: v[3],
    }
}

#[test]
fn criterion_03_gradient_correctness() {
    let mut rng = Rng::new(2024, 0);
    let mut worst_kl: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for _ in 0..200 {
        let p = NormalGammaParams::new(
            rng.uniform_range(-2.0, 2.0),
            rng.uniform_range(0.2, 3.0),
            rng.uniform_range(0.2, 3.0),
            rng.uniform_range(0.3, 5.0),
        )
        .unwrap();
        let y = rng.uniform_range(-4.0, 4.0);
        let g = gcp_gradients(&p, y).unwrap();
        let analytic = [g.d_m, g.d_nu, g.d_alpha, g.d_beta];
        let post = cp_update(&p, y).unwrap();
        let kl = |v: [f64; 4]| kl_divergence(&params(v), &post).unwrap();
        let nll = |v: [f64; 4]| -student_t_logpdf(&params(v), y).unwrap();
        let x = [p.m, p.nu, p.alpha, p.beta];
        for (i, g) in analytic.into_iter().enumerate() {
            // Components pass through zero, so errors are relative to
            // max(|g|, 1e-3).
            let scale = g.abs().max(1e-3);
            worst_kl = worst_kl.max((partial(&kl, x, i) - g).abs() / scale);
            worst_t = worst_t.max((partial(&nll, x, i) - g).abs() / scale);
        }
    }
    let pass = worst_kl < 1e-6 && worst_t < 1e-6;
    verdict(
        3,
        "gradient correctness",
        pass,
        format!("max rel err vs KL differences {worst_kl:.1e}, vs Student-t differences {worst_t:.1e}"),
    );
}

#[test]
fn criterion_04_fixed_alpha_recovery() {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for alpha in [0.5, 2.0, 10.0] {
        for v in [0.25, 1.0, 4.0] {
            let p = NormalGammaParams::new(0.0, 1.0, alpha, 1.0).unwrap();
            let cfg = OdeConfig {
                step: 1e-2,
                max_time: 500.0,
                mode: Mode::FixedAlpha,
                ..OdeConfig::default()
            };
            let tr = integrate(&p, &GroundTruth::new(0.0, v).unwrap(), &cfg).unwrap();
            let err = (tr.final_diagnostics().v_corrected / v - 1.0).abs();
            worst = worst.max(err);
            detail.push(format!("({alpha},{v}):{err:.1e}"));
        }
    }
    verdict(
        4,
        "fixed-alpha variance recovery",
        worst < 5e-3,
        format!("max rel err {worst:.2e} [{}]", detail.join(" ")),
    );
}

#[test]
fn criterion_05_full_system() {
    let p = NormalGammaParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let cfg = OdeConfig {
        step: 1e-3,
        max_time: 5e6,
        scheme: Scheme::Rosenbrock {
            rtol: 1e-10,
            atol: 1e-13,
        },
        ..OdeConfig::default()
    };
    let tr = integrate(&p, &GroundTruth::new(0.0, 1.0).unwrap(), &cfg).unwrap();
    let f = tr.final_state();
    let beta_star = (8.0f64 / 3.0).sqrt();
    let beta_err = (f.beta / beta_star - 1.0).abs();
    let drift = tr.integral_curve_drift();
    let entered = tr.strip_entry_time.is_some();
    let stayed = !tr.left_strip_after_entry();
    let pass = entered && stayed && f.alpha > 50.0 && beta_err < 1e-2 && drift < 1e-5;
    verdict(
        5,
        "full-system behavior",
        pass,
        format!(
            "entry t = {:?}, stayed in strip {stayed}, final alpha {:.3}, beta {:.6} (rel err {beta_err:.1e}), drift {drift:.1e}",
            tr.strip_entry_time, f.alpha, f.beta
        ),
    );
}

#[test]
fn criterion_06_orthogonality() {
    let mut rng = Rng::new(6, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let alpha = 10f64.powf(rng.uniform_range(-1.0, 1.5));
        let v = 10f64.powf(rng.uniform_range(-1.0, 1.0));
        let nu = 10f64.powf(rng.uniform_range(-1.5, 1.5));
        worst = worst.max((orthogonality_check(alpha, v, nu).unwrap() + 1.0).abs());
    }
    verdict(6, "orthogonality identity", worst < 1e-10, format!("max |f'g' + 1| = {worst:.1e}"));
}

fn mean_gradient(alpha: f64, c: f64, v: f64) -> f64 {
    let sigma = c * sigma_zero(alpha, v).unwrap();
    // ν = 1 gives σ = 2β.
    let p = NormalGammaParams::new(1.0, 1.0, alpha, sigma / 2.0).unwrap();
    expected_gradients(&p, &GroundTruth::new(0.0, v).unwrap()).unwrap().d_m
}

#[test]
fn criterion_07_mean_gradient_asymptotics() {
    let mut small: f64 = 0.0;
    let mut large: f64 = 0.0;
    for alpha in [0.1, 1.0, 10.0] {
        for c in [0.5, 1.0, 2.0] {
            let target = 2.0 * alpha + 1.0;
            small = small.max((mean_gradient(alpha, c, 1e-6) / target - 1.0).abs());
            let k = mean_gradient_asymptote(alpha, c).unwrap();
            large = large.max((1e4 * mean_gradient(alpha, c, 1e4) / k - 1.0).abs());
        }
    }
    verdict(
        7,
        "mean-gradient asymptotics",
        small < 1e-2 && large < 2e-2,
        format!("small-V rel err {small:.1e}, large-V rel err {large:.1e}"),
    );
}

#[test]
fn criterion_08_outlier_robustness() {
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let mut rng = Rng::new(seed, streams::OUTLIER_FIT);
        let mut ys: Vec<f64> = (0..500).map(|_| rng.normal()).collect();
        ys.push(100.0);
        let gcp = fit_constant(
            &ys,
            &ConstantFitConfig {
                fixed_alpha: Some(1.0),
                ..ConstantFitConfig::default()
            },
        )
        .unwrap();
        let se = fit_constant(
            &ys,
            &ConstantFitConfig {
                loss: LossKind::SquaredError,
                ..ConstantFitConfig::default()
            },
        )
        .unwrap();
        let ml = fit_constant(
            &ys,
            &ConstantFitConfig {
                loss: LossKind::GaussianMl,
                ..ConstantFitConfig::default()
            },
        )
        .unwrap();
        let ok = gcp.estimates.mean_est.abs() < se.estimates.mean_est.abs()
            && (gcp.estimates.v_corrected - 1.0).abs() < 0.2
            && ml.estimates.v_corrected > 2.0;
        good += usize::from(ok);
        lines.push(format!(
            "seed {seed}: m {:.3}/{:.3} v {:.3} ml v {:.1}",
            gcp.estimates.mean_est, se.estimates.mean_est, gcp.estimates.v_corrected, ml.estimates.v_corrected
        ));
    }
    verdict(8, "outlier robustness", good >= 9, format!("{good}/10 seeds; {}", lines.join("; ")));
}

struct SineScores {
    std_mad: f64,
    mean_rmse: f64,
}

fn sine_scores(seed: u64, loss: LossKind) -> SineScores {
    let ds = gen_sine_outliers(400, 0.05, seed).unwrap();
    let norm = Normalization::fit(&ds).unwrap();
    let train_set = ds.apply_normalization(&norm).unwrap();
    let model = MlpModel::new(1, 50, 0.0, loss.head_kind(), seed).unwrap();
    let cfg = TrainConfig {
        loss,
        epochs: 1000,
        minibatch: 32,
        seed,
        optimizer: OptimizerConfig {
            rate: 1e-3,
            ..OptimizerConfig::default()
        },
        ..TrainConfig::default()
    };
    let (model, _) = train(&model, &train_set, &cfg).unwrap();
    let n = 200;
    let (mut mad, mut se) = (0.0, 0.0);
    for i in 0..n {
        let x = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
        let (mu, sd) = sine_truth(x);
        let e = model.predict(&norm.normalize_input(&[x])).unwrap();
        let sd_pred = norm.denormalize_variance(e.v_corrected).sqrt();
        mad += (sd_pred - sd).abs();
        se += (norm.denormalize_target(e.mean_est) - mu).powi(2);
    }
    SineScores {
        std_mad: mad / n as f64,
        mean_rmse: (se / n as f64).sqrt(),
    }
}

#[test]
fn criterion_09_sine_outliers() {
    let (mut std_wins, mut mean_wins) = (0, 0);
    let mut lines = Vec::new();
    for seed in 0..5 {
        let g = sine_scores(seed, LossKind::Gcp);
        let ml = sine_scores(seed, LossKind::GaussianMl);
        std_wins += usize::from(g.std_mad < ml.std_mad);
        mean_wins += usize::from(g.mean_rmse < ml.mean_rmse);
        lines.push(format!(
            "seed {seed}: std MAD {:.3}/{:.3} mean RMSE {:.3}/{:.3}",
            g.std_mad, ml.std_mad, g.mean_rmse, ml.mean_rmse
        ));
    }
    verdict(
        9,
        "sine-outlier experiment",
        std_wins >= 4 && mean_wins >= 4,
        format!("std wins {std_wins}/5, mean wins {mean_wins}/5; {}", lines.join("; ")),
    );
}

#[test]
fn criterion_10_metric_fixtures() {
    let curve = rmse_curve(&[9.0, 0.0, 0.0], &[3.0, 2.0, 1.0], &[0.0, 0.0, 0.0]).unwrap();
    let curve_ok = curve == vec![27f64.sqrt(), 0.0, 0.0];
    let auc_ok = auc(&[2.0, 1.0]).unwrap() == 1.5 && auc(&[3.0, 2.0, 1.0]).unwrap() == 2.0 && auc(&[0.7; 5]).unwrap() == 0.7;
    let rmse_ok = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() == (25.0f64 / 2.0).sqrt();
    let mut rng = Rng::new(10, 0);
    let mut invariant = true;
    for _ in 0..200 {
        let n = 2 + rng.below(40);
        let preds: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let vars: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 5.0)).collect();
        let scale = 10f64.powf(rng.uniform_range(-3.0, 3.0));
        let scaled: Vec<f64> = vars.iter().map(|v| v * scale).collect();
        let c1 = rmse_curve(&preds, &vars, &targets).unwrap();
        let c2 = rmse_curve(&preds, &scaled, &targets).unwrap();
        invariant &= c1 == c2 && auc(&c1).unwrap() == auc(&c2).unwrap();
    }
    verdict(
        10,
        "metric fixtures",
        curve_ok && auc_ok && rmse_ok && invariant,
        format!("curve {curve_ok}, auc {auc_ok}, rmse {rmse_ok}, rescaling invariance {invariant}"),
    );
}

const REPRO_CONFIG: &str = r#"
seed = 11
methods = ["gcp", "gcp_corr", "gaussian_ml", "squared_error", "dpd"]

[dataset]
kind = "sine"
n = 160
outlier_prob = 0.05

[folds]
count = 2
train_fraction = 0.8

[contamination]
fraction = 0.05

[train]
epochs = 20
minibatch = 16
"#;

fn run_cli(config: &Path, out: &Path, jobs: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_gcp"))
        .args(["experiment", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", &jobs.to_string()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("report.json".to_string(), std::fs::read(dir.join("report.json")).unwrap())];
    let mut names: Vec<_> = std::fs::read_dir(dir.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for n in names {
        out.push((n.clone(), std::fs::read(dir.join("checkpoints").join(&n)).unwrap()));
    }
    out
}

#[test]
fn criterion_11_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("experiment.toml");
    std::fs::write(&config, REPRO_CONFIG).unwrap();
    run_cli(&config, &tmp.path().join("a"), 1);
    run_cli(&config, &tmp.path().join("b"), 3);
    let a = artifacts(&tmp.path().join("a"));
    let b = artifacts(&tmp.path().join("b"));
    let identical = a == b;
    verdict(
        11,
        "reproducibility",
        identical && a.len() == 9,
        format!("{} artifacts compared, byte-identical {identical}", a.len()),
    );
}
