//! Backpropagation, minibatch training and constant-parameter fits.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{domain, Error, Result};
use crate::prior::{cp_update, gcp_gradients, kl_divergence, NormalGammaParams, PredictiveEstimates};
use crate::rng::{stream_id, streams, Rng};

use super::loss::{loss_and_head_grads, LossKind};
use super::optim::{Optimizer, OptimizerConfig};
use super::{softplus_grad, softplus_inv, HeadKind, HeadOutput, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    pub minibatch: usize,
    pub epochs: usize,
    pub dpd_exponent: f64,
    pub seed: u64,
    /// Factors applied to the loss gradient of each head before
    /// backpropagation, in head order `(m, α, β, ν)`; Gaussian heads use the
    /// first two entries for `(m, p)`.
    pub rate_multipliers: [f64; 4],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Gcp,
            optimizer: OptimizerConfig::default(),
            minibatch: 32,
            epochs: 100,
            dpd_exponent: 0.5,
            seed: 0,
            rate_multipliers: [1.0; 4],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch == 0 {
            return Err(domain("minibatch must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(domain("epochs must be at least 1"));
        }
        if !(self.dpd_exponent.is_finite() && self.dpd_exponent > 0.0) {
            return Err(domain(format!("dpd_exponent must be positive, got {}", self.dpd_exponent)));
        }
        if self.rate_multipliers.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain("rate multipliers must be finite and non-negative"));
        }
        self.optimizer.validate()
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// For GCP training, the largest relative deviation per epoch between the
    /// analytic head gradient and central differences of the KL divergence to
    /// the updated prior, on one random sample.
    pub equivalence_errors: Vec<f64>,
}

struct Scratch {
    hidden: Vec<f64>,
    pre: Vec<f64>,
    dout: Vec<f64>,
}

impl Scratch {
    fn new(model: &MlpModel) -> Self {
        let k = model.head().n_outputs();
        Self {
            hidden: vec![0.0; model.hidden_units()],
            pre: vec![0.0; k],
            dout: vec![0.0; k],
        }
    }
}

fn check_batch(model: &MlpModel, data: &Dataset, indices: &[usize], masks: Option<&[f64]>) -> Result<()> {
    if indices.is_empty() {
        return Err(domain("empty batch"));
    }
    if data.n_features != model.input_dim() {
        return Err(domain(format!(
            "dataset has {} features, model expects {}",
            data.n_features,
            model.input_dim()
        )));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(domain(format!("sample index {i} out of range")));
    }
    if let Some(m) = masks {
        if m.len() != indices.len() * model.hidden_units() {
            return Err(domain("dropout masks must hold one row per batch sample"));
        }
    }
    Ok(())
}

/// Mean loss over the batch (no gradient).
pub fn batch_loss(
    model: &MlpModel,
    data: &Dataset,
    indices: &[usize],
    masks: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<f64> {
    check_batch(model, data, indices, masks)?;
    let mut s = Scratch::new(model);
    let h = model.hidden_units();
    let mut total = 0.0;
    for (b, &i) in indices.iter().enumerate() {
        let mask = masks.map(|m| &m[b * h..(b + 1) * h]);
        model.forward_raw(data.row(i), mask, &mut s.hidden, &mut s.pre);
        let heads = HeadOutput::from_pre(model.head(), &s.pre);
        total += loss_and_head_grads(cfg.loss, &heads, data.targets[i], cfg.dpd_exponent)?.0;
    }
    Ok(total / indices.len() as f64)
}

/// Mean loss and its gradient with respect to the flat parameter vector,
/// with the head gradients scaled by the rate multipliers.
pub fn batch_gradient(
    model: &MlpModel,
    data: &Dataset,
    indices: &[usize],
    masks: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>)> {
    check_batch(model, data, indices, masks)?;
    let (d, h, k) = (model.input_dim(), model.hidden_units(), model.head().n_outputs());
    let (_, _, w2, _) = model.split();
    let mut grad = vec![0.0; model.n_params()];
    let (o1, o2, o3) = (h * d, h * d + h, h * d + h + k * h);
    let mut s = Scratch::new(model);
    let scale = 1.0 / (1.0 - model.dropout_rate());
    let mut total = 0.0;
    for (b, &i) in indices.iter().enumerate() {
        let x = data.row(i);
        let mask = masks.map(|m| &m[b * h..(b + 1) * h]);
        model.forward_raw(x, mask, &mut s.hidden, &mut s.pre);
        let heads = HeadOutput::from_pre(model.head(), &s.pre);
        let (loss, g) = loss_and_head_grads(cfg.loss, &heads, data.targets[i], cfg.dpd_exponent)?;
        total += loss;
        let g = g.components();
        for j in 0..k {
            let act = if j == 0 { 1.0 } else { softplus_grad(s.pre[j]) };
            s.dout[j] = g[j] * act * cfg.rate_multipliers[j];
        }
        for j in 0..k {
            let dj = s.dout[j];
            for (gw, a) in grad[o2 + j * h..o2 + (j + 1) * h].iter_mut().zip(&s.hidden) {
                *gw += dj * a;
            }
            grad[o3 + j] += dj;
        }
        for u in 0..h {
            if s.hidden[u] <= 0.0 {
                // Inactive ReLU or dropped unit.
                continue;
            }
            let mut da = 0.0;
            for j in 0..k {
                da += s.dout[j] * w2[j * h + u];
            }
            let dz = match mask {
                Some(m) => da * m[u] * scale,
                None => da,
            };
            for (gw, xi) in grad[u * d..(u + 1) * d].iter_mut().zip(x) {
                *gw += dz * xi;
            }
            grad[o1 + u] += dz;
        }
    }
    let n = indices.len() as f64;
    for v in grad.iter_mut() {
        *v /= n;
    }
    Ok((total / n, grad))
}

/// One optimizer step on a minibatch; returns the mean batch loss before the
/// step.
pub fn backprop_step(
    model: &mut MlpModel,
    data: &Dataset,
    indices: &[usize],
    masks: Option<&[f64]>,
    cfg: &TrainConfig,
    opt: &mut Optimizer,
) -> Result<f64> {
    let (loss, grad) = batch_gradient(model, data, indices, masks, cfg)?;
    if let Some(p) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient in parameter {p}")));
    }
    opt.step(model.params_mut(), &grad);
    Ok(loss)
}

/// Largest relative deviation between the analytic GCP head gradient and
/// central differences of `K(p, p_post)` in its first argument, with the
/// updated prior `p_post` held fixed.
pub(crate) fn kl_equivalence_error(p: &NormalGammaParams, y: f64) -> Result<f64> {
    let post = cp_update(p, y)?;
    let g = gcp_gradients(p, y)?;
    let analytic = [g.d_m, g.d_nu, g.d_alpha, g.d_beta];
    let base = p.to_array();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        let h = 1e-6 * if i == 0 { base[0].abs().max(1.0) } else { base[i] };
        let (mut lo, mut hi) = (base, base);
        lo[i] -= h;
        hi[i] += h;
        let fd = (kl_divergence(&NormalGammaParams::from_array(hi), &post)?
            - kl_divergence(&NormalGammaParams::from_array(lo), &post)?)
            / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
    }
    Ok(worst)
}

/// Shuffled minibatch training for `cfg.epochs` epochs. Shuffling, dropout
/// masks and the equivalence spot checks draw from separate streams of
/// `cfg.seed`, so runs are bitwise reproducible.
pub fn train(model: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    if model.head() != cfg.loss.head_kind() {
        return Err(domain(format!(
            "loss {:?} needs {:?} heads, model has {:?}",
            cfg.loss,
            cfg.loss.head_kind(),
            model.head()
        )));
    }
    if data.is_empty() {
        return Err(domain("cannot train on an empty dataset"));
    }
    let mut model = model.clone();
    let mut opt = Optimizer::new(cfg.optimizer, model.n_params())?;
    let mut shuffle_rng = Rng::new(cfg.seed, streams::SHUFFLE);
    let mut dropout_rng = Rng::new(cfg.seed, streams::DROPOUT);
    let mut check_rng = Rng::new(cfg.seed, stream_id(&[streams::SHUFFLE, 1]));
    let h = model.hidden_units();
    let rate = model.dropout_rate();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        equivalence_errors: Vec::new(),
    };
    let mut masks = Vec::new();
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.minibatch).enumerate() {
            let mask = if rate > 0.0 {
                masks.clear();
                masks.extend((0..chunk.len() * h).map(|_| f64::from(u8::from(dropout_rng.uniform() >= rate))));
                Some(masks.as_slice())
            } else {
                None
            };
            let loss = backprop_step(&mut model, data, chunk, mask, cfg, &mut opt).map_err(|e| {
                Error::Numerical(format!("epoch {epoch}, batch {b}: {e}"))
            })?;
            sum += loss;
            batches += 1;
        }
        history.epoch_losses.push(sum / batches as f64);
        if cfg.loss == LossKind::Gcp {
            let i = check_rng.below(data.len());
            let p = model.forward(data.row(i), None)?;
            history.equivalence_errors.push(kl_equivalence_error(&p, data.targets[i])?);
        }
        if model.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite weights after epoch {epoch}")));
        }
    }
    Ok((model, history))
}

/// Full-batch fit of input-independent heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantFitConfig {
    pub loss: LossKind,
    /// Holds `α` at this value for GCP fits.
    pub fixed_alpha: Option<f64>,
    /// Starting point; Gaussian fits start from `m` and `p = 1`.
    pub init: NormalGammaParams,
    pub optimizer: OptimizerConfig,
    pub iterations: usize,
    pub dpd_exponent: f64,
}

impl Default for ConstantFitConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Gcp,
            fixed_alpha: None,
            init: NormalGammaParams {
                m: 0.0,
                nu: 1.0,
                alpha: 1.0,
                beta: 1.0,
            },
            optimizer: OptimizerConfig {
                rate: 1e-2,
                ..OptimizerConfig::default()
            },
            iterations: 5000,
            dpd_exponent: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub heads: HeadOutput,
    pub estimates: PredictiveEstimates,
    pub loss: f64,
}

/// Fits one set of heads to all of `ys` by minimizing the mean loss, with
/// the same softplus parametrization as the network heads.
pub fn fit_constant(ys: &[f64], cfg: &ConstantFitConfig) -> Result<ConstantFit> {
    if ys.is_empty() {
        return Err(domain("no samples to fit"));
    }
    if cfg.iterations == 0 {
        return Err(domain("iterations must be at least 1"));
    }
    cfg.init.validate()?;
    if let Some(a) = cfg.fixed_alpha {
        if cfg.loss != LossKind::Gcp {
            return Err(domain("fixed_alpha applies to GCP fits only"));
        }
        crate::error::require_positive("fixed_alpha", a)?;
    }
    let kind = cfg.loss.head_kind();
    let mut raw: Vec<f64> = match kind {
        HeadKind::NormalGamma => vec![
            cfg.init.m,
            softplus_inv(cfg.fixed_alpha.unwrap_or(cfg.init.alpha)),
            softplus_inv(cfg.init.beta),
            softplus_inv(cfg.init.nu),
        ],
        HeadKind::Gaussian => vec![cfg.init.m, softplus_inv(1.0)],
    };
    let heads_of = |raw: &[f64]| -> HeadOutput {
        let mut h = HeadOutput::from_pre(kind, raw);
        if let (HeadOutput::NormalGamma(p), Some(a)) = (&mut h, cfg.fixed_alpha) {
            p.alpha = a;
        }
        h
    };
    let mut opt = Optimizer::new(cfg.optimizer, raw.len())?;
    let n = ys.len() as f64;
    let mut grad = vec![0.0; raw.len()];
    for it in 0..cfg.iterations {
        let heads = heads_of(&raw);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &y in ys {
            let (_, g) = loss_and_head_grads(cfg.loss, &heads, y, cfg.dpd_exponent)?;
            for (acc, gj) in grad.iter_mut().zip(g.components()) {
                *acc += gj;
            }
        }
        for (j, g) in grad.iter_mut().enumerate() {
            let act = if j == 0 { 1.0 } else { softplus_grad(raw[j]) };
            *g *= act / n;
        }
        if cfg.fixed_alpha.is_some() {
            grad[1] = 0.0;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at iteration {it}")));
        }
        opt.step(&mut raw, &grad);
    }
    let heads = heads_of(&raw);
    let mut loss = 0.0;
    for &y in ys {
        loss += loss_and_head_grads(cfg.loss, &heads, y, cfg.dpd_exponent)?.0;
    }
    Ok(ConstantFit {
        heads,
        estimates: heads.estimates()?,
        loss: loss / n,
    })
}
