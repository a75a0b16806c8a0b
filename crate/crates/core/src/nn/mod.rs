//! One-hidden-layer perceptron whose output heads parametrize either a
//! normal-gamma prior `(m, α, β, ν)` or a Gaussian `(m, p)` with precision
//! `p`, together with its losses, optimizers and trainer.

mod loss;
mod optim;
mod train;

pub use loss::{loss_and_head_grads, HeadGradient, LossKind};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{
    backprop_step, batch_gradient, batch_loss, fit_constant, train, ConstantFit, ConstantFitConfig,
    TrainConfig, TrainHistory,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::prior::{predictive_estimates, NormalGammaParams, PredictiveEstimates};
use crate::rng::{streams, Rng, RNG_VERSION};

/// Lower clamp applied to every softplus output.
pub const SOFTPLUS_FLOOR: f64 = 1e-8;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Overflow-safe `ln(1 + eˣ)`, clamped below at [`SOFTPLUS_FLOOR`].
pub fn softplus(x: f64) -> f64 {
    (x.max(0.0) + (-x.abs()).exp().ln_1p()).max(SOFTPLUS_FLOOR)
}

/// Derivative of [`softplus`]: the logistic function, zero where the clamp
/// is active.
pub fn softplus_grad(x: f64) -> f64 {
    if x.max(0.0) + (-x.abs()).exp().ln_1p() < SOFTPLUS_FLOOR {
        return 0.0;
    }
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of the unclamped softplus, for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Which distribution the output heads parametrize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Heads `(m, α, β, ν)`.
    NormalGamma,
    /// Heads `(m, p)`.
    Gaussian,
}

impl HeadKind {
    pub fn n_outputs(self) -> usize {
        match self {
            HeadKind::NormalGamma => 4,
            HeadKind::Gaussian => 2,
        }
    }
}

/// Activated head outputs for one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadOutput {
    NormalGamma(NormalGammaParams),
    Gaussian { m: f64, p: f64 },
}

impl HeadOutput {
    pub fn mean(&self) -> f64 {
        match self {
            HeadOutput::NormalGamma(p) => p.m,
            HeadOutput::Gaussian { m, .. } => *m,
        }
    }

    /// Mean, uncorrected and corrected variance estimates. Gaussian heads
    /// report `1/p` for both variances and an infinite `α`.
    pub fn estimates(&self) -> Result<PredictiveEstimates> {
        match self {
            HeadOutput::NormalGamma(p) => predictive_estimates(p),
            HeadOutput::Gaussian { m, p } => Ok(PredictiveEstimates {
                mean_est: *m,
                v_est: Some(1.0 / p),
                v_corrected: 1.0 / p,
                alpha: f64::INFINITY,
            }),
        }
    }

    fn from_pre(kind: HeadKind, pre: &[f64]) -> Self {
        match kind {
            HeadKind::NormalGamma => HeadOutput::NormalGamma(NormalGammaParams {
                m: pre[0],
                alpha: softplus(pre[1]),
                beta: softplus(pre[2]),
                nu: softplus(pre[3]),
            }),
            HeadKind::Gaussian => HeadOutput::Gaussian {
                m: pre[0],
                p: softplus(pre[1]),
            },
        }
    }
}

/// Perceptron with one ReLU hidden layer and linear-then-softplus heads.
///
/// Parameters are stored flat in the order hidden weights (row-major,
/// `hidden × input`), hidden bias, head weights (row-major,
/// `outputs × hidden`), head bias. Head rows are ordered `(m, α, β, ν)` or
/// `(m, p)`; `m` is linear, the rest pass through [`softplus`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_units: usize,
    dropout_rate: f64,
    head: HeadKind,
    init_seed: u64,
    params: Vec<f64>,
}

impl MlpModel {
    /// He-uniform hidden layer, small uniform head rows, zero hidden bias,
    /// and head biases `0` for `m` and `ln(e − 1)` for the softplus heads so
    /// they start at 1.
    pub fn new(input_dim: usize, hidden_units: usize, dropout_rate: f64, head: HeadKind, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_units == 0 {
            return Err(domain("input_dim and hidden_units must be positive"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(domain(format!("dropout_rate must lie in [0, 1), got {dropout_rate}")));
        }
        let mut model = Self {
            input_dim,
            hidden_units,
            dropout_rate,
            head,
            init_seed: seed,
            params: Vec::new(),
        };
        model.params = vec![0.0; model.n_params()];
        let mut rng = Rng::new(seed, streams::INIT);
        let l1 = (6.0 / input_dim as f64).sqrt();
        let l2 = 1.0 / (hidden_units as f64).sqrt();
        let (w1, _, w2, b2) = model.split_mut();
        for w in w1.iter_mut() {
            *w = rng.uniform_range(-l1, l1);
        }
        for w in w2.iter_mut() {
            *w = rng.uniform_range(-l2, l2);
        }
        let one = softplus_inv(1.0);
        for b in b2.iter_mut().skip(1) {
            *b = one;
        }
        Ok(model)
    }

    /// A model with every parameter zero.
    pub fn zeros(input_dim: usize, hidden_units: usize, dropout_rate: f64, head: HeadKind) -> Result<Self> {
        let mut m = Self::new(input_dim, hidden_units, dropout_rate, head, 0)?;
        m.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_units
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn n_params(&self) -> usize {
        let (d, h, k) = (self.input_dim, self.hidden_units, self.head.n_outputs());
        h * d + h + k * h + k
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, k) = (self.input_dim, self.hidden_units, self.head.n_outputs());
        [h * d, h * d + h, h * d + h + k * h, h * d + h + k * h + k]
    }

    /// `(hidden weights, hidden bias, head weights, head bias)`.
    pub fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [a, b, c, _] = self.offsets();
        let (w1, rest) = self.params.split_at(a);
        let (b1, rest) = rest.split_at(b - a);
        let (w2, b2) = rest.split_at(c - b);
        (w1, b1, w2, b2)
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let [a, b, c, _] = self.offsets();
        let (w1, rest) = self.params.split_at_mut(a);
        let (b1, rest) = rest.split_at_mut(b - a);
        let (w2, b2) = rest.split_at_mut(c - b);
        (w1, b1, w2, b2)
    }

    fn check_input(&self, x: &[f64], mask: Option<&[f64]>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(domain(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if let Some(m) = mask {
            if m.len() != self.hidden_units {
                return Err(domain(format!(
                    "dropout mask has {} entries, model has {} hidden units",
                    m.len(),
                    self.hidden_units
                )));
            }
        }
        Ok(())
    }

    /// Hidden activations and head pre-activations. `mask` entries multiply
    /// the ReLU outputs, which are then scaled by `1/(1 − dropout_rate)`.
    pub(crate) fn forward_raw(&self, x: &[f64], mask: Option<&[f64]>, hidden: &mut [f64], pre: &mut [f64]) {
        let (w1, b1, w2, b2) = self.split();
        let d = self.input_dim;
        let scale = 1.0 / (1.0 - self.dropout_rate);
        for (j, hj) in hidden.iter_mut().enumerate() {
            let row = &w1[j * d..(j + 1) * d];
            let z = b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            let a = z.max(0.0);
            *hj = match mask {
                Some(m) => a * m[j] * scale,
                None => a,
            };
        }
        let h = self.hidden_units;
        for (k, pk) in pre.iter_mut().enumerate() {
            let row = &w2[k * h..(k + 1) * h];
            *pk = b2[k] + row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
    }

    /// Head outputs for `x`, optionally under a dropout mask.
    pub fn forward_output(&self, x: &[f64], mask: Option<&[f64]>) -> Result<HeadOutput> {
        self.check_input(x, mask)?;
        let mut hidden = vec![0.0; self.hidden_units];
        let mut pre = vec![0.0; self.head.n_outputs()];
        self.forward_raw(x, mask, &mut hidden, &mut pre);
        Ok(HeadOutput::from_pre(self.head, &pre))
    }

    /// Normal-gamma parameters for `x`; errors for Gaussian-head models.
    pub fn forward(&self, x: &[f64], mask: Option<&[f64]>) -> Result<NormalGammaParams> {
        match self.forward_output(x, mask)? {
            HeadOutput::NormalGamma(p) => Ok(p),
            HeadOutput::Gaussian { .. } => Err(domain("model has Gaussian heads, not normal-gamma heads")),
        }
    }

    /// Deterministic prediction (dropout off).
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveEstimates> {
        self.forward_output(x, None)?.estimates()
    }

    pub fn to_checkpoint(&self, train_config: Option<&TrainConfig>) -> Checkpoint {
        let (w1, b1, w2, b2) = self.split();
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            rng_version: RNG_VERSION,
            input_dim: self.input_dim,
            hidden_units: self.hidden_units,
            dropout_rate: self.dropout_rate,
            head: self.head,
            seed: self.init_seed,
            hidden_weights: w1.to_vec(),
            hidden_bias: b1.to_vec(),
            head_weights: w2.to_vec(),
            head_bias: b2.to_vec(),
            train_config: train_config.cloned(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(domain(format!(
                "unsupported checkpoint schema version {}",
                c.schema_version
            )));
        }
        let mut model = Self::zeros(c.input_dim, c.hidden_units, c.dropout_rate, c.head)?;
        model.init_seed = c.seed;
        let (w1, b1, w2, b2) = model.split_mut();
        for (dst, src, name) in [
            (w1, &c.hidden_weights, "hidden_weights"),
            (b1, &c.hidden_bias, "hidden_bias"),
            (w2, &c.head_weights, "head_weights"),
            (b2, &c.head_bias, "head_bias"),
        ] {
            if dst.len() != src.len() {
                return Err(domain(format!(
                    "checkpoint {name} has {} entries, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            if src.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("checkpoint {name} holds non-finite values")));
            }
            dst.copy_from_slice(src);
        }
        Ok(model)
    }
}

/// Versioned, bit-exact serialization of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub rng_version: u32,
    pub input_dim: usize,
    pub hidden_units: usize,
    pub dropout_rate: f64,
    pub head: HeadKind,
    pub seed: u64,
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
    pub train_config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_properties() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(softplus(800.0), 800.0);
        assert_eq!(softplus(-800.0), SOFTPLUS_FLOOR);
        assert_eq!(softplus_grad(-800.0), 0.0);
        for x in [-5.0, -0.3, 0.0, 2.0, 40.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - softplus_grad(x)).abs() < 1e-8);
            assert!((softplus(softplus_inv(softplus(x))) - softplus(x)).abs() < 1e-12 * softplus(x).max(1.0));
        }
        assert!((softplus(softplus_inv(1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_model_outputs_ln2() {
        let m = MlpModel::zeros(3, 5, 0.0, HeadKind::NormalGamma).unwrap();
        let p = m.forward(&[1.0, -2.0, 0.5], None).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_eq!((p.m, p.alpha, p.beta, p.nu), (0.0, ln2, ln2, ln2));
    }

    #[test]
    fn outputs_positive_on_random_inputs() {
        let m = MlpModel::new(2, 20, 0.0, HeadKind::NormalGamma, 7).unwrap();
        let mut rng = Rng::new(1, 99);
        for _ in 0..1000 {
            let x = [10.0 * rng.normal(), 10.0 * rng.normal()];
            let p = m.forward(&x, None).unwrap();
            assert!(p.alpha > 0.0 && p.beta > 0.0 && p.nu > 0.0);
        }
    }

    #[test]
    fn ones_mask_without_dropout_is_identity() {
        let m = MlpModel::new(2, 8, 0.0, HeadKind::NormalGamma, 3).unwrap();
        let x = [0.3, -1.2];
        assert_eq!(m.forward(&x, Some(&[1.0; 8])).unwrap(), m.forward(&x, None).unwrap());
    }

    #[test]
    fn dimension_checks() {
        let m = MlpModel::new(2, 8, 0.2, HeadKind::NormalGamma, 3).unwrap();
        assert!(m.forward(&[1.0], None).is_err());
        assert!(m.forward(&[1.0, 2.0], Some(&[1.0; 3])).is_err());
        let g = MlpModel::new(2, 8, 0.0, HeadKind::Gaussian, 3).unwrap();
        assert!(g.forward(&[1.0, 2.0], None).is_err());
        assert!(g.forward_output(&[1.0, 2.0], None).is_ok());
    }

    #[test]
    fn initial_heads_near_one() {
        let m = MlpModel::new(1, 50, 0.0, HeadKind::NormalGamma, 11).unwrap();
        let (_, _, _, b2) = m.split();
        assert_eq!(b2[0], 0.0);
        assert!(b2[1..].iter().all(|b| (softplus(*b) - 1.0).abs() < 1e-15));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = MlpModel::new(3, 7, 0.1, HeadKind::NormalGamma, 5).unwrap();
        let json = m.to_checkpoint(None).to_json().unwrap();
        let back = MlpModel::from_checkpoint(&Checkpoint::from_json(&json).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(back.params().iter().zip(m.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut c = m.to_checkpoint(None);
        c.schema_version = 99;
        assert!(MlpModel::from_checkpoint(&c).is_err());
        let mut c = m.to_checkpoint(None);
        c.head_bias.pop();
        assert!(MlpModel::from_checkpoint(&c).is_err());
    }

    #[test]
    fn predict_matches_composition() {
        let m = MlpModel::new(1, 10, 0.0, HeadKind::NormalGamma, 2).unwrap();
        let x = [0.4];
        let want = predictive_estimates(&m.forward(&x, None).unwrap()).unwrap();
        assert_eq!(m.predict(&x).unwrap(), want);
    }
}
