//! First-order optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{domain, require_positive, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
    Nesterov,
    Sgd,
}

/// Optimizer choice, learning rate and method constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// RMSProp decay of the squared-gradient average.
    pub rho: f64,
    /// Nesterov momentum.
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.5,
            momentum: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("learning rate", self.rate)?;
        require_positive("epsilon", self.epsilon)?;
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("rho", self.rho),
            ("momentum", self.momentum),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(domain(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, n_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            t: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Applies one update to `params` given the loss gradient `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.first.len());
        self.t += 1;
        let c = self.cfg;
        match c.kind {
            OptimizerKind::Sgd => {
                for (w, g) in params.iter_mut().zip(grad) {
                    *w -= c.rate * g;
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - c.beta1.powf(self.t as f64);
                let bc2 = 1.0 - c.beta2.powf(self.t as f64);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = c.beta1 * self.first[i] + (1.0 - c.beta1) * g;
                    self.second[i] = c.beta2 * self.second[i] + (1.0 - c.beta2) * g * g;
                    let mh = self.first[i] / bc1;
                    let vh = self.second[i] / bc2;
                    params[i] -= c.rate * mh / (vh.sqrt() + c.epsilon);
                }
            }
            OptimizerKind::Rmsprop => {
                for i in 0..params.len() {
                    let g = grad[i];
                    self.second[i] = c.rho * self.second[i] + (1.0 - c.rho) * g * g;
                    params[i] -= c.rate * g / (self.second[i].sqrt() + c.epsilon);
                }
            }
            OptimizerKind::Nesterov => {
                // Velocity form: v ← μv + g, w ← w − λ(g + μv).
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = c.momentum * self.first[i] + g;
                    params[i] -= c.rate * (g + c.momentum * self.first[i]);
                }
            }
        }
    }
}
