//! Per-dataset training settings for the UCI regression sets. These record
//! the optimizer, learning rate, dropout and epoch count chosen for each
//! method together with the dataset's minibatch size; they are applied as
//! defaults, never searched.

use gcp::nn::OptimizerKind;
use serde::{Deserialize, Serialize};

use crate::config::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Boston,
    Concrete,
    Power,
    Yacht,
    Kin8nm,
    Msd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetEntry {
    pub optimizer: OptimizerKind,
    pub rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub hidden_units: usize,
}

impl Preset {
    pub fn minibatch(self) -> usize {
        match self {
            Preset::Boston | Preset::Concrete | Preset::Yacht => 5,
            Preset::Power | Preset::Kin8nm => 10,
            Preset::Msd => 5000,
        }
    }

    pub fn hidden_units(self) -> usize {
        match self {
            Preset::Msd => 100,
            _ => 50,
        }
    }

    /// Settings for `method`; the squared-error baseline reuses the
    /// Gaussian-ML row.
    pub fn entry(self, method: Method) -> PresetEntry {
        use OptimizerKind::{Adam, Nesterov, Rmsprop};
        let row = match method {
            Method::GaussianMl | Method::SquaredError => 0,
            Method::Dpd => 1,
            Method::Gcp | Method::GcpCorr => 2,
        };
        // (optimizer, rate, dropout, epochs) for ML, DPD, GCP.
        let table: [(OptimizerKind, f64, f64, usize); 3] = match self {
            Preset::Boston => [(Adam, 1e-4, 0.4, 700), (Nesterov, 2e-5, 0.4, 5000), (Adam, 1e-4, 0.3, 700)],
            Preset::Concrete => [(Adam, 1e-4, 0.1, 800), (Nesterov, 1e-5, 0.1, 5000), (Adam, 1e-4, 0.1, 1000)],
            Preset::Power => [(Adam, 5e-5, 0.0, 150), (Adam, 1e-4, 0.0, 400), (Adam, 5e-5, 0.0, 150)],
            Preset::Yacht => [(Adam, 1e-4, 0.1, 2000), (Adam, 2e-4, 0.1, 2500), (Rmsprop, 1e-3, 0.1, 1000)],
            Preset::Kin8nm => [(Adam, 2e-4, 0.0, 200), (Adam, 1e-4, 0.0, 400), (Nesterov, 7e-4, 0.0, 250)],
            Preset::Msd => [(Adam, 5e-3, 0.1, 150), (Adam, 5e-3, 0.1, 100), (Adam, 1e-3, 0.1, 200)],
        };
        let (optimizer, rate, dropout_rate, epochs) = table[row];
        PresetEntry {
            optimizer,
            rate,
            dropout_rate,
            epochs,
            minibatch: self.minibatch(),
            hidden_units: self.hidden_units(),
        }
    }
}
