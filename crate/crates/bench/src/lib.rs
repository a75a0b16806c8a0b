//! Shared fixtures for the criterion benches.

use gcp::data::{gen_sine_outliers, Dataset};
use gcp::NormalGammaParams;

/// A normalized 400-sample sine-with-outliers training set.
pub fn sine_training_set() -> Dataset {
    gen_sine_outliers(400, 0.05, 0).unwrap().normalize().unwrap()
}

/// Off-mean prior states spanning small and large `α`.
pub fn prior_states() -> Vec<NormalGammaParams> {
    [(0.0, 1.0, 1.0, 1.0), (0.7, 0.5, 3.0, 2.0), (-1.2, 4.0, 25.0, 0.3)]
        .into_iter()
        .map(|(m, nu, alpha, beta)| NormalGammaParams::new(m, nu, alpha, beta).unwrap())
        .collect()
}
