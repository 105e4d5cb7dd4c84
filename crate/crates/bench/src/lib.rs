//! Shared fixtures for the solver benchmarks.

use bdlab_core::{RateModel, SimState, Truncation};

/// Smooth, exponentially decaying cluster profile on `n` sites with unit mass scale.
pub fn smooth_state(n: usize, scale: f64) -> SimState {
    let c: Vec<f64> = (1..=n).map(|k| (-(k as f64) / scale).exp() / (scale * scale)).collect();
    SimState::new(0.4, c, Truncation::Reflecting).expect("valid fixture")
}

pub fn linear_model() -> RateModel {
    RateModel::new(1.0, 2.0).expect("valid model")
}
