//! Minimal dense neural-network kernel in 64-bit floats.
//!
//! Networks are chains of fully-connected layers with ReLU, softplus or
//! identity activations. Gradients are computed by an explicit backward
//! pass over the recorded activations; there is no general autodiff graph.

mod adam;
mod dense;
mod gaussian;

use thiserror::Error;

pub use adam::{schedule_lr, AdamState, LrSchedule, LrScheduler};
pub use dense::{sigmoid, softplus, Activation, DenseNet, Gradients, LayerShape, Tape};
pub use gaussian::{kl_diag, kl_diag_grads, standard_normal, DiagGaussian, KlGrads};

/// Floor added to softplus variance heads so variances stay positive.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("variance at index {index} is not positive ({value})")]
    NonPositiveVariance { index: usize, value: f64 },
}

pub mod gradcheck {
    //! Central finite differences, the oracle for every analytic gradient.

    /// Largest relative error between `analytic` and central differences of
    /// `loss` around `params`. Entries where both magnitudes are below
    /// `1e-7` are compared absolutely.
    pub fn max_rel_error(
        params: &[f64],
        analytic: &[f64],
        h: f64,
        mut loss: impl FnMut(&[f64]) -> f64,
    ) -> f64 {
        let mut p = params.to_vec();
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                (analytic[i] - numeric).abs()
            } else {
                (analytic[i] - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
        worst
    }
}
