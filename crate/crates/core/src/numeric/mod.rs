//! Dense linear algebra, seeded randomness and optimisation primitives shared
//! by every learning module.

mod adam;
mod gradcheck;
mod linalg;
mod matrix;
mod rng;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, finite_diff_slice, relative_error};
pub use linalg::solve_least_squares;
pub(crate) use matrix::check_finite;
pub use matrix::{gemm, Matrix, Operand};
pub use rng::{splitmix64, sub_seed, Rng};

/// Logistic sigmoid, written to stay finite for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
