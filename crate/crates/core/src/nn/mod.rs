//! Minimal neural-network kernel: MLPs, Adam, cosine schedule and
//! finite-difference gradient checks.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;
mod schedule;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{central_difference, grad_check, relative_error, GradCheckReport};
pub use matrix::{gemm, Matrix};
pub use mlp::{
    leaky_relu, mlp_backward, mlp_forward, Mlp, MlpCache, MlpShape, LEAKY_SLOPE, LN_VARIANCE_FLOOR,
};
pub use schedule::cosine_lr;
