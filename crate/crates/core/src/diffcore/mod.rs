//! Dense `f64` tensors with reverse-mode automatic differentiation.

mod gradcheck;
mod init;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use init::{truncated_normal, DEFAULT_INIT_STDDEV};
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::{matmul, pairwise_sq_dist, Tensor};

/// Learnable tensor with a name unique within its model.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Whether the L2 penalty of the objective covers this parameter.
    pub regularized: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, regularized: bool) -> Self {
        Parameter {
            name: name.into(),
            value,
            regularized,
        }
    }
}
