//! Dense matrices, initializers and the reverse-mode tape.

pub mod conv;
mod init;
mod matrix;
mod ops;
mod tape;

pub use init::{init_orthogonal, init_uniform, orthogonality_error, seeded_rng, sub_seed};
pub use matrix::Matrix;
pub use ops::{argmax, map_elementwise, sigmoid, softmax, Activation};
pub use tape::{Fault, Gradients, OpKind, Tape, Var, LOG_FLOOR};

/// A collection of named parameter tensors with a stable order.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Matrix)>;

    fn named_params_mut(&mut self) -> Vec<(String, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.len()).sum()
    }
}
