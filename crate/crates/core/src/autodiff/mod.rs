//! A deliberately small differentiable-tensor engine.
//!
//! There is no computation graph. Each [`Layer`] has a forward pass that
//! returns its output together with a [`Cache`] of the intermediates it
//! needs, and a backward pass that turns an upstream gradient and that cache
//! into an input gradient while accumulating parameter gradients. Sequencing
//! and caching across layers is the caller's job (see `model`).
//!
//! Sequence tensors are `[batch, length, channels]`, dense tensors are
//! `[batch, features]`, all row-major `f64`.

mod layers;
mod loss;
mod optim;
mod tensor;

pub use layers::{
    selu, sigmoid, softmax_in_place, Activation, Cache, Conv1d, Dense, Dropout, Layer, LayerKind,
    MaxPool1d, SELU_ALPHA, SELU_LAMBDA,
};
pub use loss::{binary_cross_entropy, categorical_cross_entropy, PROB_CLAMP};
pub use optim::{Nadam, NadamConfig};
pub use tensor::{Tensor, TensorError};

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
