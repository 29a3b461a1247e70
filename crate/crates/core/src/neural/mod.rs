//! Differentiable building blocks with hand-written backward passes.
//!
//! Everything runs in `f64` on the CPU. Each layer exposes a forward pass that
//! returns a cache and a backward pass that accumulates parameter gradients
//! into a same-shaped gradient struct and returns the input gradient.

mod activation;
pub mod checkpoint;
mod conv;
mod gradcheck;
mod init;
mod linear;
mod lstm;
mod optim;
mod params;

pub use activation::{dropout, leaky_relu, leaky_relu_grad, sigmoid, DropoutMask};
pub use conv::{conv_maxpool, ConvBlockParams, ConvCache, ConvFilter};
pub use gradcheck::{finite_diff_check, GradCheck};
pub use init::{xavier_uniform, Rng};
pub use linear::LinearParams;
pub use lstm::{bilstm_forward, BiLstmCache, LstmDirection, LstmParams};
pub use optim::{rmsprop_step, OptState, RmsProp};
pub use params::{
    accumulate, fingerprint, flatten, max_abs, parameter_count, set_flat, zeros_like, Parameters,
};

/// Default Leaky ReLU slope for negative inputs.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

pub(crate) use params::{hex_digest as params_hex, join as join_name};
