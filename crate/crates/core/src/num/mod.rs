//! Dense arrays, parameter buffers, the gradient tape, seeded streams and
//! small perceptrons.

pub mod fd;
pub mod mlp;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use fd::{finite_diff, finite_diff_fn, relative_error};
pub use mlp::{mlp_forward, Activation, MlpSpec};
pub use params::{ParamVector, Segment};
pub use rng::RngStream;
pub use tape::{eval, grad, log1mexp, log_sum_exp, sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;
