//! Minimal dense-tensor and reverse-mode differentiation core.
//!
//! Enough machinery to train small attention/GRU/MLP models on a CPU:
//! [`Tensor`] values, a recording [`Graph`] with a reverse pass, named
//! [`ParamBundle`]s with per-group freezing, SGD/Adam with global-norm
//! clipping, and a bit-exact [`checkpoint`] format.

pub mod checkpoint;
mod error;
mod graph;
pub mod gru;
pub mod init;
pub mod optim;
mod params;
mod tensor;

pub use error::{NeuralError, Result};
pub use graph::{sigmoid, Gradients, Graph, Var};
pub use gru::{gru_encode, init_gru};
pub use optim::{Optimizer, Rule};
pub use params::{group_of, Bindings, ParamBundle};
pub use tensor::{argmax, softmax, softmax_into, Tensor};
