//! Reverse-mode automatic differentiation for chain-structured networks.
//!
//! The executor covers exactly the primitives the three forecaster families
//! need — dense, causal 1-D convolution, width-2 max pooling, an LSTM step,
//! tanh/relu/identity, inference-form batch normalization, sequence-last
//! selection, flattening, and element mean — each with an exact backward
//! rule verified against central finite differences.

pub mod adam;
pub mod check;
pub mod loss;
pub mod network;
pub mod ops;
pub mod tensor;

pub use adam::AdamState;
pub use check::{check_gradients, GradientCheckReport};
pub use loss::mape_loss;
pub use network::{Layer, Network, Parameter, ParameterSet, Tape};
pub use ops::Activation;
pub use tensor::Tensor;
