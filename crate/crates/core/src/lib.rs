//! Object-goal navigation in a deterministic synthetic environment:
//! a detection-driven policy network with target attention and a Siamese
//! difference branch, A3C training, and SR/SPL evaluation.

pub mod catalog;
pub mod config;
pub mod embed;
pub mod eval;
pub mod grad;
pub mod hash;
pub mod model;
pub mod rl;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use model::HiddenState;
pub use scalar::Scalar;

/// Concrete aliases: training and tests run at f64, checkpoints store f32.
pub type Tensor64 = grad::Tensor<f64>;
pub type Tensor32 = grad::Tensor<f32>;
pub type Tape64 = grad::Tape<f64>;
pub type ParamSet64 = grad::ParamSet<f64>;
pub type Gradients64 = grad::Gradients<f64>;
pub type AdamState64 = grad::AdamState<f64>;
