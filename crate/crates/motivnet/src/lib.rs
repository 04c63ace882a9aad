//! Dual-model training with conditional capacity expansion.
//!
//! A small base network is trained on every batch; when a configurable
//! condition on the training signal fires, training switches to a larger
//! motivated network that structurally contains the base one. Weights and
//! optimizer state move between the two through an explicit weights map.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod flops;
pub mod harness;
pub mod kernels;
pub mod motivation;
pub mod optim;
pub mod store;
pub mod tensor;
pub mod trainer;
pub mod weight_map;
pub mod zoo;

pub use error::{Error, Result};
pub use tensor::Tensor;
