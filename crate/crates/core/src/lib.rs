//! Layer-pruning and compression workbench for small decoder-only
//! translation models trained on synthetic language pairs.

pub mod corpus;
pub mod distill;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pruner;
pub mod quantizer;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = model::TransformerModel<f32>;
pub type Model64 = model::TransformerModel<f64>;
pub type QuantModel = quantizer::QuantizedModel<f32>;
