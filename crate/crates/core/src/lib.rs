//! Dual-graph molecular representation learning: bond perception, atom and
//! bond graphs, structure encodings, a two-channel attention model with
//! cross-attention between the channels, and a deterministic trainer.
//!
//! The numeric core is generic over [`Scalar`]; `f64` is the primary type and
//! the aliases below fix it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bonds;
pub mod chem;
pub mod encoding;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod masks;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
pub type EncodingBundle64 = encoding::EncodingBundle<f64>;
