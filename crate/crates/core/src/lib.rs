//! Spline-based and recurrent forecasters for daily weather series, with a
//! small reverse-mode autodiff engine underneath.

pub mod checkpoint;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod recurrent;
pub mod spline;
pub mod synth;
pub mod tensor;
pub mod tkan;
pub mod train;

pub use error::{Error, Result};
pub use model::{Hyper, Model, ModelKind, ModelSpec};
pub use tensor::{Tape, Tensor, Var};
