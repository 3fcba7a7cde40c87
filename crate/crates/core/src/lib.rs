//! A small CPU deep-learning engine for compact encoder-decoder segmentation
//! networks built from fire modules and dilated convolutions.

pub mod error;
mod gemm;
pub mod config;
pub mod data;
pub mod graph;
pub mod metrics;
pub mod ops;
pub mod rf;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Element, Shape, Tensor};
