//! Multi-scale dense cross network (MDCN) for single-image super-resolution,
//! built on a small reverse-mode tensor engine.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod blocks;
pub mod data;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod optim;
