//! Visual object tracking with two complementary spatial-aware regressors:
//! kernel ridge regression over a learnable cross-patch similarity kernel,
//! solved as a three-stage network, and a fully convolutional network whose
//! kernels are restricted to fixed random spatial masks and whose outputs
//! are gated by distance-transform pooling.

pub mod bbox;
pub mod cli;
pub mod cnnsrk;
pub mod error;
pub mod evalsim;
pub mod features;
pub mod krrcps;
pub mod numerics;
pub mod selftest;
pub mod tracker;

pub use error::{Error, Result};
pub use numerics::Tensor;
