//! Kernel ridge regression with a cross-patch similarity kernel.
//!
//! The kernel between two samples is a learnable weighted sum of inner
//! products over all pairs of their sub-patches. The regression is trained
//! in its network form (see [`network`]), with the explicit kernel matrix and
//! the closed-form dual solution kept as reference routes.

mod geometry;
mod kernel;
mod model;
pub mod network;
mod samples;

pub use geometry::KrrGeometry;
pub(crate) use geometry::perfect_sqrt;
pub use kernel::{
    closed_form_alpha, cross_patch_kernel, identity_beta, kernel_matrix, objective_j, KernelMatrix,
};
pub use model::KrrModel;
pub use network::{beta_curvature, krr_forward, krr_gradients, krr_response, objective_network, ForwardTrace, KrrGradients};
pub use samples::{extract_dense_samples, SampleMatrix};
