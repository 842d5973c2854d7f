//! Dense tensors and the small numerical toolkit the regressors are built on.

mod conv;
mod imaging;
mod linalg;
mod tensor;

pub use conv::conv2d_valid;
pub use imaging::{gaussian_map, resize_bilinear, rotate_image, GaussianLabelConfig};
pub(crate) use imaging::{sample_bilinear, sample_clamped};
pub use linalg::{finite_diff_gradient, relative_error, sgd_step, solve_symmetric};
pub use tensor::Tensor;
pub(crate) use tensor::{axpy, dot};
