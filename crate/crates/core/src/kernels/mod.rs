//! Forward kernels over [`Tensor`](crate::Tensor).
//!
//! All kernels are pure functions. Shape problems are reported as
//! [`Error::Shape`](crate::Error::Shape) instead of broadcasting.

mod activation;
mod conv;
mod layout;
mod linalg;
mod norm;
mod pool;

pub use activation::{hardswish, relu, sigmoid, silu};
pub use conv::{conv2d, conv_out_dim, Conv2dSpec};
pub use layout::{concat_channels, nearest_upsample, slice_channels};
pub use linalg::{linear, matmul_nt, softmax_lastdim};
pub use norm::batchnorm_infer;
pub use pool::maxpool2d;
