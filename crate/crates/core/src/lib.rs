//! Reference workbench for the YOLOv5s-GTB lightweight crack detector.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`kernels`]: a small dense NCHW tensor and the forward
//!   kernels every block needs (convolution, pooling, attention primitives).
//! - [`blocks`]: the composite layers (Conv, GhostConv, C3 variants, SPPF,
//!   Transformer, Coordinate Attention, BiFPN fusion, Detect head), each with a
//!   closed-form parameter count, an enumerable weight set and a MAC count.
//! - [`graph`]: the JSON layer-table format, shape inference, forward
//!   execution, parameter/FLOP analysis and feature-map export.
//! - [`metrics`]: IoU matching, precision/recall, 11-point AP and mAP.
//! - [`augment`]: flips, brightness/contrast and random erasing with
//!   label-consistent geometry, plus a batch driver.
//! - [`harness`]: the ablation table and the gradient/attention self-checks.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Both paths compute every output element with the same arithmetic in the
//! same order, so results are bitwise identical.

pub mod augment;
pub mod blocks;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod par;
pub mod pgm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
