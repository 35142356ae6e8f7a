//! Layer-graph models: config parsing, construction with shape inference,
//! forward execution, and size/compute accounting.

mod analysis;
mod config;
mod export;
mod model;
mod shipped;

pub use analysis::{analyze, gflops_from_macs, AnalysisReport, LayerRow};
pub use config::{parse_config, Arg, LayerKind, LayerOp, LayerSpec, ModelConfig, Source};
pub use export::{export_feature_maps, plane_to_gray, write_feature_maps};
pub use model::{Layer, ModelGraph, INPUT_CHANNELS, MAX_STRIDE};
pub use shipped::{shipped, ShippedConfig, SHIPPED};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Synthetic network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    Zeros,
    /// Uniform in `[0, 1)`, like a normalised image.
    Random,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(InputKind::Zeros),
            "random" => Ok(InputKind::Random),
            _ => Err(Error::invalid("input", format!("unknown input kind {s:?} (expected zeros or random)"))),
        }
    }
}

/// A `1×3×size×size` input for `graph`-style models.
pub fn synthetic_input(size: usize, kind: InputKind, seed: u64) -> Tensor {
    let shape = [1, INPUT_CHANNELS, size, size];
    match kind {
        InputKind::Zeros => Tensor::zeros(shape),
        InputKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Tensor::from_fn(shape, |_| rng.gen::<f32>())
        }
    }
}

pub fn load_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
