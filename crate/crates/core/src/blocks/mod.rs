//! Composite layers of the detector.
//!
//! Every block answers three questions independently:
//!
//! - [`Block::declared_params`]: the closed-form parameter count derived from
//!   its hyper-parameters alone (see [`count`]);
//! - [`Block::visit_params`]: the weight tensors it actually allocated;
//! - [`Block::macs`]: multiply-accumulates for one image at a given input shape.
//!
//! The first two are deliberately separate routes so tests can check that they
//! agree.

mod bifpn;
mod conv;
mod coord_att;
pub mod count;
mod csp;
mod detect;
mod ghost;
mod init;
mod sppf;
mod transformer;

pub use bifpn::{bifpn_fuse, bifpn_fuse_grad, weighted_concat, FusionWeights, BIFPN_EPS};
pub use conv::{conv_block_params, Activation, BatchNorm, ConvBlock};
pub use coord_att::CoordAtt;
pub use csp::{Bottleneck, C3Inner, C3};
pub use detect::{decode, DecodedBox, Detect, DEFAULT_ANCHORS, DETECT_STRIDES};
pub use ghost::{GhostBottleneck, GhostConv};
pub use init::ParamInit;
pub use sppf::Sppf;
pub use transformer::{Linear, MultiHeadAttention, TransformerBlock, TransformerLayer};

use crate::error::Result;
use crate::tensor::Tensor;

/// Channel and spatial extent of one image's feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureShape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        FeatureShape { c, h, w }
    }

    pub const fn area(&self) -> usize {
        self.h * self.w
    }
}

impl std::fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// What a weight tensor is for; decides whether it counts as a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    /// BN scale of a conv→BN unit; absorbed into the conv weight when folded.
    FoldableBnScale,
    /// BN shift of a conv→BN unit; becomes the conv bias when folded.
    FoldableBnShift,
    /// Scale of a BN layer that is not owned by a conv block.
    BnScale,
    /// Shift of a BN layer that is not owned by a conv block.
    BnShift,
    /// Running mean or variance. Never a parameter.
    BnStatistic,
    /// Fast-normalised fusion weight.
    Fusion,
}

/// Parameter-counting convention for batch-norm layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BnCounting {
    /// Each conv→BN unit is folded into a biased conv: `c1·c2·k²/g + c2`.
    /// This is how the deployed (fused) detector reports its size.
    #[default]
    Folded,
    /// BN γ and β are counted separately: `c1·c2·k²/g + 2·c2`.
    Affine,
}

impl BnCounting {
    pub fn counts(self, role: ParamRole) -> bool {
        match role {
            ParamRole::BnStatistic => false,
            ParamRole::FoldableBnScale => self == BnCounting::Affine,
            _ => true,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "folded" => Some(BnCounting::Folded),
            "affine" => Some(BnCounting::Affine),
            _ => None,
        }
    }
}

pub trait Block: Send + Sync {
    fn forward(&self, x: &Tensor) -> Result<Tensor>;

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape>;

    fn declared_params(&self, counting: BnCounting) -> u64;

    fn macs(&self, input: FeatureShape) -> u64;

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor));

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor));
}

/// Parameter count obtained by walking the allocated tensors.
pub fn enumerated_params(block: &dyn Block, counting: BnCounting) -> u64 {
    let mut total = 0u64;
    block.visit_params(&mut |role, t| {
        if counting.counts(role) {
            total += t.numel() as u64;
        }
    });
    total
}
