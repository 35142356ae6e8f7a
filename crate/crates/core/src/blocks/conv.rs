use crate::error::{Error, Result};
use crate::kernels::{self, Conv2dSpec};
use crate::tensor::Tensor;

use super::{count, Block, BnCounting, FeatureShape, ParamInit, ParamRole};

/// Eps of the YOLOv5 BN layers.
pub const BN_EPS: f32 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Hardswish,
    Identity,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Silu => kernels::silu(x),
            Activation::Hardswish => kernels::hardswish(x),
            Activation::Identity => x.clone(),
        }
    }
}

/// Inference-mode batch norm with γ=1, β=0, μ=0, σ²=1 at construction.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub mean: Tensor,
    pub var: Tensor,
    pub eps: f32,
    /// Owned by a conv block, so it folds into the conv when deployed.
    pub foldable: bool,
}

impl BatchNorm {
    pub fn identity(c: usize, foldable: bool) -> Self {
        BatchNorm {
            gamma: Tensor::full([c], 1.0),
            beta: Tensor::zeros([c]),
            mean: Tensor::zeros([c]),
            var: Tensor::full([c], 1.0),
            eps: BN_EPS,
            foldable,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        kernels::batchnorm_infer(
            x,
            self.gamma.data(),
            self.beta.data(),
            self.mean.data(),
            self.var.data(),
            self.eps,
        )
    }

    fn roles(&self) -> (ParamRole, ParamRole) {
        if self.foldable {
            (ParamRole::FoldableBnScale, ParamRole::FoldableBnShift)
        } else {
            (ParamRole::BnScale, ParamRole::BnShift)
        }
    }

    pub fn visit(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        let (scale, shift) = self.roles();
        f(scale, &self.gamma);
        f(shift, &self.beta);
        f(ParamRole::BnStatistic, &self.mean);
        f(ParamRole::BnStatistic, &self.var);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        let (scale, shift) = self.roles();
        f(scale, &mut self.gamma);
        f(shift, &mut self.beta);
        f(ParamRole::BnStatistic, &mut self.mean);
        f(ParamRole::BnStatistic, &mut self.var);
    }
}

/// Trainable parameters of a conv → BN → SiLU unit with γ and β counted.
pub fn conv_block_params(c1: usize, c2: usize, k: usize, groups: usize) -> u64 {
    count::conv(c1, c2, k, groups, BnCounting::Affine)
}

/// Bias-free conv → BN → activation, the basic YOLOv5 unit.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub c1: usize,
    pub c2: usize,
    pub k: usize,
    pub spec: Conv2dSpec,
    pub act: Activation,
    pub weight: Tensor,
    pub bn: BatchNorm,
}

impl ConvBlock {
    /// Conv with "same" padding `k / 2` unless `pad` is given.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        c1: usize,
        c2: usize,
        k: usize,
        stride: usize,
        pad: Option<usize>,
        groups: usize,
        act: Activation,
        init: &mut ParamInit,
    ) -> Result<Self> {
        if c1 == 0 || c2 == 0 || k == 0 || stride == 0 {
            return Err(Error::invalid(
                "conv_block",
                format!("channels, kernel and stride must be positive (c1={c1}, c2={c2}, k={k}, s={stride})"),
            ));
        }
        if groups == 0 || !c1.is_multiple_of(groups) || !c2.is_multiple_of(groups) {
            return Err(Error::invalid(
                "conv_block",
                format!("groups {groups} must divide both c1={c1} and c2={c2}"),
            ));
        }
        Ok(ConvBlock {
            c1,
            c2,
            k,
            spec: Conv2dSpec {
                stride,
                pad: pad.unwrap_or(k / 2),
                groups,
            },
            act,
            weight: init.uniform([c2, c1 / groups, k, k]),
            bn: BatchNorm::identity(c2, true),
        })
    }

    pub fn simple(c1: usize, c2: usize, k: usize, stride: usize, init: &mut ParamInit) -> Result<Self> {
        Self::new(c1, c2, k, stride, None, 1, Activation::Silu, init)
    }

    pub fn depthwise(c: usize, k: usize, stride: usize, act: Activation, init: &mut ParamInit) -> Result<Self> {
        Self::new(c, c, k, stride, None, c, act, init)
    }
}

impl Block for ConvBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4("conv_block")?;
        if c != self.c1 {
            return Err(Error::shape("conv_block", format!("expected {} input channels, got {c}", self.c1)));
        }
        let y = kernels::conv2d(x, &self.weight, None, self.spec)?;
        Ok(self.act.apply(&self.bn.forward(&y)?))
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        if input.c != self.c1 {
            return Err(Error::shape("conv_block", format!("expected {} input channels, got {}", self.c1, input.c)));
        }
        let Conv2dSpec { stride, pad, .. } = self.spec;
        let h = kernels::conv_out_dim(input.h, self.k, stride, pad);
        let w = kernels::conv_out_dim(input.w, self.k, stride, pad);
        match (h, w) {
            (Some(h), Some(w)) => Ok(FeatureShape::new(self.c2, h, w)),
            _ => Err(Error::shape("conv_block", format!("kernel {} does not fit input {input}", self.k))),
        }
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::conv(self.c1, self.c2, self.k, self.spec.groups, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let out = self.out_shape(input).map(|s| s.area()).unwrap_or(0);
        count::conv_macs(self.c1, self.c2, self.k, self.spec.groups, out)
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        f(ParamRole::Weight, &self.weight);
        self.bn.visit(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        f(ParamRole::Weight, &mut self.weight);
        self.bn.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::enumerated_params;

    #[test]
    fn param_counts_agree() {
        let mut init = ParamInit::new(0);
        let b = ConvBlock::simple(3, 32, 6, 2, &mut init).unwrap();
        assert_eq!(b.declared_params(BnCounting::Affine), 3520);
        assert_eq!(conv_block_params(3, 32, 6, 1), 3520);
        assert_eq!(conv_block_params(1, 1, 1, 1), 3);
        for counting in [BnCounting::Affine, BnCounting::Folded] {
            assert_eq!(b.declared_params(counting), enumerated_params(&b, counting));
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut init = ParamInit::new(1);
        let b = ConvBlock::simple(4, 8, 3, 1, &mut init).unwrap();
        let y = b.forward(&Tensor::zeros([1, 4, 5, 5])).unwrap();
        assert_eq!(y.shape(), &[1, 8, 5, 5]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_indivisible_groups() {
        let mut init = ParamInit::new(1);
        assert!(ConvBlock::new(6, 4, 3, 1, None, 4, Activation::Silu, &mut init).is_err());
        assert!(ConvBlock::new(4, 6, 3, 1, None, 4, Activation::Silu, &mut init).is_err());
    }

    #[test]
    fn macs_of_pointwise() {
        let mut init = ParamInit::new(1);
        let b = ConvBlock::simple(1, 1, 1, 1, &mut init).unwrap();
        assert_eq!(b.macs(FeatureShape::new(1, 10, 10)), 100);
    }
}
