use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::{count, Block, BnCounting, ConvBlock, FeatureShape, ParamInit, ParamRole};

/// Fast spatial pyramid pooling: 1×1 reduce, three chained stride-1 max-pools,
/// concatenation of the four maps, 1×1 expand.
#[derive(Clone, Debug)]
pub struct Sppf {
    pub k: usize,
    pub cv1: ConvBlock,
    pub cv2: ConvBlock,
}

impl Sppf {
    pub fn new(c1: usize, c2: usize, k: usize, init: &mut ParamInit) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::invalid("sppf", format!("pool kernel {k} must be odd")));
        }
        let hidden = c1 / 2;
        Ok(Sppf {
            k,
            cv1: ConvBlock::simple(c1, hidden, 1, 1, init)?,
            cv2: ConvBlock::simple(4 * hidden, c2, 1, 1, init)?,
        })
    }

    fn pool(&self, x: &Tensor) -> Result<Tensor> {
        kernels::maxpool2d(x, self.k, 1, self.k / 2)
    }
}

impl Block for Sppf {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.cv1.forward(x)?;
        let y1 = self.pool(&x)?;
        let y2 = self.pool(&y1)?;
        let y3 = self.pool(&y2)?;
        self.cv2.forward(&kernels::concat_channels(&[&x, &y1, &y2, &y3])?)
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        let s = self.cv1.out_shape(input)?;
        Ok(FeatureShape::new(self.cv2.c2, s.h, s.w))
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::sppf(self.cv1.c1, self.cv2.c2, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let mid = self.cv1.out_shape(input).unwrap_or(input);
        self.cv1.macs(input) + self.cv2.macs(FeatureShape::new(4 * mid.c, mid.h, mid.w))
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        self.cv1.visit_params(f);
        self.cv2.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        self.cv1.visit_params_mut(f);
        self.cv2.visit_params_mut(f);
    }
}
