use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::count::{self, C3Kind};
use super::{Block, BnCounting, ConvBlock, FeatureShape, GhostBottleneck, ParamInit, ParamRole, TransformerBlock};

/// 1×1 conv → 3×3 conv with an optional residual add.
#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub cv1: ConvBlock,
    pub cv2: ConvBlock,
    pub residual: bool,
}

impl Bottleneck {
    pub fn new(c1: usize, c2: usize, shortcut: bool, init: &mut ParamInit) -> Result<Self> {
        Ok(Bottleneck {
            cv1: ConvBlock::simple(c1, c2, 1, 1, init)?,
            cv2: ConvBlock::simple(c2, c2, 3, 1, init)?,
            residual: shortcut && c1 == c2,
        })
    }
}

impl Block for Bottleneck {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.cv2.forward(&self.cv1.forward(x)?)?;
        if self.residual {
            y.add(x)
        } else {
            Ok(y)
        }
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        self.cv2.out_shape(self.cv1.out_shape(input)?)
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::bottleneck(self.cv1.c1, self.cv2.c2, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        self.cv1.macs(input) + self.cv2.macs(self.cv1.out_shape(input).unwrap_or(input))
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

/// What runs on the processed branch of a C3 block.
#[derive(Clone, Debug)]
pub enum C3Inner {
    Plain(Vec<Bottleneck>),
    Ghost(Vec<GhostBottleneck>),
    Transformer(TransformerBlock),
}

impl C3Inner {
    fn blocks(&self) -> Vec<&dyn Block> {
        match self {
            C3Inner::Plain(bs) => bs.iter().map(|b| b as &dyn Block).collect(),
            C3Inner::Ghost(bs) => bs.iter().map(|b| b as &dyn Block).collect(),
            C3Inner::Transformer(t) => vec![t as &dyn Block],
        }
    }

    fn blocks_mut(&mut self) -> Vec<&mut dyn Block> {
        match self {
            C3Inner::Plain(bs) => bs.iter_mut().map(|b| b as &mut dyn Block).collect(),
            C3Inner::Ghost(bs) => bs.iter_mut().map(|b| b as &mut dyn Block).collect(),
            C3Inner::Transformer(t) => vec![t as &mut dyn Block],
        }
    }
}

/// Cross-stage-partial block: `cv3(concat(inner(cv1(x)), cv2(x)))`, with both
/// branches at `c2 / 2` channels.
#[derive(Clone, Debug)]
pub struct C3 {
    pub c1: usize,
    pub c2: usize,
    pub n: usize,
    pub kind: C3Kind,
    pub cv1: ConvBlock,
    pub cv2: ConvBlock,
    pub cv3: ConvBlock,
    pub inner: C3Inner,
}

impl C3 {
    pub fn new(c1: usize, c2: usize, n: usize, kind: C3Kind, shortcut: bool, init: &mut ParamInit) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("c3", "repeat count must be at least 1"));
        }
        if c2 < 2 {
            return Err(Error::invalid("c3", format!("output channels {c2} too small")));
        }
        let hidden = c2 / 2;
        let cv1 = ConvBlock::simple(c1, hidden, 1, 1, init)?;
        let cv2 = ConvBlock::simple(c1, hidden, 1, 1, init)?;
        let cv3 = ConvBlock::simple(2 * hidden, c2, 1, 1, init)?;
        let inner = match kind {
            C3Kind::Bottleneck => C3Inner::Plain(
                (0..n)
                    .map(|_| Bottleneck::new(hidden, hidden, shortcut, init))
                    .collect::<Result<_>>()?,
            ),
            C3Kind::Ghost => C3Inner::Ghost(
                (0..n)
                    .map(|_| GhostBottleneck::new(hidden, hidden, 3, 1, init))
                    .collect::<Result<_>>()?,
            ),
            C3Kind::Transformer { heads } => C3Inner::Transformer(TransformerBlock::new(hidden, hidden, heads, n, init)?),
        };
        Ok(C3 {
            c1,
            c2,
            n,
            kind,
            cv1,
            cv2,
            cv3,
            inner,
        })
    }
}

impl Block for C3 {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut a = self.cv1.forward(x)?;
        for b in self.inner.blocks() {
            a = b.forward(&a)?;
        }
        let b = self.cv2.forward(x)?;
        self.cv3.forward(&kernels::concat_channels(&[&a, &b])?)
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        let s = self.cv1.out_shape(input)?;
        Ok(FeatureShape::new(self.c2, s.h, s.w))
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::c3(self.c1, self.c2, self.n, self.kind, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let mid = self.cv1.out_shape(input).unwrap_or(input);
        let inner: u64 = self.inner.blocks().iter().map(|b| b.macs(mid)).sum();
        self.cv1.macs(input)
            + self.cv2.macs(input)
            + self.cv3.macs(FeatureShape::new(2 * mid.c, mid.h, mid.w))
            + inner
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        self.cv1.visit_params(f);
        self.cv2.visit_params(f);
        self.cv3.visit_params(f);
        for b in self.inner.blocks() {
            b.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        self.cv1.visit_params_mut(f);
        self.cv2.visit_params_mut(f);
        self.cv3.visit_params_mut(f);
        for b in self.inner.blocks_mut() {
            b.visit_params_mut(f);
        }
    }
}
