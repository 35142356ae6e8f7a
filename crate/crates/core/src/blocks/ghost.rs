use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::{count, Activation, Block, BnCounting, ConvBlock, FeatureShape, ParamInit, ParamRole};

/// Half the output channels come from a regular conv, the other half from a
/// 5×5 depthwise conv over that result; the two halves are concatenated with
/// the primary path first.
#[derive(Clone, Debug)]
pub struct GhostConv {
    pub primary: ConvBlock,
    pub cheap: ConvBlock,
}

impl GhostConv {
    pub fn new(c1: usize, c2: usize, k: usize, stride: usize, act: Activation, init: &mut ParamInit) -> Result<Self> {
        if !c2.is_multiple_of(2) {
            return Err(Error::invalid("ghost_conv", format!("output channels {c2} must be even")));
        }
        let hidden = c2 / 2;
        Ok(GhostConv {
            primary: ConvBlock::new(c1, hidden, k, stride, None, 1, act, init)?,
            cheap: ConvBlock::new(hidden, hidden, 5, 1, None, hidden, act, init)?,
        })
    }

    pub fn c2(&self) -> usize {
        2 * self.primary.c2
    }
}

impl Block for GhostConv {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.primary.forward(x)?;
        let z = self.cheap.forward(&y)?;
        kernels::concat_channels(&[&y, &z])
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        let s = self.primary.out_shape(input)?;
        Ok(FeatureShape::new(self.c2(), s.h, s.w))
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::ghost_conv(self.primary.c1, self.c2(), self.primary.k, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let mid = self.primary.out_shape(input).unwrap_or(input);
        self.primary.macs(input) + self.cheap.macs(mid)
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        self.primary.visit_params(f);
        self.cheap.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        self.primary.visit_params_mut(f);
        self.cheap.visit_params_mut(f);
    }
}

#[derive(Clone, Debug)]
enum Shortcut {
    Identity,
    Project(Option<ConvBlock>, ConvBlock),
}

/// GhostConv(c1→c2/2) → [depthwise k×k, stride 2] → GhostConv(c2/2→c2, no
/// activation), plus a shortcut: identity at stride 1 with c1 == c2, otherwise
/// a depthwise (stride 2 only) and pointwise projection without activation.
#[derive(Clone, Debug)]
pub struct GhostBottleneck {
    pub c1: usize,
    pub c2: usize,
    pub k: usize,
    pub stride: usize,
    expand: GhostConv,
    downsample: Option<ConvBlock>,
    project: GhostConv,
    shortcut: Shortcut,
}

impl GhostBottleneck {
    pub fn new(c1: usize, c2: usize, k: usize, stride: usize, init: &mut ParamInit) -> Result<Self> {
        if stride != 1 && stride != 2 {
            return Err(Error::invalid("ghost_bottleneck", format!("stride must be 1 or 2, got {stride}")));
        }
        let mid = c2 / 2;
        let expand = GhostConv::new(c1, mid, 1, 1, Activation::Silu, init)?;
        let downsample = if stride == 2 {
            Some(ConvBlock::depthwise(mid, k, 2, Activation::Identity, init)?)
        } else {
            None
        };
        let project = GhostConv::new(mid, c2, 1, 1, Activation::Identity, init)?;
        let shortcut = if stride == 2 {
            Shortcut::Project(
                Some(ConvBlock::depthwise(c1, k, 2, Activation::Identity, init)?),
                ConvBlock::new(c1, c2, 1, 1, None, 1, Activation::Identity, init)?,
            )
        } else if c1 != c2 {
            Shortcut::Project(None, ConvBlock::new(c1, c2, 1, 1, None, 1, Activation::Identity, init)?)
        } else {
            Shortcut::Identity
        };
        Ok(GhostBottleneck {
            c1,
            c2,
            k,
            stride,
            expand,
            downsample,
            project,
            shortcut,
        })
    }
}

impl Block for GhostBottleneck {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.expand.forward(x)?;
        if let Some(dw) = &self.downsample {
            y = dw.forward(&y)?;
        }
        let y = self.project.forward(&y)?;
        let skip = match &self.shortcut {
            Shortcut::Identity => x.clone(),
            Shortcut::Project(dw, pw) => match dw {
                Some(dw) => pw.forward(&dw.forward(x)?)?,
                None => pw.forward(x)?,
            },
        };
        y.add(&skip)
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        let mut s = self.expand.out_shape(input)?;
        if let Some(dw) = &self.downsample {
            s = dw.out_shape(s)?;
        }
        self.project.out_shape(s)
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::ghost_bottleneck(self.c1, self.c2, self.k, self.stride, counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let mut total = self.expand.macs(input);
        let mut s = self.expand.out_shape(input).unwrap_or(input);
        if let Some(dw) = &self.downsample {
            total += dw.macs(s);
            s = dw.out_shape(s).unwrap_or(s);
        }
        total += self.project.macs(s);
        if let Shortcut::Project(dw, pw) = &self.shortcut {
            let mut s = input;
            if let Some(dw) = dw {
                total += dw.macs(s);
                s = dw.out_shape(s).unwrap_or(s);
            }
            total += pw.macs(s);
        }
        total
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        self.expand.visit_params(f);
        if let Some(dw) = &self.downsample {
            dw.visit_params(f);
        }
        self.project.visit_params(f);
        if let Shortcut::Project(dw, pw) = &self.shortcut {
            if let Some(dw) = dw {
                dw.visit_params(f);
            }
            pw.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        self.expand.visit_params_mut(f);
        if let Some(dw) = &mut self.downsample {
            dw.visit_params_mut(f);
        }
        self.project.visit_params_mut(f);
        if let Shortcut::Project(dw, pw) = &mut self.shortcut {
            if let Some(dw) = dw {
                dw.visit_params_mut(f);
            }
            pw.visit_params_mut(f);
        }
    }
}
