use crate::error::{Error, Result};
use crate::kernels::{self, Conv2dSpec};
use crate::tensor::Tensor;

use super::{count, Activation, BatchNorm, Block, BnCounting, FeatureShape, ParamInit, ParamRole};

/// Coordinate attention: directional average pooling along each spatial axis,
/// a shared 1×1 reduction (BN + hard-swish), then per-axis 1×1 expansions
/// with sigmoid gates applied multiplicatively.
#[derive(Clone, Debug)]
pub struct CoordAtt {
    pub c: usize,
    pub reduction: usize,
    pub reduce: Tensor,
    pub bn: BatchNorm,
    pub expand_h: Tensor,
    pub expand_w: Tensor,
}

/// Directional gates produced by [`CoordAtt::forward_with_gates`].
pub struct CoordGates {
    /// `[N, c, H, 1]`
    pub along_h: Tensor,
    /// `[N, c, W, 1]`
    pub along_w: Tensor,
}

impl CoordAtt {
    pub fn new(c: usize, reduction: usize, init: &mut ParamInit) -> Result<Self> {
        if reduction == 0 || c < reduction {
            return Err(Error::invalid(
                "coord_att",
                format!("channels {c} must be at least the reduction {reduction}"),
            ));
        }
        let mid = count::coord_att_mid(c, reduction);
        Ok(CoordAtt {
            c,
            reduction,
            reduce: init.uniform([mid, c, 1, 1]),
            bn: BatchNorm::identity(mid, false),
            expand_h: init.uniform([c, mid, 1, 1]),
            expand_w: init.uniform([c, mid, 1, 1]),
        })
    }

    pub fn mid(&self) -> usize {
        self.reduce.shape()[0]
    }

    pub fn forward_with_gates(&self, x: &Tensor) -> Result<(Tensor, CoordGates)> {
        let (n, c, h, w) = x.dims4("coord_att")?;
        if c != self.c {
            return Err(Error::shape("coord_att", format!("expected {} channels, got {c}", self.c)));
        }
        // [N, c, H + W, 1]: means over W for each row, then means over H for each column.
        let mut pooled = Vec::with_capacity(n * c * (h + w));
        for b in 0..n {
            for ch in 0..c {
                let plane = x.plane(b, ch);
                for row in plane.chunks(w) {
                    pooled.push(row.iter().sum::<f32>() / w as f32);
                }
                for col in 0..w {
                    pooled.push((0..h).map(|r| plane[r * w + col]).sum::<f32>() / h as f32);
                }
            }
        }
        let pooled = Tensor::new([n, c, h + w, 1], pooled)?;
        let y = kernels::conv2d(&pooled, &self.reduce, None, Conv2dSpec::default())?;
        let y = Activation::Hardswish.apply(&self.bn.forward(&y)?);

        let mid = self.mid();
        let (mut yh, mut yw) = (Vec::with_capacity(n * mid * h), Vec::with_capacity(n * mid * w));
        for b in 0..n {
            for ch in 0..mid {
                let plane = y.plane(b, ch);
                yh.extend_from_slice(&plane[..h]);
                yw.extend_from_slice(&plane[h..]);
            }
        }
        let along_h = kernels::sigmoid(&kernels::conv2d(
            &Tensor::new([n, mid, h, 1], yh)?,
            &self.expand_h,
            None,
            Conv2dSpec::default(),
        )?);
        let along_w = kernels::sigmoid(&kernels::conv2d(
            &Tensor::new([n, mid, w, 1], yw)?,
            &self.expand_w,
            None,
            Conv2dSpec::default(),
        )?);

        let mut out = x.clone();
        let plane_len = h * w;
        for (p, plane) in out.data_mut().chunks_mut(plane_len).enumerate() {
            let gh = &along_h.data()[p * h..(p + 1) * h];
            let gw = &along_w.data()[p * w..(p + 1) * w];
            for (i, row) in plane.chunks_mut(w).enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = *v * gh[i] * gw[j];
                }
            }
        }
        Ok((out, CoordGates { along_h, along_w }))
    }
}

impl Block for CoordAtt {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with_gates(x).map(|(y, _)| y)
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        if input.c != self.c {
            return Err(Error::shape("coord_att", format!("expected {} channels, got {}", self.c, input.c)));
        }
        Ok(input)
    }

    fn declared_params(&self, _counting: BnCounting) -> u64 {
        count::coord_att(self.c, self.reduction)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let (c, mid) = (self.c as u64, self.mid() as u64);
        let positions = (input.h + input.w) as u64;
        // reduce over H + W positions, then each expansion over its own axis
        positions * c * mid + positions * mid * c
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        f(ParamRole::Weight, &self.reduce);
        self.bn.visit(f);
        f(ParamRole::Weight, &self.expand_h);
        f(ParamRole::Weight, &self.expand_w);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        f(ParamRole::Weight, &mut self.reduce);
        self.bn.visit_mut(f);
        f(ParamRole::Weight, &mut self.expand_h);
        f(ParamRole::Weight, &mut self.expand_w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::enumerated_params;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gates_in_open_unit_interval_and_shape_kept() {
        let mut init = ParamInit::new(6);
        let ca = CoordAtt::new(16, 4, &mut init).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn([2, 16, 5, 7], |_| rng.gen_range(-3.0f32..3.0));
        let (y, gates) = ca.forward_with_gates(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(gates.along_h.shape(), &[2, 16, 5, 1]);
        assert_eq!(gates.along_w.shape(), &[2, 16, 7, 1]);
        for g in gates.along_h.data().iter().chain(gates.along_w.data()) {
            assert!(*g > 0.0 && *g < 1.0);
        }
        let (b, c, i, j) = (1, 3, 2, 6);
        let want = x.at4(b, c, i, j) * gates.along_h.at4(b, c, i, 0) * gates.along_w.at4(b, c, j, 0);
        assert_eq!(y.at4(b, c, i, j), want);
    }

    #[test]
    fn params_match_counting_oracle() {
        let mut init = ParamInit::new(0);
        let ca = CoordAtt::new(128, 32, &mut init).unwrap();
        // mid = max(8, 4) = 8: reduce 128·8, BN γβ 16, expansions 2·8·128
        let oracle = 128 * 8 + 16 + 2 * 8 * 128;
        for counting in [BnCounting::Folded, BnCounting::Affine] {
            assert_eq!(ca.declared_params(counting), oracle);
            assert_eq!(enumerated_params(&ca, counting), oracle);
        }
        assert!(CoordAtt::new(16, 32, &mut init).is_err());
    }
}
