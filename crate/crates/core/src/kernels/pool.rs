use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Scalar, Tensor};

use super::conv::conv_out_dim;

/// Max pooling where padded cells are ignored rather than compared.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("maxpool2d")?;
    if k == 0 || stride == 0 {
        return Err(Error::invalid("maxpool2d", "kernel and stride must be positive"));
    }
    if pad >= k {
        return Err(Error::invalid("maxpool2d", format!("padding {pad} must be below kernel {k}")));
    }
    let oh = conv_out_dim(h, k, stride, pad)
        .ok_or_else(|| Error::shape("maxpool2d", format!("window {k} exceeds padded height {}", h + 2 * pad)))?;
    let ow = conv_out_dim(w, k, stride, pad)
        .ok_or_else(|| Error::shape("maxpool2d", format!("window {k} exceeds padded width {}", w + 2 * pad)))?;
    let xs = x.data();
    let mut out = Tensor::zeros([n, c, oh, ow]);
    par::for_each_chunk_mut(out.data_mut(), oh * ow, |p, plane| {
        let src = &xs[p * h * w..][..h * w];
        for oy in 0..oh {
            let y0 = (oy * stride).saturating_sub(pad);
            let y1 = (oy * stride + k - pad).min(h);
            for ox in 0..ow {
                let x0 = (ox * stride).saturating_sub(pad);
                let x1 = (ox * stride + k - pad).min(w);
                let mut m = T::neg_infinity();
                for yy in y0..y1 {
                    for &v in &src[yy * w + x0..yy * w + x1] {
                        m = m.max(v);
                    }
                }
                plane[oy * ow + ox] = m;
            }
        }
    });
    Ok(out)
}
