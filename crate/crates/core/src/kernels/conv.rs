use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            stride: 1,
            pad: 0,
            groups: 1,
        }
    }
}

/// Output length of a strided window over `len` cells with symmetric padding.
pub fn conv_out_dim(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Direct 2-D cross-correlation (no kernel flip) with zero padding.
///
/// `x` is `[N, Cin, H, W]`, `weight` is `[Cout, Cin/groups, kh, kw]`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = x.dims4("conv2d")?;
    let (cout, cin_g, kh, kw) = weight.dims4("conv2d")?;
    let Conv2dSpec { stride, pad, groups } = spec;
    if groups == 0 || cin % groups != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {cin} not divisible by groups {groups}"),
        ));
    }
    if cout % groups != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("output channels {cout} not divisible by groups {groups}"),
        ));
    }
    if cin / groups != cin_g {
        return Err(Error::shape(
            "conv2d",
            format!(
                "weight in-channel dim is {cin_g}, expected {} (= {cin} / {groups})",
                cin / groups
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?}, expected [{cout}]", b.shape()),
            ));
        }
    }
    let oh = conv_out_dim(h, kh, stride, pad).ok_or_else(|| {
        Error::shape("conv2d", format!("height {h} + 2·{pad} is smaller than kernel height {kh}"))
    })?;
    let ow = conv_out_dim(w, kw, stride, pad).ok_or_else(|| {
        Error::shape("conv2d", format!("width {w} + 2·{pad} is smaller than kernel width {kw}"))
    })?;

    let cout_g = cout / groups;
    let xs = x.data();
    let ws = weight.data();
    let bs = bias.map(|b| b.data());
    let mut out = Tensor::zeros([n, cout, oh, ow]);

    par::for_each_chunk_mut(out.data_mut(), oh * ow, |p, plane| {
        let (b, oc) = (p / cout, p % cout);
        let g = oc / cout_g;
        if let Some(bs) = bs {
            plane.fill(bs[oc]);
        }
        for icg in 0..cin_g {
            let ic = g * cin_g + icg;
            let src = &xs[(b * cin + ic) * h * w..][..h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = ws[((oc * cin_g + icg) * kh + ky) * kw + kx];
                    // Output columns whose input column stays inside [0, w).
                    let ox_lo = pad.saturating_sub(kx).div_ceil(stride);
                    let ox_hi = if w + pad > kx {
                        ((w + pad - kx - 1) / stride + 1).min(ow)
                    } else {
                        0
                    };
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy * stride + ky;
                        if iy < pad || iy - pad >= h {
                            continue;
                        }
                        let row = &src[(iy - pad) * w..][..w];
                        let dst = &mut plane[oy * ow..][..ow];
                        if stride == 1 {
                            let off = ox_lo + kx - pad;
                            let len = ox_hi - ox_lo;
                            for (d, &s) in dst[ox_lo..ox_hi].iter_mut().zip(&row[off..off + len]) {
                                *d = *d + wv * s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[ox] = dst[ox] + wv * row[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}
