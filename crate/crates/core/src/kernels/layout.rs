use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Concatenates NCHW tensors along the channel axis, preserving input order.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("concat_channels", "no inputs"))?;
    let (n, _, h, w) = first.dims4("concat_channels")?;
    let mut total_c = 0;
    for (i, t) in xs.iter().enumerate() {
        let (tn, tc, th, tw) = t.dims4("concat_channels")?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(
                "concat_channels",
                format!("input {i} is {:?}, expected N={n}, H={h}, W={w}", t.shape()),
            ));
        }
        total_c += tc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total_c * plane);
    for b in 0..n {
        for t in xs {
            let c = t.shape()[1];
            data.extend_from_slice(&t.data()[b * c * plane..(b + 1) * c * plane]);
        }
    }
    Tensor::new([n, total_c, h, w], data)
}

/// Channels `start..start + len` of an NCHW tensor.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("slice_channels")?;
    if len == 0 || start + len > c {
        return Err(Error::shape(
            "slice_channels",
            format!("range {start}..{} outside {c} channels", start + len),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * len * plane);
    for b in 0..n {
        let base = (b * c + start) * plane;
        data.extend_from_slice(&x.data()[base..base + len * plane]);
    }
    Tensor::new([n, len, h, w], data)
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn nearest_upsample<T: Scalar>(x: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("nearest_upsample")?;
    if scale == 0 {
        return Err(Error::invalid("nearest_upsample", "scale must be at least 1"));
    }
    let (oh, ow) = (h * scale, w * scale);
    let src = x.data();
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for p in 0..n * c {
        let plane = &src[p * h * w..][..h * w];
        for oy in 0..oh {
            let row = &plane[(oy / scale) * w..][..w];
            for ox in 0..ow {
                data.push(row[ox / scale]);
            }
        }
    }
    Tensor::new([n, c, oh, ow], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_order_and_roundtrip() {
        let a = Tensor::<f32>::from_fn([2, 2, 2, 2], |i| i as f32);
        let b = Tensor::<f32>::from_fn([2, 3, 2, 2], |i| 100.0 + i as f32);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 5, 2, 2]);
        assert_eq!(slice_channels(&c, 0, 2).unwrap(), a);
        assert_eq!(slice_channels(&c, 2, 3).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 1, 2, 3]);
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(concat_channels::<f32>(&[]).is_err());
    }

    #[test]
    fn upsample_replicates() {
        let x = Tensor::new([1, 1, 1, 1], vec![7.0f32]).unwrap();
        let y = nearest_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 7.0));
        let x = Tensor::<f64>::from_fn([1, 2, 3, 2], |i| (i as f64).sin());
        assert_eq!(nearest_upsample(&x, 1).unwrap(), x);
        let y = nearest_upsample(&x, 3).unwrap();
        assert!((y.sum() - 9.0 * x.sum()).abs() < 1e-12);
        assert_eq!(y.at4(0, 1, 4, 5), x.at4(0, 1, 1, 1));
    }
}
