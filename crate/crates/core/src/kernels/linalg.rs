use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Scalar, Tensor};

/// Affine map over the last dimension: `y = x·Wᵀ + b` with `W` shaped
/// `[Dout, Din]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let din = *x.shape().last().expect("tensor rank is at least one");
    let [dout, wdin] = weight.shape()[..] else {
        return Err(Error::shape("linear", format!("weight must be 2-D, got {:?}", weight.shape())));
    };
    if wdin != din {
        return Err(Error::shape(
            "linear",
            format!("input feature dim {din} does not match weight in-dim {wdin}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [dout] {
            return Err(Error::shape("linear", format!("bias shape {:?}, expected [{dout}]", b.shape())));
        }
    }
    let rows = x.numel() / din;
    let xs = x.data();
    let ws = weight.data();
    let bs = bias.map(|b| b.data());
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    let mut out = Tensor::zeros(shape);
    par::for_each_chunk_mut(out.data_mut(), dout, |r, row| {
        let xr = &xs[r * din..][..din];
        for (o, y) in row.iter_mut().enumerate() {
            let wr = &ws[o * din..][..din];
            let mut acc = bs.map_or(T::zero(), |b| b[o]);
            for (&a, &b) in xr.iter().zip(wr) {
                acc = acc + a * b;
            }
            *y = acc;
        }
    });
    debug_assert_eq!(out.numel(), rows * dout);
    Ok(out)
}

/// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ([m, k], [n, kb]) = (a.shape(), b.shape()) else {
        return Err(Error::shape("matmul_nt", format!("expected 2-D operands, got {:?} and {:?}", a.shape(), b.shape())));
    };
    let (m, k, n, kb) = (*m, *k, *n, *kb);
    if k != kb {
        return Err(Error::shape("matmul_nt", format!("inner dims {k} and {kb} differ")));
    }
    linear(a, b, None).inspect(|t| {
        debug_assert_eq!(t.shape(), [m, n]);
    })
}

/// Softmax over the last dimension, stabilised by subtracting the row max.
pub fn softmax_lastdim<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = *x.shape().last().expect("tensor rank is at least one");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}
