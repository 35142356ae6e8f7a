use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Inference-mode batch normalisation over the channel axis of an NCHW
/// tensor: `y = γ·(x − μ)/√(σ² + ε) + β`.
pub fn batchnorm_infer<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("batchnorm_infer")?;
    for (name, v) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
        if v.len() != c {
            return Err(Error::shape(
                "batchnorm_infer",
                format!("{name} has {} entries for {c} channels", v.len()),
            ));
        }
    }
    if let Some(i) = var.iter().position(|&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::invalid(
            "batchnorm_infer",
            format!("variance of channel {i} is {:?}", var[i]),
        ));
    }
    let scale: Vec<T> = (0..c).map(|i| gamma[i] / (var[i] + eps).sqrt()).collect();
    let mut out = x.clone();
    let plane = h * w;
    for (p, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let ch = p % c;
        for v in chunk.iter_mut() {
            *v = scale[ch] * (*v - mean[ch]) + beta[ch];
        }
    }
    debug_assert_eq!(out.numel(), n * c * plane);
    Ok(out)
}
