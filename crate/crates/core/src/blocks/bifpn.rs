//! Fast normalised fusion: `O = Σ relu(wᵢ)·Iᵢ / (ε + Σ relu(wⱼ))`.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Scalar, Tensor};

pub const BIFPN_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights<T = f32> {
    pub w: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> FusionWeights<T> {
    /// `n` weights initialised to one, `ε = 1e-4`.
    pub fn ones(n: usize) -> Self {
        FusionWeights {
            w: vec![T::one(); n],
            eps: T::cast_from(BIFPN_EPS),
        }
    }

    pub fn new(w: Vec<T>, eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::invalid("fusion_weights", "eps must be positive"));
        }
        Ok(FusionWeights { w, eps })
    }

    fn denominator(&self) -> T {
        self.eps + self.w.iter().map(|&w| w.max(T::zero())).sum::<T>()
    }

    /// Effective per-input coefficients `relu(wᵢ) / (ε + Σ relu(wⱼ))`.
    pub fn normalized(&self) -> Vec<T> {
        let d = self.denominator();
        self.w.iter().map(|&w| w.max(T::zero()) / d).collect()
    }

    pub fn tensor(&self) -> Tensor<T> {
        Tensor::new([self.w.len()], self.w.clone()).expect("non-empty fusion weights")
    }
}

fn check_inputs<T: Scalar>(op: &'static str, ws: &FusionWeights<T>, inputs: &[&Tensor<T>], same_shape: bool) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid(op, "no inputs to fuse"));
    }
    if ws.w.len() != inputs.len() {
        return Err(Error::shape(op, format!("{} weights for {} inputs", ws.w.len(), inputs.len())));
    }
    if same_shape {
        let first = inputs[0].shape();
        if let Some((i, t)) = inputs.iter().enumerate().find(|(_, t)| t.shape() != first) {
            return Err(Error::shape(op, format!("input {i} has shape {:?}, expected {first:?}", t.shape())));
        }
    }
    Ok(())
}

/// Weighted sum of same-shaped inputs.
pub fn bifpn_fuse<T: Scalar>(ws: &FusionWeights<T>, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    check_inputs("bifpn_fuse", ws, inputs, true)?;
    let coeffs = ws.normalized();
    let mut out = Tensor::zeros(inputs[0].shape().to_vec());
    for (t, &a) in inputs.iter().zip(&coeffs) {
        for (o, &v) in out.data_mut().iter_mut().zip(t.data()) {
            *o = *o + a * v;
        }
    }
    Ok(out)
}

/// `∂⟨U, O⟩/∂wₖ` for each weight, where `U` is the upstream gradient.
///
/// For `wₖ > 0` this is `⟨U, Iₖ − O⟩ / (ε + Σ relu(w))`; clamped weights get
/// zero. Exactly-zero weights sit on the ReLU kink and are rejected.
pub fn bifpn_fuse_grad<T: Scalar>(ws: &FusionWeights<T>, inputs: &[&Tensor<T>], upstream: &Tensor<T>) -> Result<Vec<T>> {
    check_inputs("bifpn_fuse_grad", ws, inputs, true)?;
    if upstream.shape() != inputs[0].shape() {
        return Err(Error::shape(
            "bifpn_fuse_grad",
            format!("upstream {:?} vs inputs {:?}", upstream.shape(), inputs[0].shape()),
        ));
    }
    if let Some(k) = ws.w.iter().position(|&w| w == T::zero()) {
        return Err(Error::invalid("bifpn_fuse_grad", format!("weight {k} is exactly zero (subgradient point)")));
    }
    let fused = bifpn_fuse(ws, inputs)?;
    let d = ws.denominator();
    Ok(ws
        .w
        .iter()
        .zip(inputs)
        .map(|(&w, input)| {
            if w < T::zero() {
                return T::zero();
            }
            let dot = upstream
                .data()
                .iter()
                .zip(input.data().iter().zip(fused.data()))
                .fold(T::zero(), |acc, (&u, (&i, &o))| acc + u * (i - o));
            dot / d
        })
        .collect())
}

/// Scales each input by its normalised fusion coefficient and concatenates
/// along channels. Inputs only need matching batch and spatial dims.
pub fn weighted_concat<T: Scalar>(ws: &FusionWeights<T>, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    check_inputs("weighted_concat", ws, inputs, false)?;
    let coeffs = ws.normalized();
    let scaled: Vec<Tensor<T>> = inputs.iter().zip(&coeffs).map(|(t, &a)| t.scale(a)).collect();
    kernels::concat_channels(&scaled.iter().collect::<Vec<_>>())
}
