use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::{count, Block, BnCounting, ConvBlock, FeatureShape, ParamInit, ParamRole};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(din: usize, dout: usize, bias: bool, init: &mut ParamInit) -> Self {
        Linear {
            weight: init.uniform([dout, din]),
            bias: bias.then(|| init.uniform([dout])),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        kernels::linear(x, &self.weight, self.bias.as_ref())
    }

    fn visit(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        f(ParamRole::Weight, &self.weight);
        if let Some(b) = &self.bias {
            f(ParamRole::Bias, b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        f(ParamRole::Weight, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(ParamRole::Bias, b);
        }
    }
}

/// Rows `start..start + len` of a 2-D tensor.
fn rows(t: &Tensor, start: usize, len: usize) -> Tensor {
    let d = t.shape()[1];
    Tensor::new([len, d], t.data()[start * d..(start + len) * d].to_vec()).expect("row slice in bounds")
}

/// Columns `start..start + len` of a 2-D tensor.
fn cols(t: &Tensor, start: usize, len: usize) -> Tensor {
    let (r, d) = (t.shape()[0], t.shape()[1]);
    let mut data = Vec::with_capacity(r * len);
    for i in 0..r {
        data.extend_from_slice(&t.data()[i * d + start..i * d + start + len]);
    }
    Tensor::new([r, len], data).expect("column slice in bounds")
}

/// `a · b` for `a: [m, k]`, `b: [k, n]`.
fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data()[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&b.data()[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new([m, n], out).expect("matmul shape")
}

/// Multi-head scaled dot-product attention over a `[L, c]` sequence with a
/// packed `[3c, c]` input projection and an output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub in_proj_weight: Tensor,
    pub in_proj_bias: Tensor,
    pub out_proj: Linear,
}

impl MultiHeadAttention {
    pub fn new(c: usize, heads: usize, init: &mut ParamInit) -> Result<Self> {
        if heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::invalid(
                "multi_head_attention",
                format!("{c} channels are not divisible by {heads} heads"),
            ));
        }
        Ok(MultiHeadAttention {
            heads,
            in_proj_weight: init.uniform([3 * c, c]),
            in_proj_bias: init.uniform([3 * c]),
            out_proj: Linear::new(c, c, true, init),
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.in_proj_weight.shape()[1]
    }

    /// Returns the attended sequence and the `[L, L]` weight matrix of each head.
    pub fn forward_with_weights(&self, q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let c = self.embed_dim();
        for t in [q, k, v] {
            if t.rank() != 2 || t.shape()[1] != c {
                return Err(Error::shape("multi_head_attention", format!("expected [L, {c}], got {:?}", t.shape())));
            }
        }
        let project = |x: &Tensor, i: usize| -> Result<Tensor> {
            let w = rows(&self.in_proj_weight, i * c, c);
            let b = Tensor::new([c], self.in_proj_bias.data()[i * c..(i + 1) * c].to_vec())?;
            kernels::linear(x, &w, Some(&b))
        };
        let (qp, kp, vp) = (project(q, 0)?, project(k, 1)?, project(v, 2)?);
        let len = q.shape()[0];
        let d = c / self.heads;
        let scale = 1.0 / (d as f32).sqrt();
        let mut merged = vec![0.0f32; len * c];
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = (cols(&qp, h * d, d), cols(&kp, h * d, d), cols(&vp, h * d, d));
            let scores = kernels::matmul_nt(&qh, &kh)?.scale(scale);
            let attn = kernels::softmax_lastdim(&scores);
            let oh = matmul(&attn, &vh);
            for i in 0..len {
                merged[i * c + h * d..i * c + (h + 1) * d].copy_from_slice(&oh.data()[i * d..(i + 1) * d]);
            }
            weights.push(attn);
        }
        let out = self.out_proj.forward(&Tensor::new([len, c], merged)?)?;
        Ok((out, weights))
    }

    fn macs(&self, len: usize) -> u64 {
        let (l, c) = (len as u64, self.embed_dim() as u64);
        3 * l * c * c + 2 * l * l * c + l * c * c
    }

    fn visit(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        f(ParamRole::Weight, &self.in_proj_weight);
        f(ParamRole::Bias, &self.in_proj_bias);
        self.out_proj.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        f(ParamRole::Weight, &mut self.in_proj_weight);
        f(ParamRole::Bias, &mut self.in_proj_bias);
        self.out_proj.visit_mut(f);
    }
}

/// `x = attn(q(x), k(x), v(x)) + x; x = fc2(fc1(x)) + x`.
///
/// The two-layer MLP carries no nonlinearity between its projections, matching
/// the YOLOv5 layer.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub attn: MultiHeadAttention,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TransformerLayer {
    pub fn new(c: usize, heads: usize, init: &mut ParamInit) -> Result<Self> {
        let q = Linear::new(c, c, false, init);
        let k = Linear::new(c, c, false, init);
        let v = Linear::new(c, c, false, init);
        let attn = MultiHeadAttention::new(c, heads, init)?;
        Ok(TransformerLayer {
            q,
            k,
            v,
            attn,
            fc1: Linear::new(c, c, false, init),
            fc2: Linear::new(c, c, false, init),
        })
    }

    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (a, weights) = self
            .attn
            .forward_with_weights(&self.q.forward(x)?, &self.k.forward(x)?, &self.v.forward(x)?)?;
        let x = a.add(x)?;
        let x = self.fc2.forward(&self.fc1.forward(&x)?)?.add(&x)?;
        Ok((x, weights))
    }

    fn macs(&self, len: usize) -> u64 {
        let c = self.attn.embed_dim() as u64;
        5 * len as u64 * c * c + self.attn.macs(len)
    }

    fn visit(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        self.q.visit(f);
        self.k.visit(f);
        self.v.visit(f);
        self.attn.visit(f);
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        self.q.visit_mut(f);
        self.k.visit_mut(f);
        self.v.visit_mut(f);
        self.attn.visit_mut(f);
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

/// Flattens `[N, c, H, W]` to `H·W` tokens, adds a learned positional term
/// `linear(p)`, runs the layers and restores the spatial layout.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub c1: usize,
    pub c2: usize,
    pub stem: Option<ConvBlock>,
    pub position: Linear,
    pub layers: Vec<TransformerLayer>,
}

impl TransformerBlock {
    pub const DEFAULT_HEADS: usize = 4;

    pub fn new(c1: usize, c2: usize, heads: usize, layers: usize, init: &mut ParamInit) -> Result<Self> {
        if heads == 0 || !c2.is_multiple_of(heads) {
            return Err(Error::invalid(
                "transformer_block",
                format!("{c2} channels are not divisible by {heads} heads"),
            ));
        }
        if layers == 0 {
            return Err(Error::invalid("transformer_block", "at least one layer is required"));
        }
        let stem = if c1 != c2 {
            Some(ConvBlock::simple(c1, c2, 1, 1, init)?)
        } else {
            None
        };
        let position = Linear::new(c2, c2, true, init);
        let layers = (0..layers)
            .map(|_| TransformerLayer::new(c2, heads, init))
            .collect::<Result<_>>()?;
        Ok(TransformerBlock {
            c1,
            c2,
            stem,
            position,
            layers,
        })
    }

    pub fn heads(&self) -> usize {
        self.layers[0].attn.heads
    }

    /// Forward pass that also returns, per image and layer, each head's
    /// attention matrix.
    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Vec<Vec<Vec<Tensor>>>)> {
        let (_, c, _, _) = x.dims4("transformer_block")?;
        if c != self.c1 {
            return Err(Error::shape("transformer_block", format!("expected {} channels, got {c}", self.c1)));
        }
        let x = match &self.stem {
            Some(stem) => stem.forward(x)?,
            None => x.clone(),
        };
        let (n, c, h, w) = x.dims4("transformer_block")?;
        let len = h * w;
        let mut out = Tensor::zeros([n, c, h, w]);
        let mut all_weights = Vec::with_capacity(n);
        for b in 0..n {
            let mut seq = vec![0.0f32; len * c];
            for ch in 0..c {
                for (l, &v) in x.plane(b, ch).iter().enumerate() {
                    seq[l * c + ch] = v;
                }
            }
            let seq = Tensor::new([len, c], seq)?;
            let mut p = seq.add(&self.position.forward(&seq)?)?;
            let mut per_layer = Vec::with_capacity(self.layers.len());
            for layer in &self.layers {
                let (next, weights) = layer.forward_with_weights(&p)?;
                p = next;
                per_layer.push(weights);
            }
            let dst = &mut out.data_mut()[b * c * len..(b + 1) * c * len];
            for l in 0..len {
                for ch in 0..c {
                    dst[ch * len + l] = p.data()[l * c + ch];
                }
            }
            all_weights.push(per_layer);
        }
        Ok((out, all_weights))
    }
}

impl Block for TransformerBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with_weights(x).map(|(y, _)| y)
    }

    fn out_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        if input.c != self.c1 {
            return Err(Error::shape("transformer_block", format!("expected {} channels, got {}", self.c1, input.c)));
        }
        Ok(FeatureShape::new(self.c2, input.h, input.w))
    }

    fn declared_params(&self, counting: BnCounting) -> u64 {
        count::transformer_block(self.c1, self.c2, self.layers.len(), counting)
    }

    fn macs(&self, input: FeatureShape) -> u64 {
        let len = input.area();
        let stem = self.stem.as_ref().map_or(0, |s| s.macs(input));
        let c = self.c2 as u64;
        stem + len as u64 * c * c + self.layers.iter().map(|l| l.macs(len)).sum::<u64>()
    }

    fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        if let Some(stem) = &self.stem {
            stem.visit_params(f);
        }
        self.position.visit(f);
        for layer in &self.layers {
            layer.visit(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        if let Some(stem) = &mut self.stem {
            stem.visit_params_mut(f);
        }
        self.position.visit_mut(f);
        for layer in &mut self.layers {
            layer.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::enumerated_params;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rejects_indivisible_heads() {
        let mut init = ParamInit::new(0);
        assert!(TransformerBlock::new(8, 10, 4, 1, &mut init).is_err());
        assert!(TransformerBlock::new(8, 8, 3, 1, &mut init).is_err());
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut init = ParamInit::new(3);
        let mha = MultiHeadAttention::new(8, 4, &mut init).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn([1, 8], |_| rng.gen_range(-1.0f32..1.0));
        let (out, weights) = mha.forward_with_weights(&x, &x, &x).unwrap();
        assert!(weights.iter().all(|w| w.data() == [1.0]));
        // With one token the output is out_proj(value projection).
        let wv = rows(&mha.in_proj_weight, 16, 8);
        let bv = Tensor::new([8], mha.in_proj_bias.data()[16..24].to_vec()).unwrap();
        let v = kernels::linear(&x, &wv, Some(&bv)).unwrap();
        let want = mha.out_proj.forward(&v).unwrap();
        for (a, b) in out.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn preserves_shape_and_rows_are_distributions() {
        let mut init = ParamInit::new(5);
        let block = TransformerBlock::new(16, 16, 4, 2, &mut init).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::from_fn([2, 16, 3, 4], |_| rng.gen_range(-2.0f32..2.0));
        let (y, weights) = block.forward_with_weights(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(weights.len(), 2);
        for per_image in &weights {
            for per_layer in per_image {
                assert_eq!(per_layer.len(), 4);
                for w in per_layer {
                    assert_eq!(w.shape(), &[12, 12]);
                    for row in w.data().chunks(12) {
                        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    /// `W·x (+ b)` in f64 with explicit loops.
    fn lin64(w: &Tensor, b: Option<&Tensor>, x: &[f64]) -> Vec<f64> {
        let (dout, din) = (w.shape()[0], w.shape()[1]);
        (0..dout)
            .map(|o| {
                let acc: f64 = (0..din).map(|i| w.data()[o * din + i] as f64 * x[i]).sum();
                acc + b.map_or(0.0, |b| b.data()[o] as f64)
            })
            .collect()
    }

    #[test]
    fn matches_hand_composed_oracle() {
        let (c, heads, len) = (8, 4, 4);
        let mut init = ParamInit::new(17);
        let block = TransformerBlock::new(c, c, heads, 1, &mut init).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_fn([1, c, 2, 2], |_| rng.gen_range(-1.0f32..1.0));
        let got = block.forward(&x).unwrap();

        let tokens: Vec<Vec<f64>> = (0..len).map(|l| (0..c).map(|ch| x.data()[ch * len + l] as f64).collect()).collect();
        let p: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| {
                let pos = lin64(&block.position.weight, block.position.bias.as_ref(), t);
                t.iter().zip(pos).map(|(a, b)| a + b).collect()
            })
            .collect();
        let layer = &block.layers[0];
        let mha = &layer.attn;
        let packed = |i: usize| (rows(&mha.in_proj_weight, i * c, c), Tensor::new([c], mha.in_proj_bias.data()[i * c..(i + 1) * c].to_vec()).unwrap());
        let (wq, bq) = packed(0);
        let (wk, bk) = packed(1);
        let (wv, bv) = packed(2);
        let qs: Vec<Vec<f64>> = p.iter().map(|t| lin64(&wq, Some(&bq), &lin64(&layer.q.weight, None, t))).collect();
        let ks: Vec<Vec<f64>> = p.iter().map(|t| lin64(&wk, Some(&bk), &lin64(&layer.k.weight, None, t))).collect();
        let vs: Vec<Vec<f64>> = p.iter().map(|t| lin64(&wv, Some(&bv), &lin64(&layer.v.weight, None, t))).collect();
        let d = c / heads;
        let mut merged = vec![vec![0.0; c]; len];
        for h in 0..heads {
            for i in 0..len {
                let scores: Vec<f64> = (0..len)
                    .map(|j| (0..d).map(|e| qs[i][h * d + e] * ks[j][h * d + e]).sum::<f64>() / (d as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                for j in 0..len {
                    let a = (scores[j] - m).exp() / z;
                    for e in 0..d {
                        merged[i][h * d + e] += a * vs[j][h * d + e];
                    }
                }
            }
        }
        for l in 0..len {
            let attn = lin64(&mha.out_proj.weight, mha.out_proj.bias.as_ref(), &merged[l]);
            let x1: Vec<f64> = attn.iter().zip(&p[l]).map(|(a, b)| a + b).collect();
            let mlp = lin64(&layer.fc2.weight, None, &lin64(&layer.fc1.weight, None, &x1));
            for ch in 0..c {
                let want = mlp[ch] + x1[ch];
                let have = got.data()[ch * len + l] as f64;
                assert!((want - have).abs() < 1e-5, "token {l} channel {ch}: {have} vs {want}");
            }
        }
    }

    #[test]
    fn counts_agree() {
        let mut init = ParamInit::new(0);
        for (c1, c2) in [(16, 16), (8, 16)] {
            let b = TransformerBlock::new(c1, c2, 4, 2, &mut init).unwrap();
            for counting in [BnCounting::Folded, BnCounting::Affine] {
                assert_eq!(b.declared_params(counting), enumerated_params(&b, counting));
            }
        }
    }
}
