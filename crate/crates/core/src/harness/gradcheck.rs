use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{bifpn_fuse, bifpn_fuse_grad, FusionWeights, MultiHeadAttention, ParamInit};
use crate::error::Result;
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted relative gradient error.
pub const GRAD_TOLERANCE: f64 = 1e-6;
/// Lower bound on the relative-error denominator.
pub const GRAD_REL_FLOOR: f64 = 1e-3;
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
const FUSION_EPS: f64 = 1e-4;

/// One random fusion instance and its worst gradient component.
#[derive(Clone, Debug, PartialEq)]
pub struct GradTrial {
    pub index: usize,
    pub weights: Vec<f64>,
    pub input_shape: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub worst_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSummary {
    pub seed: u64,
    pub trials: usize,
    pub worst_grad: GradTrial,
    pub attention_rows: usize,
    pub worst_row_sum_err: f64,
}

impl GradcheckSummary {
    pub fn grad_ok(&self) -> bool {
        self.worst_grad.worst_rel_err < GRAD_TOLERANCE
    }

    pub fn rows_ok(&self) -> bool {
        self.worst_row_sum_err <= ROW_SUM_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.grad_ok() && self.rows_ok()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let status = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "gradcheck: {} trials, seed {}", self.trials, self.seed);
        let _ = writeln!(
            out,
            "fusion gradient: max relative error {:.3e} (tolerance {GRAD_TOLERANCE:e}) {}",
            self.worst_grad.worst_rel_err,
            status(self.grad_ok())
        );
        let _ = writeln!(
            out,
            "attention rows: {} rows, max |sum - 1| {:.3e} (tolerance {ROW_SUM_TOLERANCE:e}) {}",
            self.attention_rows,
            self.worst_row_sum_err,
            status(self.rows_ok())
        );
        if !self.grad_ok() {
            let t = &self.worst_grad;
            let _ = writeln!(out, "worst trial #{}: inputs {:?}, weights {:?}", t.index, t.input_shape, t.weights);
            let _ = writeln!(out, "  analytic {:?}", t.analytic);
            let _ = writeln!(out, "  numeric  {:?}", t.numeric);
        }
        out
    }
}

fn fusion_trial(index: usize, rng: &mut ChaCha8Rng) -> Result<GradTrial> {
    let n = rng.gen_range(2..=4);
    let shape = vec![1, rng.gen_range(1..=4), rng.gen_range(1..=5), rng.gen_range(1..=5)];
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let w = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.15) {
                -w
            } else {
                w
            }
        })
        .collect();
    let inputs: Vec<Tensor<f64>> = (0..n)
        .map(|_| Tensor::from_fn(shape.clone(), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let upstream = Tensor::from_fn(shape.clone(), |_| rng.gen_range(-1.0..1.0));

    let ws = FusionWeights::new(weights.clone(), FUSION_EPS)?;
    let analytic = bifpn_fuse_grad(&ws, &refs, &upstream)?;
    // scalar objective <fuse(w), upstream>
    let objective = |w: &[f64]| -> Result<f64> {
        let out = bifpn_fuse(&FusionWeights::new(w.to_vec(), FUSION_EPS)?, &refs)?;
        Ok(out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
    };
    let mut numeric = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for k in 0..n {
        let mut plus = weights.clone();
        plus[k] += FD_STEP;
        let mut minus = weights.clone();
        minus[k] -= FD_STEP;
        let fd = (objective(&plus)? - objective(&minus)?) / (2.0 * FD_STEP);
        let denom = analytic[k].abs().max(fd.abs()).max(GRAD_REL_FLOOR);
        worst = worst.max((analytic[k] - fd).abs() / denom);
        numeric.push(fd);
    }
    Ok(GradTrial {
        index,
        weights,
        input_shape: shape,
        analytic,
        numeric,
        worst_rel_err: worst,
    })
}

/// Largest `|Σ row − 1|` over every attention row of one random instance.
fn attention_trial(index: usize, seed: u64, rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let heads = [1, 2, 4][rng.gen_range(0..3)];
    let c = heads * rng.gen_range(1..=4);
    let len = rng.gen_range(1..=12);
    let mha = MultiHeadAttention::new(c, heads, &mut ParamInit::for_layer(seed, index))?;
    let scale = rng.gen_range(0.5..8.0f32);
    let x = Tensor::from_fn([len, c], |_| rng.gen_range(-scale..scale));
    let (_, weights) = mha.forward_with_weights(&x, &x, &x)?;
    let mut rows = 0;
    let mut worst = 0.0f64;
    for w in &weights {
        for row in w.data().chunks(len) {
            rows += 1;
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok((rows, worst))
}

/// Checks the fusion-weight gradient against central differences (f64) and
/// attention rows against the unit-sum property, `trials` times each.
pub fn run_gradcheck(trials: usize, seed: u64) -> Result<GradcheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_grad: Option<GradTrial> = None;
    let mut attention_rows = 0;
    let mut worst_row_sum_err = 0.0f64;
    for i in 0..trials {
        let t = fusion_trial(i, &mut rng)?;
        if worst_grad.as_ref().is_none_or(|w| t.worst_rel_err > w.worst_rel_err) {
            worst_grad = Some(t);
        }
        let (rows, err) = attention_trial(i, seed, &mut rng)?;
        attention_rows += rows;
        worst_row_sum_err = worst_row_sum_err.max(err);
    }
    Ok(GradcheckSummary {
        seed,
        trials,
        worst_grad: worst_grad.unwrap_or(GradTrial {
            index: 0,
            weights: Vec::new(),
            input_shape: Vec::new(),
            analytic: Vec::new(),
            numeric: Vec::new(),
            worst_rel_err: 0.0,
        }),
        attention_rows,
        worst_row_sum_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes_and_is_reproducible() {
        let a = run_gradcheck(100, 0).unwrap();
        assert!(a.passed(), "{}", a.render());
        assert_eq!(a.render(), run_gradcheck(100, 0).unwrap().render());
    }
}
