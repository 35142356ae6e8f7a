use crate::error::{Error, Result};
use crate::kernels::{self, Conv2dSpec};
use crate::tensor::Tensor;

use super::{count, BnCounting, FeatureShape, ParamInit, ParamRole};

/// YOLOv5 P3/P4/P5 anchors in pixels, `(w, h)` pairs per scale.
pub const DEFAULT_ANCHORS: [[(f32, f32); 3]; 3] = [
    [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
    [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
];

pub const DETECT_STRIDES: [usize; 3] = [8, 16, 32];

/// Per-scale 1×1 conv (with bias) to `anchors · (nc + 5)` channels.
#[derive(Clone, Debug)]
pub struct Detect {
    pub nc: usize,
    pub anchors: [[(f32, f32); 3]; 3],
    pub channels: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Detect {
    pub fn new(nc: usize, channels: &[usize], init: &mut ParamInit) -> Result<Self> {
        if channels.len() != 3 {
            return Err(Error::invalid("detect", format!("expected 3 input scales, got {}", channels.len())));
        }
        if nc == 0 {
            return Err(Error::invalid("detect", "class count must be positive"));
        }
        let out = 3 * (nc + 5);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &ch in channels {
            weights.push(init.uniform([out, ch, 1, 1]));
            biases.push(init.uniform([out]));
        }
        Ok(Detect {
            nc,
            anchors: DEFAULT_ANCHORS,
            channels: channels.to_vec(),
            weights,
            biases,
        })
    }

    pub fn outputs_per_scale(&self) -> usize {
        3 * (self.nc + 5)
    }

    pub fn forward(&self, features: &[&Tensor]) -> Result<Vec<Tensor>> {
        if features.len() != 3 {
            return Err(Error::invalid("detect", format!("expected 3 feature maps, got {}", features.len())));
        }
        features
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(x, (w, b))| kernels::conv2d(x, w, Some(b), Conv2dSpec::default()))
            .collect()
    }

    pub fn out_shapes(&self, inputs: &[FeatureShape]) -> Result<Vec<FeatureShape>> {
        if inputs.len() != 3 {
            return Err(Error::invalid("detect", format!("expected 3 input scales, got {}", inputs.len())));
        }
        inputs
            .iter()
            .zip(&self.channels)
            .map(|(s, &ch)| {
                if s.c != ch {
                    Err(Error::shape("detect", format!("scale input has {} channels, expected {ch}", s.c)))
                } else {
                    Ok(FeatureShape::new(self.outputs_per_scale(), s.h, s.w))
                }
            })
            .collect()
    }

    pub fn declared_params(&self, _counting: BnCounting) -> u64 {
        count::detect(self.nc, 3, &self.channels)
    }

    pub fn macs(&self, inputs: &[FeatureShape]) -> u64 {
        inputs
            .iter()
            .map(|s| (s.area() * s.c * self.outputs_per_scale()) as u64)
            .sum()
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            f(ParamRole::Weight, w);
            f(ParamRole::Bias, b);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            f(ParamRole::Weight, w);
            f(ParamRole::Bias, b);
        }
    }
}

/// A decoded prediction in input-image pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedBox {
    pub image: usize,
    pub scale: usize,
    pub class_id: usize,
    pub confidence: f32,
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Decodes raw head outputs:
/// `xy = (2σ(t) − 0.5 + grid)·stride`, `wh = (2σ(t))²·anchor`,
/// `conf = σ(obj)·σ(cls)` for the best class. Boxes below `conf_thr` are dropped.
pub fn decode(raw: &[Tensor], nc: usize, anchors: &[[(f32, f32); 3]; 3], conf_thr: f32) -> Result<Vec<DecodedBox>> {
    if raw.len() != 3 {
        return Err(Error::invalid("decode", format!("expected 3 scales, got {}", raw.len())));
    }
    let no = nc + 5;
    let mut out = Vec::new();
    for (scale, t) in raw.iter().enumerate() {
        let (n, c, gh, gw) = t.dims4("decode")?;
        if c != 3 * no {
            return Err(Error::shape("decode", format!("scale {scale} has {c} channels, expected {}", 3 * no)));
        }
        let stride = DETECT_STRIDES[scale] as f32;
        for b in 0..n {
            for (a, &(aw, ah)) in anchors[scale].iter().enumerate() {
                let at = |j: usize, y: usize, x: usize| t.at4(b, a * no + j, y, x);
                for y in 0..gh {
                    for x in 0..gw {
                        let obj = sigmoid(at(4, y, x));
                        let (class_id, cls) = (0..nc)
                            .map(|k| (k, sigmoid(at(5 + k, y, x))))
                            .fold((0, f32::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                        let confidence = obj * cls;
                        if confidence < conf_thr {
                            continue;
                        }
                        let sw = 2.0 * sigmoid(at(2, y, x));
                        let sh = 2.0 * sigmoid(at(3, y, x));
                        out.push(DecodedBox {
                            image: b,
                            scale,
                            class_id,
                            confidence,
                            cx: (2.0 * sigmoid(at(0, y, x)) - 0.5 + x as f32) * stride,
                            cy: (2.0 * sigmoid(at(1, y, x)) - 0.5 + y as f32) * stride,
                            w: sw * sw * aw,
                            h: sh * sh * ah,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn head_params() {
        let mut init = ParamInit::new(0);
        let d = Detect::new(1, &[128, 256, 512], &mut init).unwrap();
        assert_eq!(d.declared_params(BnCounting::Folded), 16_182);
        let mut n = 0;
        d.visit_params(&mut |_, t| n += t.numel() as u64);
        assert_eq!(n, 16_182);
        assert!(Detect::new(1, &[128, 256], &mut init).is_err());
    }

    #[test]
    fn zero_logits_decode_to_cell_centres_and_anchor_sizes() {
        let raw: Vec<Tensor> = [4, 2, 1].iter().map(|&g| Tensor::zeros([1, 18, g, g])).collect();
        let boxes = decode(&raw, 1, &DEFAULT_ANCHORS, 0.0).unwrap();
        assert_eq!(boxes.len(), 3 * (16 + 4 + 1));
        let first = boxes[0];
        assert_eq!((first.cx, first.cy), (4.0, 4.0));
        assert_eq!((first.w, first.h), (10.0, 13.0));
        assert_eq!(first.confidence, 0.25);
        let last = boxes.last().unwrap();
        assert_eq!((last.cx, last.cy), (16.0, 16.0));
        assert_eq!((last.w, last.h), (373.0, 326.0));
    }

    #[test]
    fn decoded_centres_stay_in_range() {
        let img = 64.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<Tensor> = [8, 4, 2]
            .iter()
            .map(|&g| Tensor::from_fn([2, 18, g, g], |_| rng.gen_range(-30.0f32..30.0)))
            .collect();
        let boxes = decode(&raw, 1, &DEFAULT_ANCHORS, 0.0).unwrap();
        assert_eq!(boxes.len(), 2 * 3 * (64 + 16 + 4));
        for b in boxes {
            let stride = DETECT_STRIDES[b.scale] as f32;
            for v in [b.cx, b.cy] {
                assert!(v >= -0.5 * stride && v < img + 1.5 * stride);
            }
        }
    }
}
