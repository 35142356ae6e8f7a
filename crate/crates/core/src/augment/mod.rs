//! Label-consistent image augmentation for offline dataset expansion.

mod dataset;
mod image_io;
mod pipeline;

pub use dataset::{augment_dataset, image_seed, Manifest, ManifestEntry, MANIFEST_NAME};
pub use image_io::{read_image, read_labels, write_image, write_labels, ImageFormat};
pub use pipeline::{Op, Pipeline};

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::BBox;

/// 8-bit image, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("image", format!("{channels} channels, expected 1 or 3")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image", "empty image"));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::invalid(
                "image",
                format!("{} bytes for a {width}x{height}x{channels} image", pixels.len()),
            ));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    fn row_len(&self) -> usize {
        self.width * self.channels
    }

    /// Channel values of the pixel at `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }
}

/// One YOLO label line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Label {
    pub class_id: usize,
    pub bbox: BBox,
}

pub fn hflip(img: &ImageBuffer, labels: &[Label]) -> (ImageBuffer, Vec<Label>) {
    let mut out = img.clone();
    let c = img.channels;
    for (src, dst) in img.pixels.chunks(img.row_len()).zip(out.pixels.chunks_mut(img.row_len())) {
        for x in 0..img.width {
            let mirrored = img.width - 1 - x;
            dst[x * c..(x + 1) * c].copy_from_slice(&src[mirrored * c..(mirrored + 1) * c]);
        }
    }
    let labels = labels
        .iter()
        .map(|l| Label {
            bbox: BBox { cx: 1.0 - l.bbox.cx, ..l.bbox },
            ..*l
        })
        .collect();
    (out, labels)
}

pub fn vflip(img: &ImageBuffer, labels: &[Label]) -> (ImageBuffer, Vec<Label>) {
    let mut out = img.clone();
    let row = img.row_len();
    for (y, dst) in out.pixels.chunks_mut(row).enumerate() {
        let src = img.height - 1 - y;
        dst.copy_from_slice(&img.pixels[src * row..(src + 1) * row]);
    }
    let labels = labels
        .iter()
        .map(|l| Label {
            bbox: BBox { cy: 1.0 - l.bbox.cy, ..l.bbox },
            ..*l
        })
        .collect();
    (out, labels)
}

/// `pixel' = clamp(round(alpha · pixel + beta), 0, 255)`.
pub fn adjust_brightness_contrast(img: &ImageBuffer, alpha: f64, beta: f64) -> Result<ImageBuffer> {
    if !(alpha > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::invalid(
            "brightness/contrast",
            format!("need finite alpha > 0 and finite beta, got alpha={alpha} beta={beta}"),
        ));
    }
    let mut out = img.clone();
    for p in &mut out.pixels {
        *p = (alpha * *p as f64 + beta).round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillPolicy {
    /// Independent uniform value in `0..=255` per covered byte.
    Noise,
    Constant(u8),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EraseParams {
    pub p: f64,
    /// Area-fraction bounds of the erased rectangle.
    pub sl: f64,
    pub sh: f64,
    /// Aspect lower bound; the upper bound is `1 / r1`.
    pub r1: f64,
    pub max_attempts: usize,
    pub fill: FillPolicy,
}

impl Default for EraseParams {
    fn default() -> Self {
        EraseParams {
            p: 0.5,
            sl: 0.02,
            sh: 0.4,
            r1: 0.3,
            max_attempts: 100,
            fill: FillPolicy::Noise,
        }
    }
}

impl EraseParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p)
            && self.sl > 0.0
            && self.sl <= self.sh
            && self.sh < 1.0
            && self.r1 > 0.0
            && self.r1 <= 1.0;
        if !ok {
            return Err(Error::invalid(
                "random_erase",
                format!(
                    "need 0 ≤ p ≤ 1, 0 < sl ≤ sh < 1 and 0 < r1 ≤ 1; got p={} sl={} sh={} r1={}",
                    self.p, self.sl, self.sh, self.r1
                ),
            ));
        }
        Ok(())
    }
}

/// Pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EraseRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Random erasing. Returns the erased rectangle, or `None` when the image was
/// left untouched (the coin came up tails or no sampled rectangle fit).
///
/// Each attempt samples a target area `S ~ U(sl, sh)·W·H` and aspect
/// `r ~ U(r1, 1/r1)` and rounds `√(S·r) × √(S/r)` to whole pixels. The
/// attempt is kept only if the rectangle fits inside the image and its
/// rounded area fraction still lies in `[sl, sh]`.
pub fn random_erase<R: Rng>(img: &mut ImageBuffer, params: &EraseParams, rng: &mut R) -> Result<Option<EraseRect>> {
    params.validate()?;
    if !rng.gen_bool(params.p) {
        return Ok(None);
    }
    let (w_img, h_img) = (img.width, img.height);
    let total = (w_img * h_img) as f64;
    for _ in 0..params.max_attempts {
        let target = rng.gen_range(params.sl..=params.sh) * total;
        let aspect = rng.gen_range(params.r1..=1.0 / params.r1);
        let h = (target * aspect).sqrt().round() as usize;
        let w = (target / aspect).sqrt().round() as usize;
        if h == 0 || w == 0 || h >= h_img || w >= w_img {
            continue;
        }
        let fraction = (w * h) as f64 / total;
        if fraction < params.sl || fraction > params.sh {
            continue;
        }
        let x = rng.gen_range(0..=w_img - w);
        let y = rng.gen_range(0..=h_img - h);
        let c = img.channels;
        for row in y..y + h {
            let start = (row * w_img + x) * c;
            let span = &mut img.pixels[start..start + w * c];
            match params.fill {
                FillPolicy::Noise => span.iter_mut().for_each(|p| *p = rng.gen()),
                FillPolicy::Constant(v) => span.fill(v),
            }
        }
        return Ok(Some(EraseRect { x, y, w, h }));
    }
    Ok(None)
}
