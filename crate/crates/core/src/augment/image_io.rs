use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::BBox;
use crate::pgm::{self, GrayImage};

use super::{ImageBuffer, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Pgm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(ImageFormat::Png),
            "pgm" => Some(ImageFormat::Pgm),
            _ => None,
        }
    }
}

fn image_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads a PNG (as 8-bit gray or RGB) or a binary PGM.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    match ImageFormat::from_path(path) {
        Some(ImageFormat::Pgm) => {
            let g = pgm::read(path)?;
            ImageBuffer::new(g.width, g.height, 1, g.pixels)
        }
        Some(ImageFormat::Png) => {
            let img = image::open(path).map_err(|e| image_err(path, e))?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let gray = matches!(img.color(), image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16);
            if gray {
                ImageBuffer::new(w, h, 1, img.into_luma8().into_raw())
            } else {
                ImageBuffer::new(w, h, 3, img.into_rgb8().into_raw())
            }
        }
        None => Err(image_err(path, "unsupported extension (expected .png or .pgm)")),
    }
}

pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    match ImageFormat::from_path(path) {
        Some(ImageFormat::Pgm) => {
            if img.channels() != 1 {
                return Err(image_err(path, "PGM output needs a single-channel image"));
            }
            pgm::write(
                path,
                &GrayImage {
                    width: img.width(),
                    height: img.height(),
                    pixels: img.pixels().to_vec(),
                },
            )
        }
        Some(ImageFormat::Png) => {
            let color = if img.channels() == 1 {
                image::ExtendedColorType::L8
            } else {
                image::ExtendedColorType::Rgb8
            };
            image::save_buffer(path, img.pixels(), img.width() as u32, img.height() as u32, color)
                .map_err(|e| image_err(path, e))
        }
        None => Err(image_err(path, "unsupported extension (expected .png or .pgm)")),
    }
}

/// Reads YOLO `class cx cy w h` lines. A missing file means no boxes.
pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    Ok(crate::metrics::parse_ground_truth(&text, stem, path)?
        .into_iter()
        .map(|g| Label {
            class_id: g.class_id,
            bbox: g.bbox,
        })
        .collect())
}

pub fn write_labels(path: &Path, labels: &[Label]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        let BBox { cx, cy, w, h } = l.bbox;
        text.push_str(&format!("{} {cx:.6} {cy:.6} {w:.6} {h:.6}\n", l.class_id));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
