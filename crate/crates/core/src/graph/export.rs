use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pgm::{self, GrayImage};
use crate::tensor::Tensor;

use super::model::ModelGraph;

/// Min-max normalises one feature plane to 0..=255. A constant plane maps to
/// all zeros.
pub fn plane_to_gray(plane: &[f32], width: usize, height: usize) -> GrayImage {
    let (lo, hi) = plane
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let pixels = plane
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    GrayImage { width, height, pixels }
}

/// Writes every channel of the first image in `features` (NCHW) as
/// `layer<layer>_ch<k>.pgm` under `dir`.
pub fn write_feature_maps(features: &Tensor, layer: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let (_, c, h, w) = features.dims4("export_feature_maps")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..c)
        .map(|k| {
            let path = dir.join(format!("layer{layer}_ch{k}.pgm"));
            pgm::write(&path, &plane_to_gray(features.plane(0, k), w, h))?;
            Ok(path)
        })
        .collect()
}

/// Runs `x` through `graph` and dumps layer `layer`'s activation maps.
pub fn export_feature_maps(graph: &ModelGraph, x: &Tensor, layer: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let (_, captured) = graph.forward_capture(x, layer)?;
    write_feature_maps(&captured, layer, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalisation_spans_full_range() {
        let g = plane_to_gray(&[-1.0, 0.0, 1.0, 3.0], 2, 2);
        assert_eq!(g.pixels, vec![0, 64, 128, 255]);
        let flat = plane_to_gray(&[2.5; 4], 2, 2);
        assert_eq!(flat.pixels, vec![0; 4]);
    }
}
