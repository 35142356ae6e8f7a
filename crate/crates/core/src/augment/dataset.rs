use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

use super::image_io::{read_image, read_labels, write_image, write_labels, ImageFormat};
use super::Pipeline;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub source: String,
    pub output: String,
    pub labels: String,
    pub ops: Vec<String>,
    /// Seed of this image's private RNG stream.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub pipeline: String,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    /// Inputs that could not be processed.
    pub skipped: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Per-image seed: FNV-1a over the run seed and the image's file name.
pub fn image_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(name.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn process(src: &Path, name: &str, out_dir: &Path, pipeline: &Pipeline, seed: u64) -> Result<ManifestEntry> {
    let img = read_image(src).map_err(|e| match e {
        Error::Io { path, source } => Error::Image {
            path,
            message: source.to_string(),
        },
        other => other,
    })?;
    let labels = read_labels(&src.with_extension("txt"))?;
    let img_seed = image_seed(seed, name);
    let mut rng = ChaCha8Rng::seed_from_u64(img_seed);
    let (out_img, out_labels, ops) = pipeline.apply(&img, &labels, &mut rng)?;
    let out = out_dir.join(name);
    let label_out = out.with_extension("txt");
    write_image(&out, &out_img)?;
    write_labels(&label_out, &out_labels)?;
    Ok(ManifestEntry {
        source: src.display().to_string(),
        output: out.display().to_string(),
        labels: label_out.display().to_string(),
        ops,
        seed: img_seed,
    })
}

/// Augments every PNG/PGM image in `in_dir` (labels in a sibling
/// `<stem>.txt`) into `out_dir`, keeping file names, and writes
/// `manifest.json` there.
///
/// Images that fail to load are skipped with a warning.
pub fn augment_dataset(in_dir: &Path, out_dir: &Path, pipeline: &Pipeline, seed: u64) -> Result<Manifest> {
    let mut inputs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(in_dir).map_err(|e| Error::io(in_dir, e))? {
        let path = entry.map_err(|e| Error::io(in_dir, e))?.path();
        if path.is_file() && ImageFormat::from_path(&path).is_some() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                inputs.push((name.to_string(), path.clone()));
            }
        }
    }
    inputs.sort();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let results = par::map_slice(&inputs, |(name, path)| process(path, name, out_dir, pipeline, seed));
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for ((_, path), r) in inputs.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e @ (Error::Image { .. } | Error::Parse { .. })) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(path.display().to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let manifest = Manifest {
        pipeline: pipeline.to_string(),
        seed,
        entries,
        skipped,
    };
    let manifest_path = out_dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}
