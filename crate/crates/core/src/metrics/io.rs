//! One label file per image: `<image>.txt` holding `class cx cy w h` lines
//! for ground truth or `class confidence cx cy w h` lines for detections.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{BBox, Detection, GtBox};

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    }
}

fn fields<'a>(path: &Path, line_no: usize, line: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != want {
        return Err(parse_err(path, line_no, format!("expected {want} fields, found {}", f.len())));
    }
    Ok(f)
}

fn number(path: &Path, line_no: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line_no, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line_no, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

fn class(path: &Path, line_no: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(path, line_no, format!("bad class id {s:?}")))
}

fn bbox(path: &Path, line_no: usize, f: &[&str]) -> Result<BBox> {
    let b = BBox::new(
        number(path, line_no, f[0])?,
        number(path, line_no, f[1])?,
        number(path, line_no, f[2])?,
        number(path, line_no, f[3])?,
    );
    if b.w <= 0.0 || b.h <= 0.0 {
        return Err(parse_err(path, line_no, "box width and height must be positive"));
    }
    Ok(b.clipped())
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_ground_truth(text: &str, image_id: &str, path: &Path) -> Result<Vec<GtBox>> {
    lines(text)
        .map(|(n, l)| {
            let f = fields(path, n, l, 5)?;
            Ok(GtBox {
                image_id: image_id.to_string(),
                class_id: class(path, n, f[0])?,
                bbox: bbox(path, n, &f[1..])?,
            })
        })
        .collect()
}

pub fn parse_detections(text: &str, image_id: &str, path: &Path) -> Result<Vec<Detection>> {
    lines(text)
        .map(|(n, l)| {
            let f = fields(path, n, l, 6)?;
            let confidence = number(path, n, f[1])?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(parse_err(path, n, format!("confidence {confidence} outside [0, 1]")));
            }
            Ok(Detection {
                image_id: image_id.to_string(),
                class_id: class(path, n, f[0])?,
                confidence,
                bbox: bbox(path, n, &f[2..])?,
            })
        })
        .collect()
}

/// Stems of the `*.txt` label files in `dir`, sorted.
pub fn label_stems(dir: &Path) -> Result<Vec<String>> {
    Ok(label_files(dir)?.into_iter().map(|(s, _)| s).collect())
}

/// `*.txt` files in `dir`, sorted by name.
fn label_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load<T>(dir: &Path, parse: impl Fn(&str, &str, &Path) -> Result<Vec<T>>) -> Result<Vec<T>> {
    let mut all = Vec::new();
    for (stem, path) in label_files(dir)? {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        all.extend(parse(&text, &stem, &path)?);
    }
    Ok(all)
}

pub fn load_ground_truth(dir: &Path) -> Result<Vec<GtBox>> {
    load(dir, parse_ground_truth)
}

pub fn load_detections(dir: &Path) -> Result<Vec<Detection>> {
    load(dir, parse_detections)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_clips() {
        let p = Path::new("a.txt");
        let g = parse_ground_truth("0 0.95 0.5 0.2 0.2\n\n", "a", p).unwrap();
        assert_eq!(g.len(), 1);
        let (_, _, x2, _) = g[0].bbox.xyxy();
        assert!((x2 - 1.0).abs() < 1e-12);
        assert!((g[0].bbox.w - 0.15).abs() < 1e-12);
    }

    #[test]
    fn reports_line_numbers() {
        let p = Path::new("b.txt");
        let err = parse_detections("0 0.5 0.5 0.5 0.1 0.1\n0 1.5 0.5 0.5 0.1 0.1\n", "b", p).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_ground_truth("0 0.5 0.5 0 0.1", "b", p).is_err());
        assert!(parse_ground_truth("0 0.5 0.5 0.1", "b", p).is_err());
        assert!(parse_ground_truth("x 0.5 0.5 0.1 0.1", "b", p).is_err());
    }
}
