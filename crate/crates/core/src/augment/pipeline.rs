use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

use super::{adjust_brightness_contrast, hflip, random_erase, vflip, EraseParams, FillPolicy, ImageBuffer, Label};

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Horizontal flip applied with probability `p`.
    HFlip { p: f64 },
    VFlip { p: f64 },
    BrightnessContrast { alpha: f64, beta: f64 },
    Erase(EraseParams),
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::HFlip { p } => write!(f, "hflip(p={p})"),
            Op::VFlip { p } => write!(f, "vflip(p={p})"),
            Op::BrightnessContrast { alpha, beta } => write!(f, "brightness(alpha={alpha},beta={beta})"),
            Op::Erase(e) => {
                write!(f, "erase(p={},sl={},sh={},r1={},attempts={},fill=", e.p, e.sl, e.sh, e.r1, e.max_attempts)?;
                match e.fill {
                    FillPolicy::Noise => write!(f, "noise)"),
                    FillPolicy::Constant(v) => write!(f, "{v})"),
                }
            }
        }
    }
}

/// Ordered list of augmentation ops, parsed from text such as
/// `hflip,erase(p=0.5,sl=0.02,sh=0.4,r1=0.3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub ops: Vec<Op>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::invalid("pipeline", detail)
}

/// Splits on commas that are not inside parentheses.
fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(bad(format!("unbalanced ')' in {s:?}")));
                }
            }
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(bad(format!("unbalanced '(' in {s:?}")));
    }
    parts.push(s[start..].trim());
    Ok(parts)
}

struct Params<'a> {
    op: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(op: &'a str, body: &'a str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("{op}: expected key=value, got {item:?}")))?;
            pairs.push((k.trim(), v.trim()));
        }
        Ok(Params { op, pairs })
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(bad(format!("{}: unknown parameter {k:?} (allowed: {})", self.op, allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn num(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{}: {key}={v:?} is not a number", self.op))),
        }
    }

    fn prob(&self, key: &str, default: f64) -> Result<f64> {
        let p = self.num(key, default)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("{}: {key}={p} outside [0, 1]", self.op)));
        }
        Ok(p)
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for part in split_top_level(s)? {
            if part.is_empty() {
                return Err(bad(format!("empty op in {s:?}")));
            }
            let (name, body) = match part.find('(') {
                Some(i) => {
                    let body = part[i + 1..]
                        .strip_suffix(')')
                        .ok_or_else(|| bad(format!("{part:?}: trailing text after ')'")))?;
                    (part[..i].trim(), body)
                }
                None => (part, ""),
            };
            let params = Params::parse(name, body)?;
            let op = match name {
                "hflip" => {
                    params.check_keys(&["p"])?;
                    Op::HFlip { p: params.prob("p", 1.0)? }
                }
                "vflip" => {
                    params.check_keys(&["p"])?;
                    Op::VFlip { p: params.prob("p", 1.0)? }
                }
                "brightness" => {
                    params.check_keys(&["alpha", "beta"])?;
                    let alpha = params.num("alpha", 1.0)?;
                    if alpha <= 0.0 {
                        return Err(bad(format!("brightness: alpha={alpha} must be positive")));
                    }
                    Op::BrightnessContrast {
                        alpha,
                        beta: params.num("beta", 0.0)?,
                    }
                }
                "erase" => {
                    params.check_keys(&["p", "sl", "sh", "r1", "attempts", "fill"])?;
                    let d = EraseParams::default();
                    let fill = match params.raw("fill") {
                        None | Some("noise") => FillPolicy::Noise,
                        Some(v) => FillPolicy::Constant(
                            v.parse()
                                .map_err(|_| bad(format!("erase: fill={v:?} must be `noise` or 0..=255")))?,
                        ),
                    };
                    let attempts = params.num("attempts", d.max_attempts as f64)?;
                    if attempts < 1.0 || attempts.fract() != 0.0 {
                        return Err(bad(format!("erase: attempts={attempts} must be a positive integer")));
                    }
                    let e = EraseParams {
                        p: params.prob("p", d.p)?,
                        sl: params.num("sl", d.sl)?,
                        sh: params.num("sh", d.sh)?,
                        r1: params.num("r1", d.r1)?,
                        max_attempts: attempts as usize,
                        fill,
                    };
                    e.validate()?;
                    Op::Erase(e)
                }
                other => return Err(bad(format!("unknown op {other:?} (expected hflip, vflip, brightness, erase)"))),
            };
            ops.push(op);
        }
        Ok(Pipeline { ops })
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl Pipeline {
    /// Runs every op in order. Returns the new image and labels plus a log
    /// of the ops that actually changed something.
    pub fn apply<R: Rng>(&self, img: &ImageBuffer, labels: &[Label], rng: &mut R) -> Result<(ImageBuffer, Vec<Label>, Vec<String>)> {
        let mut img = img.clone();
        let mut labels = labels.to_vec();
        let mut log = Vec::new();
        for op in &self.ops {
            match op {
                Op::HFlip { p } | Op::VFlip { p } => {
                    if rng.gen_bool(*p) {
                        let flip = if matches!(op, Op::HFlip { .. }) { hflip } else { vflip };
                        (img, labels) = flip(&img, &labels);
                        log.push(if matches!(op, Op::HFlip { .. }) { "hflip" } else { "vflip" }.to_string());
                    }
                }
                Op::BrightnessContrast { alpha, beta } => {
                    img = adjust_brightness_contrast(&img, *alpha, *beta)?;
                    log.push(format!("brightness(alpha={alpha},beta={beta})"));
                }
                Op::Erase(params) => {
                    if let Some(r) = random_erase(&mut img, params, rng)? {
                        log.push(format!("erase(x={},y={},w={},h={})", r.x, r.y, r.w, r.h));
                    }
                }
            }
        }
        Ok((img, labels, log))
    }
}
