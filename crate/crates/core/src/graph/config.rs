//! JSON model description.
//!
//! ```json
//! {
//!   "nc": 1,
//!   "layers": [
//!     {"from": [-1], "n": 1, "kind": "Conv", "args": [32, 6, 2, 2]},
//!     {"from": [-1, 6], "kind": "Concat"}
//!   ]
//! }
//! ```
//!
//! `from` entries are either negative offsets relative to the current layer
//! (`-1` is the previous layer, or the input image for layer 0) or absolute
//! indices of earlier layers.

use std::fmt;

use serde::Deserialize;

use crate::blocks::count::C3Kind;
use crate::blocks::TransformerBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum LayerKind {
    Conv,
    GhostConv,
    C3,
    C3Ghost,
    #[serde(rename = "C3TR")]
    C3Tr,
    GhostBottleneck,
    #[serde(rename = "SPPF")]
    Sppf,
    CoordAtt,
    Upsample,
    Concat,
    /// Weighted concat with fast-normalised fusion weights.
    #[serde(rename = "BiFPN")]
    BiFpn,
    /// Weighted sum of same-shaped inputs.
    #[serde(rename = "BiFPNAdd")]
    BiFpnAdd,
    Detect,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "Conv",
            LayerKind::GhostConv => "GhostConv",
            LayerKind::C3 => "C3",
            LayerKind::C3Ghost => "C3Ghost",
            LayerKind::C3Tr => "C3TR",
            LayerKind::GhostBottleneck => "GhostBottleneck",
            LayerKind::Sppf => "SPPF",
            LayerKind::CoordAtt => "CoordAtt",
            LayerKind::Upsample => "Upsample",
            LayerKind::Concat => "Concat",
            LayerKind::BiFpn => "BiFPN",
            LayerKind::BiFpnAdd => "BiFPNAdd",
            LayerKind::Detect => "Detect",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Int(v) => write!(f, "{v}"),
            Arg::Bool(v) => write!(f, "{v}"),
        }
    }
}

/// Where a layer reads one of its inputs from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Input,
    Layer(usize),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input => f.write_str("input"),
            Source::Layer(i) => write!(f, "{i}"),
        }
    }
}

/// Typed layer arguments after validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerOp {
    Conv { c2: usize, k: usize, s: usize, p: Option<usize>, g: usize },
    GhostConv { c2: usize, k: usize, s: usize },
    C3 { c2: usize, kind: C3Kind, shortcut: bool },
    GhostBottleneck { c2: usize, k: usize, s: usize },
    Sppf { c2: usize, k: usize },
    CoordAtt { c2: usize, reduction: usize },
    Upsample { scale: usize },
    Concat,
    WeightedConcat,
    WeightedAdd,
    Detect,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub index: usize,
    pub from: Vec<Source>,
    pub n: usize,
    pub kind: LayerKind,
    pub args: Vec<Arg>,
    pub op: LayerOp,
}

impl LayerSpec {
    pub fn from_label(&self) -> String {
        let parts: Vec<String> = self.from.iter().map(|s| s.to_string()).collect();
        parts.join(",")
    }

    pub fn args_label(&self) -> String {
        let parts: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        format!("[{}]", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Class count declared in the file, if any.
    pub nc: Option<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    nc: Option<usize>,
    layers: Vec<RawLayer>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawFrom {
    One(i64),
    Many(Vec<i64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    from: RawFrom,
    #[serde(default = "one")]
    n: usize,
    kind: LayerKind,
    #[serde(default)]
    args: Vec<Arg>,
}

fn one() -> usize {
    1
}

/// Parses and validates a model description.
///
/// Malformed JSON and unknown layer kinds produce [`Error::ConfigSyntax`] with
/// the offending line; structural problems (bad references, wrong argument
/// types) produce [`Error::Layer`].
pub fn parse_config(text: &str) -> Result<ModelConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::ConfigSyntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if raw.layers.is_empty() {
        return Err(Error::ConfigSyntax {
            line: 1,
            column: 1,
            message: "model has no layers".into(),
        });
    }
    if raw.nc == Some(0) {
        return Err(Error::ConfigSyntax {
            line: 1,
            column: 1,
            message: "nc must be positive".into(),
        });
    }
    let layers = raw
        .layers
        .into_iter()
        .enumerate()
        .map(|(index, l)| resolve_layer(index, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelConfig { nc: raw.nc, layers })
}

fn resolve_layer(index: usize, raw: RawLayer) -> Result<LayerSpec> {
    let from_raw = match raw.from {
        RawFrom::One(f) => vec![f],
        RawFrom::Many(v) => v,
    };
    if from_raw.is_empty() {
        return Err(Error::layer(index, "empty `from` list"));
    }
    let from = from_raw
        .iter()
        .map(|&f| resolve_source(index, f))
        .collect::<Result<Vec<_>>>()?;
    if raw.n == 0 {
        return Err(Error::layer(index, "repeat count `n` must be at least 1"));
    }
    let args = ArgReader {
        index,
        kind: raw.kind,
        args: &raw.args,
    };
    let op = args.op()?;
    let single_input = !matches!(op, LayerOp::Concat | LayerOp::WeightedConcat | LayerOp::WeightedAdd | LayerOp::Detect);
    if single_input && from.len() != 1 {
        return Err(Error::layer(index, format!("{} takes one input, got {}", raw.kind, from.len())));
    }
    if matches!(op, LayerOp::Upsample { .. } | LayerOp::Concat | LayerOp::WeightedConcat | LayerOp::WeightedAdd | LayerOp::Detect)
        && raw.n != 1
    {
        return Err(Error::layer(index, format!("{} cannot be repeated", raw.kind)));
    }
    Ok(LayerSpec {
        index,
        from,
        n: raw.n,
        kind: raw.kind,
        args: raw.args,
        op,
    })
}

fn resolve_source(index: usize, f: i64) -> Result<Source> {
    if f < 0 {
        let target = index as i64 + f;
        return match target {
            -1 => Ok(Source::Input),
            t if t < -1 => Err(Error::layer(index, format!("reference {f} points before the input"))),
            t => Ok(Source::Layer(t as usize)),
        };
    }
    let f = f as usize;
    if f >= index {
        return Err(Error::layer(
            index,
            format!("reference to layer {f} is not an earlier layer"),
        ));
    }
    Ok(Source::Layer(f))
}

struct ArgReader<'a> {
    index: usize,
    kind: LayerKind,
    args: &'a [Arg],
}

impl ArgReader<'_> {
    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::layer(self.index, format!("{}: {msg}", self.kind))
    }

    fn arity(&self, min: usize, max: usize) -> Result<()> {
        let n = self.args.len();
        if n < min || n > max {
            return Err(self.err(format!("expected {min}..={max} arguments, got {n}")));
        }
        Ok(())
    }

    fn uint(&self, pos: usize, default: Option<usize>) -> Result<usize> {
        match (self.args.get(pos), default) {
            (Some(Arg::Int(v)), _) if *v > 0 => Ok(*v as usize),
            (Some(Arg::Int(0)), _) if pos == 3 && self.kind == LayerKind::Conv => Ok(0),
            (Some(other), _) => Err(self.err(format!("argument {pos} must be a positive integer, got {other}"))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(self.err(format!("missing argument {pos}"))),
        }
    }

    fn flag(&self, pos: usize, default: bool) -> Result<bool> {
        match self.args.get(pos) {
            Some(Arg::Bool(b)) => Ok(*b),
            Some(other) => Err(self.err(format!("argument {pos} must be a boolean, got {other}"))),
            None => Ok(default),
        }
    }

    fn op(&self) -> Result<LayerOp> {
        Ok(match self.kind {
            LayerKind::Conv => {
                self.arity(1, 5)?;
                LayerOp::Conv {
                    c2: self.uint(0, None)?,
                    k: self.uint(1, Some(1))?,
                    s: self.uint(2, Some(1))?,
                    p: if self.args.len() > 3 { Some(self.uint(3, None)?) } else { None },
                    g: self.uint(4, Some(1))?,
                }
            }
            LayerKind::GhostConv => {
                self.arity(1, 3)?;
                LayerOp::GhostConv {
                    c2: self.uint(0, None)?,
                    k: self.uint(1, Some(1))?,
                    s: self.uint(2, Some(1))?,
                }
            }
            LayerKind::C3 => {
                self.arity(1, 2)?;
                LayerOp::C3 {
                    c2: self.uint(0, None)?,
                    kind: C3Kind::Bottleneck,
                    shortcut: self.flag(1, true)?,
                }
            }
            LayerKind::C3Ghost => {
                self.arity(1, 1)?;
                LayerOp::C3 {
                    c2: self.uint(0, None)?,
                    kind: C3Kind::Ghost,
                    shortcut: true,
                }
            }
            LayerKind::C3Tr => {
                self.arity(1, 2)?;
                LayerOp::C3 {
                    c2: self.uint(0, None)?,
                    kind: C3Kind::Transformer {
                        heads: self.uint(1, Some(TransformerBlock::DEFAULT_HEADS))?,
                    },
                    shortcut: true,
                }
            }
            LayerKind::GhostBottleneck => {
                self.arity(1, 3)?;
                LayerOp::GhostBottleneck {
                    c2: self.uint(0, None)?,
                    k: self.uint(1, Some(3))?,
                    s: self.uint(2, Some(1))?,
                }
            }
            LayerKind::Sppf => {
                self.arity(1, 2)?;
                LayerOp::Sppf {
                    c2: self.uint(0, None)?,
                    k: self.uint(1, Some(5))?,
                }
            }
            LayerKind::CoordAtt => {
                self.arity(1, 2)?;
                LayerOp::CoordAtt {
                    c2: self.uint(0, None)?,
                    reduction: self.uint(1, Some(32))?,
                }
            }
            LayerKind::Upsample => {
                self.arity(0, 1)?;
                LayerOp::Upsample {
                    scale: self.uint(0, Some(2))?,
                }
            }
            LayerKind::Concat => {
                self.arity(0, 0)?;
                LayerOp::Concat
            }
            LayerKind::BiFpn => {
                self.arity(0, 0)?;
                LayerOp::WeightedConcat
            }
            LayerKind::BiFpnAdd => {
                self.arity(0, 0)?;
                LayerOp::WeightedAdd
            }
            LayerKind::Detect => {
                self.arity(0, 0)?;
                LayerOp::Detect
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_err(text: &str) -> (usize, String) {
        match parse_config(text) {
            Err(Error::Layer { index, message }) => (index, message),
            other => panic!("expected layer error, got {other:?}"),
        }
    }

    #[test]
    fn resolves_relative_and_absolute_sources() {
        let cfg = parse_config(
            r#"{"layers": [
                {"from": -1, "kind": "Conv", "args": [8, 3, 2]},
                {"from": [-1], "kind": "Conv", "args": [8]},
                {"from": [-1, 0], "kind": "Concat"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(cfg.layers[0].from, vec![Source::Input]);
        assert_eq!(cfg.layers[2].from, vec![Source::Layer(1), Source::Layer(0)]);
        assert_eq!(cfg.layers[0].op, LayerOp::Conv { c2: 8, k: 3, s: 2, p: None, g: 1 });
        assert_eq!(cfg.nc, None);
    }

    #[test]
    fn unknown_kind_reports_line() {
        let text = "{\"layers\": [\n  {\"from\": [-1], \"kind\": \"Conv\", \"args\": [8]},\n  {\"from\": [-1], \"kind\": \"Warp\", \"args\": []}\n]}";
        match parse_config(text) {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forward_reference_rejected() {
        let (index, message) = layer_err(
            r#"{"layers": [
                {"from": [-1], "kind": "Conv", "args": [8]},
                {"from": [-1, 2], "kind": "Concat"},
                {"from": [-1], "kind": "Conv", "args": [8]}
            ]}"#,
        );
        assert_eq!(index, 1);
        assert!(message.contains("layer 2"));
        let (index, _) = layer_err(r#"{"layers": [{"from": [-2], "kind": "Conv", "args": [8]}]}"#);
        assert_eq!(index, 0);
    }

    #[test]
    fn argument_types_checked() {
        let (_, message) = layer_err(r#"{"layers": [{"from": [-1], "kind": "Conv", "args": [true]}]}"#);
        assert!(message.contains("positive integer"));
        let (_, message) = layer_err(r#"{"layers": [{"from": [-1], "kind": "C3", "args": [8, 3]}]}"#);
        assert!(message.contains("boolean"));
        let (_, message) = layer_err(r#"{"layers": [{"from": [-1], "kind": "Upsample", "args": [2, 2]}]}"#);
        assert!(message.contains("arguments"));
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_config("{\"layers\": [\n  {\"from\": [-1],, }\n]}") {
            Err(Error::ConfigSyntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }
}
