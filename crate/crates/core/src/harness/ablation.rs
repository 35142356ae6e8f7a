use std::fmt::Write as _;

use serde::Serialize;

use crate::blocks::BnCounting;
use crate::error::{Error, Result};
use crate::graph::{analyze, parse_config, shipped, ModelGraph};
use crate::par;

/// Which modifications a model carries on top of the YOLOv5s baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AblationConfig {
    /// Ghost convolutions and C3Ghost throughout.
    pub g: bool,
    /// Transformer C3 blocks.
    pub t: bool,
    /// Coordinate attention after the last backbone stage.
    pub ca: bool,
    /// Weighted (BiFPN-style) neck fusion with the extra backbone link.
    pub b: bool,
}

impl AblationConfig {
    pub const fn new(g: bool, t: bool, ca: bool, b: bool) -> Self {
        AblationConfig { g, t, ca, b }
    }

    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.g, "G"), (self.t, "T"), (self.ca, "CA"), (self.b, "B")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, name)| *name)
            .collect();
        if parts.is_empty() {
            "YOLOv5s".into()
        } else {
            parts.join("+")
        }
    }

    /// Name of the bundled config for this combination, if one ships.
    pub fn config_name(&self) -> Option<&'static str> {
        shipped(&self.label()).map(|c| c.name)
    }
}

/// Published figures for one ablation row. Accuracy columns come from
/// training runs and are carried for reference only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PaperRow {
    pub config: AblationConfig,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub params: u64,
    pub gflops: f64,
    /// Why the published row cannot be taken at face value.
    pub flag: Option<&'static str>,
}

const fn row(g: bool, t: bool, ca: bool, b: bool, p: f64, r: f64, map: f64, params: u64, gflops: f64) -> PaperRow {
    PaperRow {
        config: AblationConfig::new(g, t, ca, b),
        precision: p,
        recall: r,
        map,
        params,
        gflops,
        flag: None,
    }
}

pub const PAPER_ROWS: [PaperRow; 10] = [
    row(false, false, false, false, 0.857, 0.875, 0.885, 7_012_822, 15.8),
    row(true, false, false, false, 0.784, 0.833, 0.826, 3_675_726, 8.1),
    PaperRow {
        flag: Some("published count equals the T+B row"),
        ..row(false, true, false, false, 0.913, 0.688, 0.83, 7_013_590, 15.6)
    },
    row(false, false, true, false, 0.927, 0.791, 0.864, 7_037_430, 15.9),
    row(false, false, false, true, 0.894, 0.706, 0.833, 7_078_358, 16.1),
    row(true, true, false, false, 0.91, 0.854, 0.881, 4_857_678, 8.9),
    row(true, false, true, false, 0.974, 0.812, 0.856, 3_700_334, 8.1),
    PaperRow {
        flag: Some("published count equals the T row although B adds parameters"),
        ..row(false, true, false, true, 0.752, 0.708, 0.756, 7_013_590, 15.8)
    },
    row(true, false, true, true, 0.945, 0.729, 0.866, 3_765_870, 8.4),
    row(true, true, false, true, 0.93, 0.833, 0.895, 4_923_214, 9.1),
];

/// Parameter reduction of the G+T+B model claimed in the summary text.
pub const ABSTRACT_REDUCTION_CLAIM: f64 = 0.42;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub config: String,
    pub measured_params: u64,
    pub measured_gflops: f64,
    pub paper: Option<PaperRow>,
    /// `measured − published`.
    pub param_delta: Option<i64>,
    pub param_delta_rel: Option<f64>,
    pub gflops_delta: Option<f64>,
    pub gflops_delta_rel: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationReport {
    pub input_size: usize,
    pub nc: usize,
    pub bn_counting: String,
    pub rows: Vec<AblationRow>,
    /// `1 − params(G+T+B) / params(baseline)`, measured.
    pub measured_reduction: f64,
    /// The same ratio from the published table.
    pub paper_reduction: f64,
    pub abstract_claim: f64,
    /// `(G row, G-free counterpart, G row has fewer params)`.
    pub ghost_monotonic: Vec<(String, String, bool)>,
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn measure(name: &str, nc: usize, input_size: usize, counting: BnCounting) -> Result<(u64, f64)> {
    let cfg = shipped(name).ok_or_else(|| Error::invalid("ablate", format!("no bundled config {name}")))?;
    let graph = ModelGraph::build(&parse_config(cfg.source)?, nc, input_size, 0)?;
    let report = analyze(&graph, counting);
    Ok((report.total_params, report.gflops))
}

/// Measures every published ablation row. Deltas against published counts are only
/// meaningful at `nc = 1`, 640×640 input and folded BN counting.
pub fn run_ablation(nc: usize, input_size: usize, counting: BnCounting) -> Result<AblationReport> {
    let measured = par::map_slice(&PAPER_ROWS, |p| {
        let name = p.config.config_name().expect("every published row ships a config");
        measure(name, nc, input_size, counting).map(|m| (name, m))
    });
    let mut rows = Vec::with_capacity(PAPER_ROWS.len());
    for (paper, m) in PAPER_ROWS.iter().zip(measured) {
        let (name, (params, gflops)) = m?;
        let param_delta = params as i64 - paper.params as i64;
        let gflops_delta = gflops - paper.gflops;
        rows.push(AblationRow {
            label: paper.config.label(),
            config: name.to_string(),
            measured_params: params,
            measured_gflops: gflops,
            paper: Some(*paper),
            param_delta: Some(param_delta),
            param_delta_rel: Some(param_delta as f64 / paper.params as f64),
            gflops_delta: Some(gflops_delta),
            gflops_delta_rel: Some(gflops_delta / paper.gflops),
        });
    }
    let find = |label: &str| rows.iter().find(|r| r.label == label).expect("published row");
    let base = find("YOLOv5s");
    let gtb = find("G+T+B");
    let measured_reduction = 1.0 - gtb.measured_params as f64 / base.measured_params as f64;
    let published = |r: &AblationRow| r.paper.expect("published row").params as f64;
    let paper_reduction = 1.0 - published(gtb) / published(base);
    let ghost_monotonic = [("G", "YOLOv5s"), ("G+T", "T"), ("G+CA", "CA"), ("G+T+B", "T+B")]
        .iter()
        .map(|(with, without)| {
            let ok = find(with).measured_params < find(without).measured_params;
            (with.to_string(), without.to_string(), ok)
        })
        .collect();
    Ok(AblationReport {
        input_size,
        nc,
        bn_counting: match counting {
            BnCounting::Folded => "folded".into(),
            BnCounting::Affine => "affine".into(),
        },
        rows,
        measured_reduction,
        paper_reduction,
        abstract_claim: ABSTRACT_REDUCTION_CLAIM,
        ghost_monotonic,
    })
}

fn signed(v: i64) -> String {
    if v > 0 {
        format!("+{v}")
    } else {
        v.to_string()
    }
}

impl AblationReport {
    pub fn to_table(&self, against_paper: bool) -> String {
        let mut out = String::new();
        if against_paper {
            let _ = writeln!(
                out,
                "{:<8} {:>10} {:>10} {:>9} {:>8}  {:>7} {:>6} {:>7}  {:>5} {:>5} {:>5}  flag",
                "model", "params", "paper", "delta", "rel", "GFLOPs", "paper", "delta", "P*", "R*", "mAP*"
            );
        } else {
            let _ = writeln!(out, "{:<8} {:>10} {:>8}", "model", "params", "GFLOPs");
        }
        for r in &self.rows {
            match (&r.paper, against_paper) {
                (Some(p), true) => {
                    let _ = writeln!(
                        out,
                        "{:<8} {:>10} {:>10} {:>9} {:>+7.2}%  {:>7.2} {:>6.1} {:>+7.2}  {:>5.3} {:>5.3} {:>5.3}  {}",
                        r.label,
                        r.measured_params,
                        p.params,
                        signed(r.param_delta.unwrap_or(0)),
                        100.0 * r.param_delta_rel.unwrap_or(0.0),
                        r.measured_gflops,
                        p.gflops,
                        r.gflops_delta.unwrap_or(0.0),
                        p.precision,
                        p.recall,
                        p.map,
                        p.flag.map_or(String::new(), |f| format!("FLAG: {f}")),
                    );
                }
                _ => {
                    let _ = writeln!(out, "{:<8} {:>10} {:>8.2}", r.label, r.measured_params, r.measured_gflops);
                }
            }
        }
        if against_paper {
            let _ = writeln!(out, "* published accuracy from trained models; reference only, not reproduced here");
        }
        let _ = writeln!(
            out,
            "parameter reduction G+T+B vs baseline: measured {:.1}%, table-implied {:.1}%, summary claim {:.0}%{}",
            100.0 * self.measured_reduction,
            100.0 * self.paper_reduction,
            100.0 * self.abstract_claim,
            if (self.paper_reduction - self.abstract_claim).abs() > 0.01 {
                "  FLAG: the claimed reduction does not follow from the published counts"
            } else {
                ""
            }
        );
        for (with, without, ok) in &self.ghost_monotonic {
            let _ = writeln!(
                out,
                "ghost monotonicity {with} < {without}: {}",
                if *ok { "ok" } else { "VIOLATED" }
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,config,params,gflops,paper_params,paper_gflops,param_delta,param_delta_rel,gflops_delta,flag\n");
        for r in &self.rows {
            let p = r.paper.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{},{},{},{},{},{}",
                r.label,
                r.config,
                r.measured_params,
                r.measured_gflops,
                p.map_or(String::new(), |p| p.params.to_string()),
                p.map_or(String::new(), |p| p.gflops.to_string()),
                r.param_delta.map_or(String::new(), |d| d.to_string()),
                r.param_delta_rel.map_or(String::new(), |d| format!("{d:.6}")),
                r.gflops_delta.map_or(String::new(), |d| format!("{d:.4}")),
                p.and_then(|p| p.flag).unwrap_or(""),
            );
        }
        out
    }
}
