use std::fmt::Write as _;

use serde::Serialize;

use crate::blocks::BnCounting;

use super::model::ModelGraph;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerRow {
    pub index: usize,
    pub from: String,
    pub n: usize,
    pub kind: String,
    pub args: String,
    pub params: u64,
    pub macs: u64,
    pub output: String,
}

/// Per-layer and total size/compute figures at one input size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub input_size: usize,
    pub bn_counting: String,
    pub rows: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
    /// `2 · total_macs / 1e9`.
    pub gflops: f64,
}

pub fn gflops_from_macs(macs: u64) -> f64 {
    2.0 * macs as f64 / 1e9
}

pub fn analyze(graph: &ModelGraph, counting: BnCounting) -> AnalysisReport {
    let rows: Vec<LayerRow> = graph
        .layers()
        .iter()
        .map(|l| LayerRow {
            index: l.spec.index,
            from: l.spec.from_label(),
            n: l.spec.n,
            kind: l.spec.kind.to_string(),
            args: l.spec.args_label(),
            params: l.declared_params(counting),
            macs: l.macs(),
            output: l.outputs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect();
    let total_params = rows.iter().map(|r| r.params).sum();
    let total_macs = rows.iter().map(|r| r.macs).sum();
    AnalysisReport {
        input_size: graph.input_size(),
        bn_counting: match counting {
            BnCounting::Folded => "folded".into(),
            BnCounting::Affine => "affine".into(),
        },
        rows,
        total_params,
        total_macs,
        gflops: gflops_from_macs(total_macs),
    }
}

impl AnalysisReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,from,n,kind,args,params,macs,output\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},\"{}\",{},{},\"{}\",{},{},\"{}\"",
                r.index, r.from, r.n, r.kind, r.args, r.params, r.macs, r.output
            );
        }
        let _ = writeln!(out, "total,,,,,{},{},", self.total_params, self.total_macs);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>3}  {:<10} {:>2}  {:<16} {:<22} {:>10} {:>14}  output",
            "#", "from", "n", "kind", "args", "params", "MACs"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>3}  {:<10} {:>2}  {:<16} {:<22} {:>10} {:>14}  {}",
                r.index, r.from, r.n, r.kind, r.args, r.params, r.macs, r.output
            );
        }
        let _ = writeln!(
            out,
            "total: {} params, {} MACs, {:.3} GFLOPs at {}x{} (bn counting: {})",
            self.total_params, self.total_macs, self.gflops, self.input_size, self.input_size, self.bn_counting
        );
        out
    }
}
