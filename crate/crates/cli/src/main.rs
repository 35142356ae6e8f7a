//! `gtb`: command-line front end for the workbench.

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::warn;

use gtb_core::augment::{augment_dataset, Pipeline, MANIFEST_NAME};
use gtb_core::blocks::BnCounting;
use gtb_core::graph::{
    analyze, load_config, parse_config, shipped, synthetic_input, write_feature_maps, InputKind, ModelConfig,
    ModelGraph, SHIPPED,
};
use gtb_core::harness::{run_ablation, run_gradcheck};
use gtb_core::metrics::{evaluate, label_stems, load_detections, load_ground_truth, ThresholdPolicy};
use gtb_core::Tensor;

#[derive(Parser)]
#[command(name = "gtb", version, about = "Reference workbench for the YOLOv5s-GTB crack detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ModelArgs {
    /// Config file, or the name/label of a bundled config (e.g. `yolov5s`, `G+T+B`).
    #[arg(long, default_value = "yolov5s")]
    config: String,
    /// Number of classes.
    #[arg(long, default_value_t = 1)]
    nc: usize,
    /// Square input size; must be a multiple of 32.
    #[arg(long, default_value_t = 640)]
    imgsz: usize,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Seeds both the weights and a random input.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `zeros` or `random`.
    #[arg(long, default_value = "zeros")]
    input: String,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer parameter and MAC table.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        /// `folded` (default) or `affine`.
        #[arg(long, default_value = "folded")]
        bn: String,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Measure every bundled ablation model.
    Ablate {
        /// Compare against the published table.
        #[arg(long)]
        against_paper: bool,
        #[arg(long, default_value_t = 1)]
        nc: usize,
        #[arg(long, default_value_t = 640)]
        imgsz: usize,
        #[arg(long, default_value = "folded")]
        bn: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Score a detection directory against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// `max-f1` or `fixed:<threshold>`.
        #[arg(long, default_value = "max-f1")]
        policy: String,
        /// Report directory (defaults to the detection directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of fusion gradients plus attention row sums.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one forward pass and summarise the head outputs.
    Forward {
        #[command(flatten)]
        run: RunArgs,
        /// Also write this layer's channels as PGM images.
        #[arg(long)]
        dump_layer: Option<usize>,
        /// Directory for `--dump-layer` images.
        #[arg(long, default_value = "features")]
        out: PathBuf,
    },
    /// Augment a directory of images and labels.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// e.g. `hflip,erase(p=0.5)`.
        #[arg(long)]
        pipeline: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write one layer's activation channels as PGM images.
    DumpFeatures {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status 1: a check ran and failed.
const CHECK_FAILED: u8 = 1;
/// Exit status 2: bad flags or unreadable input.
const USAGE_ERROR: u8 = 2;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Self {
        Failure {
            code: USAGE_ERROR,
            message: message.to_string(),
        }
    }
}

impl From<gtb_core::Error> for Failure {
    fn from(e: gtb_core::Error) -> Self {
        Failure::usage(e)
    }
}

type CmdResult = Result<u8, Failure>;

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Self {
        Style {
            color: std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stdout().is_terminal(),
        }
    }

    /// Colours PASS/FAIL/FLAG/VIOLATED markers in `text`.
    fn paint(&self, text: &str) -> String {
        if !self.color {
            return text.to_string();
        }
        text.replace("PASS", "\x1b[32mPASS\x1b[0m")
            .replace("FAIL", "\x1b[31mFAIL\x1b[0m")
            .replace("FLAG", "\x1b[33mFLAG\x1b[0m")
            .replace("VIOLATED", "\x1b[31mVIOLATED\x1b[0m")
    }
}

fn parse_bn(s: &str) -> Result<BnCounting, Failure> {
    BnCounting::parse(s).ok_or_else(|| Failure::usage(format!("unknown --bn {s:?} (expected folded or affine)")))
}

fn load_model_config(spec: &str) -> Result<(String, ModelConfig), Failure> {
    let path = Path::new(spec);
    if path.exists() {
        return Ok((spec.to_string(), load_config(path)?));
    }
    match shipped(spec) {
        Some(c) => Ok((c.name.to_string(), parse_config(c.source)?)),
        None => {
            let names: Vec<&str> = SHIPPED.iter().map(|c| c.name).collect();
            Err(Failure::usage(format!(
                "config {spec:?} is neither a file nor a bundled config ({})",
                names.join(", ")
            )))
        }
    }
}

fn build(model: &ModelArgs, seed: u64) -> Result<(String, ModelGraph), Failure> {
    let (name, cfg) = load_model_config(&model.config)?;
    let graph = ModelGraph::build(&cfg, model.nc, model.imgsz, seed)?;
    Ok((name, graph))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_analyze(model: &ModelArgs, bn: &str, csv: Option<&Path>) -> CmdResult {
    let counting = parse_bn(bn)?;
    let start = Instant::now();
    let (name, graph) = build(model, 0)?;
    let report = analyze(&graph, counting);
    println!("model: {name} (nc={})", model.nc);
    print!("{}", report.to_table());
    log::info!("analysis took {:.3}s", start.elapsed().as_secs_f64());
    if let Some(path) = csv {
        write_file(path, &report.to_csv())?;
    }
    Ok(0)
}

fn cmd_ablate(against_paper: bool, nc: usize, imgsz: usize, bn: &str, csv: Option<&Path>, style: &Style) -> CmdResult {
    let counting = parse_bn(bn)?;
    let report = run_ablation(nc, imgsz, counting)?;
    if against_paper && (nc != 1 || imgsz != 640 || counting != BnCounting::Folded) {
        warn!("published figures assume nc=1, 640x640 and folded BN; deltas are not comparable");
    }
    print!("{}", style.paint(&report.to_table(against_paper)));
    if let Some(path) = csv {
        write_file(path, &report.to_csv())?;
    }
    Ok(0)
}

fn cmd_eval(gt: &Path, det: &Path, iou: f64, policy: &str, out: Option<&Path>) -> CmdResult {
    let policy: ThresholdPolicy = policy.parse()?;
    for dir in [gt, det] {
        if !dir.is_dir() {
            return Err(Failure::usage(format!("{} is not a directory", dir.display())));
        }
    }
    let gt_stems = label_stems(gt)?;
    for stem in label_stems(det)? {
        if gt_stems.binary_search(&stem).is_err() {
            warn!("detections {stem}.txt have no ground-truth file; counting them all as false positives");
        }
    }
    let gts = load_ground_truth(gt)?;
    let dets = load_detections(det)?;
    let report = evaluate(&dets, &gts, iou, policy)?;
    let out = out.unwrap_or(det);
    fs::create_dir_all(out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join("eval.csv"), &report.to_csv())?;
    write_file(&out.join("eval.md"), &report.to_markdown())?;
    for c in &report.classes {
        println!(
            "class {}: gt {} tp {} fp {} fn {} P {:.4} R {:.4} AP {:.6}",
            c.class_id, c.n_gt, c.tp, c.fp, c.fn_count, c.precision, c.recall, c.ap
        );
    }
    match report.conf_threshold {
        Some(t) => println!("P {:.4} R {:.4} at confidence >= {t:.4}", report.precision, report.recall),
        None => println!("P {:.4} R {:.4} (no detections)", report.precision, report.recall),
    }
    println!("mAP@{} {:.6}", report.iou_threshold, report.map);
    Ok(0)
}

fn cmd_gradcheck(trials: usize, seed: u64, style: &Style) -> CmdResult {
    if trials == 0 {
        return Err(Failure::usage("--trials must be positive"));
    }
    let summary = run_gradcheck(trials, seed)?;
    print!("{}", style.paint(&summary.render()));
    Ok(if summary.passed() { 0 } else { CHECK_FAILED })
}

/// FNV-1a over the raw output bytes, for eyeballing run-to-run identity.
fn checksum(outputs: &[Tensor]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in outputs {
        for b in t.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

fn prepare_run(run: &RunArgs) -> Result<(String, ModelGraph, Tensor), Failure> {
    let kind: InputKind = run.input.parse()?;
    let (name, graph) = build(&run.model, run.seed)?;
    let x = synthetic_input(run.model.imgsz, kind, run.seed);
    Ok((name, graph, x))
}

fn check_layer(graph: &ModelGraph, layer: usize) -> Result<(), Failure> {
    let n = graph.layers().len();
    match graph.layers().get(layer) {
        None => Err(Failure::usage(format!("layer {layer} out of range (model has layers 0..{})", n - 1))),
        Some(l) if l.outputs.len() != 1 => Err(Failure::usage(format!(
            "layer {layer} ({}) has {} outputs; pick a layer with a single feature map",
            l.spec.kind,
            l.outputs.len()
        ))),
        Some(_) => Ok(()),
    }
}

fn dump(graph: &ModelGraph, x: &Tensor, layer: usize, out: &Path) -> Result<Vec<Tensor>, Failure> {
    let (outputs, captured) = graph.forward_capture(x, layer)?;
    let files = write_feature_maps(&captured, layer, out)?;
    println!(
        "layer {layer}: wrote {} channel maps ({}x{}) to {}",
        files.len(),
        captured.shape()[3],
        captured.shape()[2],
        out.display()
    );
    Ok(outputs)
}

fn cmd_forward(run: &RunArgs, dump_layer: Option<usize>, out: &Path) -> CmdResult {
    let (name, graph, x) = prepare_run(run)?;
    if let Some(layer) = dump_layer {
        check_layer(&graph, layer)?;
    }
    println!(
        "model: {name} ({} layers), input {:?} {}, seed {}",
        graph.layers().len(),
        x.shape(),
        run.input,
        run.seed
    );
    let outputs = match dump_layer {
        Some(layer) => dump(&graph, &x, layer, out)?,
        None => graph.forward(&x)?,
    };
    for (i, t) in outputs.iter().enumerate() {
        let (lo, hi) = t.min_max();
        println!(
            "scale {i}: shape {:?} min {lo:.6} max {hi:.6} mean {:.6}",
            t.shape(),
            t.mean()
        );
    }
    println!("checksum {:016x}", checksum(&outputs));
    Ok(0)
}

fn cmd_dump_features(run: &RunArgs, layer: usize, out: &Path) -> CmdResult {
    let (_, graph, x) = prepare_run(run)?;
    check_layer(&graph, layer)?;
    dump(&graph, &x, layer, out)?;
    Ok(0)
}

fn cmd_augment(input: &Path, out: &Path, pipeline: &str, seed: u64) -> CmdResult {
    let pipeline: Pipeline = pipeline.parse()?;
    let manifest = augment_dataset(input, out, &pipeline, seed)?;
    println!(
        "augmented {} images ({} skipped) with {pipeline}; manifest {}",
        manifest.entries.len(),
        manifest.skipped.len(),
        out.join(MANIFEST_NAME).display()
    );
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    let style = Style::detect();
    match cli.command {
        Command::Analyze { model, bn, csv } => cmd_analyze(&model, &bn, csv.as_deref()),
        Command::Ablate {
            against_paper,
            nc,
            imgsz,
            bn,
            csv,
        } => cmd_ablate(against_paper, nc, imgsz, &bn, csv.as_deref(), &style),
        Command::Eval {
            gt,
            det,
            iou,
            policy,
            out,
        } => cmd_eval(&gt, &det, iou, &policy, out.as_deref()),
        Command::Gradcheck { trials, seed } => cmd_gradcheck(trials, seed, &style),
        Command::Forward { run, dump_layer, out } => cmd_forward(&run, dump_layer, &out),
        Command::Augment {
            input,
            out,
            pipeline,
            seed,
        } => cmd_augment(&input, &out, &pipeline, seed),
        Command::DumpFeatures { run, layer, out } => cmd_dump_features(&run, layer, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .write_style(if std::env::var_os("NO_COLOR").is_some() {
            env_logger::WriteStyle::Never
        } else {
            env_logger::WriteStyle::Auto
        })
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
