use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gtb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtb"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn analyze_baseline_totals() {
    let o = gtb(&["analyze"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("total: 7012822 params"), "{out}");
    assert!(out.contains("15.754 GFLOPs at 640x640"), "{out}");
}

#[test]
fn analyze_writes_csv_and_accepts_labels() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    let o = gtb(&["analyze", "--config", "G+T+B", "--bn", "affine", "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("index,from,n,kind,args,params,macs,output\n"));
    assert_eq!(text.lines().count(), 1 + 25 + 1);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(gtb(&["analyze", "--config", "missing.json"]).status.code(), Some(2));
    assert_eq!(gtb(&["analyze", "--imgsz", "100"]).status.code(), Some(2));
    assert_eq!(gtb(&["analyze", "--bn", "odd"]).status.code(), Some(2));
    assert_eq!(gtb(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gtb(&["forward", "--imgsz", "64", "--dump-layer", "25"]).status.code(), Some(2));
    assert_eq!(gtb(&["forward", "--imgsz", "64", "--input", "noise"]).status.code(), Some(2));
    assert_eq!(gtb(&["gradcheck", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(gtb(&["eval", "--gt", "nowhere", "--det", "nowhere"]).status.code(), Some(2));
    assert_eq!(gtb(&["augment", "--in", ".", "--out", ".", "--pipeline", "spin"]).status.code(), Some(2));
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"layers\": [\n  {\"from\": [-1], \"kind\": \"Conv\", \"args\": [8,]}\n]}").unwrap();
    let o = gtb(&["analyze", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn ablate_flags_anomalous_rows() {
    let o = gtb(&["ablate", "--against-paper"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let flagged: Vec<&str> = out
        .lines()
        .filter(|l| l.contains("FLAG: published"))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(flagged, ["T", "T+B"]);
    assert!(out.contains("table-implied 29.8%"));
    assert!(out.contains("summary claim 42%"));
    assert!(!out.contains('\x1b'));
    assert_eq!(out.matches(": ok").count(), 4);
}

#[test]
fn eval_fixture_matches_committed_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture();
    let o = gtb(&["eval", "--gt", p(&f.join("gt")), "--det", p(&f.join("det")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    // expected.json was produced by oracle.py in exact rational arithmetic
    let expected = fs::read_to_string(f.join("expected.json")).unwrap();
    assert!(expected.contains("\"367/462\""));
    let map = 367.0 / 462.0;
    assert!(stdout(&o).contains(&format!("mAP@0.5 {map:.6}")), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.contains(&format!("0,3,1,2,0.750000,0.600000,{:.6}", 57.0 / 77.0)), "{csv}");
    assert!(csv.contains(&format!("1,2,1,0,0.666667,1.000000,{:.6}", 28.0 / 33.0)), "{csv}");
    assert!(dir.path().join("eval.md").exists());
}

#[test]
fn eval_perfect_empty_and_unmatched() {
    let dir = tempfile::tempdir().unwrap();
    let gt = fixture().join("gt");
    let perfect = dir.path().join("perfect");
    fs::create_dir(&perfect).unwrap();
    for stem in ["img1", "img2", "img3"] {
        let text = fs::read_to_string(gt.join(format!("{stem}.txt"))).unwrap();
        let dets: String = text
            .lines()
            .map(|l| {
                let (c, rest) = l.split_once(' ').unwrap();
                format!("{c} 1.0 {rest}\n")
            })
            .collect();
        fs::write(perfect.join(format!("{stem}.txt")), dets).unwrap();
    }
    let o = gtb(&["eval", "--gt", p(&gt), "--det", p(&perfect), "--out", p(dir.path())]);
    assert!(stdout(&o).contains("mAP@0.5 1.000000"), "{}", stdout(&o));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = gtb(&["eval", "--gt", p(&gt), "--det", p(&empty), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mAP@0.5 0.000000"));

    // detections for an image with no ground-truth file are all false positives
    fs::write(perfect.join("stray.txt"), "0 0.99 0.5 0.5 0.2 0.2\n").unwrap();
    let o = gtb(&["eval", "--gt", p(&gt), "--det", p(&perfect), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stray.txt"));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("0,5,0,0,")), "{csv}");
    let args = ["eval", "--gt", p(&gt), "--det", p(&perfect), "--out", p(dir.path()), "--policy", "fixed:0.5"];
    assert_eq!(gtb(&args).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("0,5,1,0,")), "{csv}");
}

#[test]
fn gradcheck_is_deterministic_and_passes() {
    let a = gtb(&["gradcheck", "--seed", "7"]);
    let b = gtb(&["gradcheck", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("100 trials, seed 7"));
}

#[test]
fn forward_summary_is_stable() {
    let args = ["forward", "--config", "yolov5s-gtb", "--imgsz", "128", "--input", "random", "--seed", "5"];
    let a = gtb(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, gtb(&args).stdout);
    let out = stdout(&a);
    for shape in ["[1, 18, 16, 16]", "[1, 18, 8, 8]", "[1, 18, 4, 4]"] {
        assert!(out.contains(shape), "{out}");
    }
}

#[test]
fn dump_features_writes_one_pgm_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    // layer 2 of the baseline is a 64-channel C3
    let o = gtb(&["dump-features", "--imgsz", "64", "--layer", "2", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 64);
    let o = gtb(&["forward", "--imgsz", "64", "--dump-layer", "7", "--out", p(&dir.path().join("l7"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_dir(dir.path().join("l7")).unwrap().count(), 512);
}

#[test]
fn augment_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    let mut pgm = b"P5\n8 6\n255\n".to_vec();
    pgm.extend((0..48u8).map(|v| v * 5));
    fs::write(input.join("a.pgm"), &pgm).unwrap();
    fs::write(input.join("a.txt"), "0 0.25 0.5 0.2 0.2\n").unwrap();
    let out = dir.path().join("out");
    let args = ["augment", "--in", p(&input), "--out", p(&out), "--pipeline", "hflip", "--seed", "1"];
    let o = gtb(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
    let labels = fs::read_to_string(out.join("a.txt")).unwrap();
    assert!(labels.starts_with("0 0.750000 0.500000"), "{labels}");
}
