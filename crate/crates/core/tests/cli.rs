use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mvt::cli::{
    cmd_bench, cmd_eval, cmd_init, cmd_inspect, cmd_synth, cmd_track, BenchArgs, EvalArgs, InitArgs, InspectArgs,
    Switch, SynthArgs, TrackArgs,
};
use mvt::{build_manifest, Error, ModelConfig};

const BIN: &str = env!("CARGO_BIN_EXE_mvt");

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    weights: PathBuf,
    seqs: PathBuf,
}

fn fixture(frames: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let weights = root.join("w.mvtw");
    cmd_init(&InitArgs { out: weights.clone(), seed: 3 }).unwrap();
    let seqs = root.join("seqs");
    cmd_synth(&SynthArgs { out: seqs.join("square"), frames }).unwrap();
    Fixture { _dir: dir, root, weights, seqs }
}

fn track_args(f: &Fixture, out: &str) -> TrackArgs {
    TrackArgs {
        weights: f.weights.clone(),
        seq: f.seqs.clone(),
        out: f.root.join(out),
        overlay: false,
        fusion: Switch::On,
        window: Switch::On,
        threads: None,
    }
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn track_writes_one_line_per_frame_and_reruns_identically() {
    let f = fixture(5);
    let mut a = track_args(&f, "a");
    a.overlay = true;
    let summary = cmd_track(&a).unwrap();
    assert_eq!(summary.sequences, vec!["square".to_string()]);
    assert_eq!(summary.frames, 5);
    let res = f.root.join("a/square");
    assert_eq!(lines(&res.join("square_001.txt")), 5);
    assert_eq!(lines(&res.join("square_time.txt")), 5);
    assert_eq!(fs::read_dir(res.join("overlay")).unwrap().count(), 5);
    let first = fs::read_to_string(res.join("square_001.txt")).unwrap();
    assert_eq!(first.lines().next(), Some("70.0000,67.0000,40.0000,40.0000"));

    let mut b = track_args(&f, "b");
    b.threads = Some(2);
    cmd_track(&b).unwrap();
    assert_eq!(first, fs::read_to_string(f.root.join("b/square/square_001.txt")).unwrap());

    let mut off = track_args(&f, "off");
    off.fusion = Switch::Off;
    off.window = Switch::Off;
    cmd_track(&off).unwrap();
    assert_eq!(lines(&f.root.join("off/square/square_001.txt")), 5);
}

#[test]
fn eval_reports_and_diagnoses() {
    let f = fixture(3);
    // groundtruth copied as predictions
    let res = f.root.join("res/square");
    fs::create_dir_all(&res).unwrap();
    fs::copy(f.seqs.join("square/groundtruth.txt"), res.join("square_001.txt")).unwrap();
    let args = EvalArgs {
        results: f.root.join("res"),
        anns: f.seqs.clone(),
        json: false,
        report: Some(f.root.join("report.json")),
    };
    let mut out = Vec::new();
    let rep = cmd_eval(&args, &mut out).unwrap();
    assert_eq!(rep.overlap, 1.0);
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("OR (AUC)   1.0000"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.root.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["overlap"], 1.0);

    cmd_synth(&SynthArgs { out: f.seqs.join("other"), frames: 2 }).unwrap();
    let err = cmd_eval(&args, &mut Vec::new()).unwrap_err();
    assert!(matches!(&err, Error::Mismatch(m) if m.contains("other")), "{err}");
    let status = Command::new(BIN)
        .args(["eval", "--results"])
        .arg(f.root.join("res"))
        .arg("--anns")
        .arg(&f.seqs)
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("other"));
}

#[test]
fn eval_two_frame_toy() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("anns/toy");
    let res = dir.path().join("res/toy");
    fs::create_dir_all(&ann).unwrap();
    fs::create_dir_all(&res).unwrap();
    fs::write(ann.join("groundtruth.txt"), "1,1,2,2\n10,10,4,4\n").unwrap();
    fs::write(res.join("toy_001.txt"), "0,0,2,2\n10,10,4,4\n").unwrap();
    let out = Command::new(BIN)
        .args(["eval", "--results"])
        .arg(dir.path().join("res"))
        .arg("--anns")
        .arg(dir.path().join("anns"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.5714"), "{text}");
    let json = Command::new(BIN)
        .args(["eval", "--json", "--results"])
        .arg(dir.path().join("res"))
        .arg("--anns")
        .arg(dir.path().join("anns"))
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!((v["overlap"].as_f64().unwrap() - 0.571429).abs() < 1e-6);
}

#[test]
fn inspect_lists_and_validates() {
    let f = fixture(1);
    let rep = cmd_inspect(&InspectArgs { weights: f.weights.clone(), json: false }, &mut Vec::new()).unwrap();
    let manifest = build_manifest(&ModelConfig::default()).unwrap();
    assert_eq!(rep.parameters, Some(manifest.parameter_count()));
    assert_eq!(rep.elements, manifest.element_count());
    assert_eq!(rep.tensors, manifest.entries.len());

    let out = Command::new(BIN).args(["inspect", "--json", "--weights"]).arg(&f.weights).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["parameters"].as_u64().unwrap() as usize, manifest.parameter_count());

    let mut bytes = fs::read(&f.weights).unwrap();
    bytes[1] ^= 0x55;
    let bad = f.root.join("bad.mvtw");
    fs::write(&bad, &bytes).unwrap();
    let out = Command::new(BIN).args(["inspect", "--weights"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let cut = f.root.join("cut.mvtw");
    fs::write(&cut, &fs::read(&f.weights).unwrap()[..5000]).unwrap();
    assert!(cmd_inspect(&InspectArgs { weights: cut, json: true }, &mut Vec::new()).is_err());
}

#[test]
fn init_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    cmd_init(&InitArgs { out: a.clone(), seed: 5 }).unwrap();
    cmd_init(&InitArgs { out: b.clone(), seed: 5 }).unwrap();
    cmd_init(&InitArgs { out: c.clone(), seed: 6 }).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn bench_accounts_for_stages() {
    let f = fixture(1);
    let args = BenchArgs {
        weights: f.weights.clone(),
        frames: 3,
        fusion: Switch::On,
        threads: None,
        json: true,
    };
    let mut out = Vec::new();
    let rep = cmd_bench(&args, &mut out).unwrap();
    assert!(rep.fps > 0.0);
    assert!((rep.stage_fraction - 1.0).abs() <= 0.1);
    assert_eq!(rep.parameters, build_manifest(&ModelConfig::default()).unwrap().parameter_count());
    let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert!(v["backbone"]["mean_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn track_fails_cleanly_on_bad_inputs() {
    let f = fixture(1);
    let mut a = track_args(&f, "x");
    a.weights = f.root.join("missing.mvtw");
    assert!(cmd_track(&a).is_err());
    let out = Command::new(BIN)
        .args(["track", "--weights"])
        .arg(&f.weights)
        .arg("--seq")
        .arg(f.root.join("nowhere"))
        .arg("--out")
        .arg(f.root.join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
#[ignore = "timing-sensitive; run on an idle machine"]
fn bench_fps_is_stable_when_doubling_frames() {
    let model = mvt::MvtModel::random(&ModelConfig::default(), 0).unwrap();
    let short = mvt::cli::run_bench(&model, 5).unwrap();
    let long = mvt::cli::run_bench(&model, 10).unwrap();
    let change = (long.fps - short.fps).abs() / short.fps;
    assert!(change < 0.2, "fps {} -> {} ({:.0}%)", short.fps, long.fps, change * 100.0);
}
