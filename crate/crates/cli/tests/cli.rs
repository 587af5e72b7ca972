use std::path::Path;
use std::process::{Command, Output};

use ccgan::pipeline::{save_png, ImageTensor};
use ccgan::rng::StreamRng;

fn ccgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccgan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ccgan(args);
    assert!(
        out.status.success(),
        "ccgan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// 32 images in four families: a dark square in one of four quadrants.
fn fixture(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = StreamRng::new(1);
    for i in 0..32 {
        let q = i % 4;
        let img = ImageTensor::from_fn(3, 16, 16, |_, y, x| {
            let inside = y / 8 == q / 2 && x / 8 == q % 2;
            (if inside { 0.1 } else { 0.95 } + 0.02 * rng.normal()) as f32
        });
        save_png(&img, &dir.join(format!("f{i:02}.png"))).unwrap();
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_reports_schema() {
    let v = ok(&["--version"]);
    assert!(v.starts_with("ccgan ") && v.contains("config schema 1"));
}

#[test]
fn stage_by_stage_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    fixture(&t.join("raw"));
    let j = |p: &str| t.join(p);

    ok(&["prepare", "--in", s(&j("raw")), "--out", s(&j("basic")), "--size", "16x16"]);
    ok(&[
        "augment", "--manifest", s(&j("basic/manifest.jsonl")), "--out", s(&j("aug/manifest.jsonl")),
        "--factor", "2", "--seed", "3",
    ]);
    ok(&["edges", "--manifest", s(&j("basic/manifest.jsonl")), "--out", s(&j("edges"))]);
    assert_eq!(std::fs::read_dir(j("edges")).unwrap().count(), 33);
    ok(&[
        "features", "--manifest", s(&j("basic/manifest.jsonl")), "--provider", "randproj", "--dim", "16",
        "--seed", "2", "--out", s(&j("basic.fmat")),
    ]);
    let out = ok(&[
        "cluster", "--features", s(&j("basic.fmat")), "--manifest", s(&j("basic/manifest.jsonl")),
        "--augmented", s(&j("aug/manifest.jsonl")), "--kmin", "2", "--kmax", "6", "--runs", "3",
        "--restarts", "3", "--standardize", "--seed", "4", "--out", s(&j("labeled.jsonl")), "--report", s(&j("report.json")),
    ]);
    assert!(out.contains("classes"));
    ok(&[
        "train", "--manifest", s(&j("labeled.jsonl")), "--size", "8x8", "--epochs", "1", "--batch", "8",
        "--base-channels", "8", "--z-dim", "6", "--blocks", "2", "--attention-position", "1", "--seed", "5",
        "--out", s(&j("ckpt")), "--log", s(&j("metrics.csv")),
    ]);
    let metrics = std::fs::read_to_string(j("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let ckpt = j("ckpt/final.ckpt");
    ok(&["generate", "--ckpt", s(&ckpt), "--class", "0", "--count", "40", "--seed", "6", "--out", s(&j("gen"))]);
    ok(&["interpolate", "--ckpt", s(&ckpt), "--class", "1", "--steps", "10", "--out", s(&j("interp"))]);
    assert_eq!(std::fs::read_dir(j("interp")).unwrap().count(), 10);

    ok(&["features", "--manifest", s(&j("aug/manifest.jsonl")), "--provider", "raw", "--out", s(&j("real.fmat"))]);
    ok(&["features", "--manifest", s(&j("gen/manifest.jsonl")), "--provider", "raw", "--out", s(&j("fake.fmat"))]);
    // Each cloud's MRLT is computed on its own, so the ambient dimensions may differ.
    ok(&[
        "score", "--real", s(&j("real.fmat")), "--fake", s(&j("fake.fmat")), "--landmarks", "8", "--repeats", "2",
        "--out", s(&j("gs_fake.json")),
    ]);
    ok(&[
        "score", "--real", s(&j("real.fmat")), "--fake", s(&j("real.fmat")), "--landmarks", "8", "--repeats", "2",
        "--gamma", "0.1", "--out", s(&j("gs.json")),
    ]);
    let gs: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(j("gs.json")).unwrap()).unwrap();
    assert_eq!(gs["gs"].as_f64(), Some(0.0));
    ok(&["plot-mrlt", "--in", s(&j("gs.json")), "--out", s(&j("m.csv")), s(&j("m.svg"))]);
    assert!(std::fs::read_to_string(j("m.csv")).unwrap().starts_with("i,mrlt_real,mrlt_fake\n"));
    assert!(std::fs::read_to_string(j("m.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn run_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    fixture(&t.join("raw"));
    let doc = r#"seed = 9
input_dir = "raw"
run_dir = "out"

[prepare]
height = 16
width = 16

[augment]
factor = 2

[cluster]
k_max = 5
xmeans_runs = 2
restarts = 2

[gan]
img_h = 8
img_w = 8
base_channels = 8
z_dim = 6
n_gen_blocks = 2
attention_position = 1
batch_size = 8
epochs = 1

[score]
n_landmarks = 8
n_repeats = 2
"#;
    let cfg = t.join("run.toml");
    std::fs::write(&cfg, doc).unwrap();
    let v = ok(&["validate", "--config", s(&cfg)]);
    assert!(v.contains("\"violations\": []"));
    ok(&["run", "--config", s(&cfg)]);
    assert!(t.join("out/eval/gs.json").is_file());
    assert!(t.join("out/provenance.jsonl").is_file());

    let bad = t.join("bad.toml");
    std::fs::write(&bad, doc.replace("seed = 9\n", "").replace("z_dim = 6", "z_dim = 7")).unwrap();
    let out = ccgan(&["validate", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed") && text.contains("z_dim"));
}

#[test]
fn errors_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.ckpt");
    let out = ccgan(&[
        "--json-errors", "generate", "--ckpt", s(&missing), "--class", "0", "--out", s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("nope.ckpt"));

    let usage = ccgan(&["prepare", "--size", "banana"]);
    assert_eq!(usage.status.code(), Some(2));

    // A stage failure names the stage.
    std::fs::create_dir_all(tmp.path().join("empty")).unwrap();
    let cfg = tmp.path().join("r.toml");
    std::fs::write(&cfg, "seed = 1\ninput_dir = \"empty\"\n").unwrap();
    let out = ccgan(&["--json-errors", "run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["stage"], "prepare");
    assert_eq!(err["error"], "argument");
}
