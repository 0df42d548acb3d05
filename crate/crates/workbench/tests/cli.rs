use std::path::{Path, PathBuf};

use gameblend_workbench::cli::run_from_args;

const TOY: &str = r#"
seed = 4
output = "out"
jump_params = "jumps.toml"

[corpus]
synthetic = { games = 2, per_game = 10, seed = 1 }

[model]
family = "cgmvae"
z = 8
epochs = 4

[eval]
samples_per_weight = 6
directional_samples = 2
trees = 5
"#;

const JUMPS: &str = r#"
[[game]]
name = "synth-a"
initial_velocity = 1.0
rise_gravity = 0.25
fall_gravity = 0.35
max_hold_frames = 2.0
horizontal_speed = 0.5

[[game]]
name = "synth-b"
initial_velocity = 0.9
rise_gravity = 0.2
fall_gravity = 0.3
max_hold_frames = 1.0
horizontal_speed = 0.4
"#;

struct Toy {
    dir: tempfile::TempDir,
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), TOY).unwrap();
        std::fs::write(dir.path().join("jumps.toml"), JUMPS).unwrap();
        Toy { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> i32 {
        let config = self.path("run.toml");
        let mut full = vec!["gameblend".to_string(), "--config".into(), config.display().to_string()];
        full.extend(args.iter().map(|a| a.to_string()));
        run_from_args(full)
    }

    fn train(&self, out: &str) -> PathBuf {
        let p = self.path(out);
        assert_eq!(self.run(&["train", "--out", p.to_str().unwrap()]), 0);
        p
    }
}

fn files_with(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let toy = Toy::new();
    let a = std::fs::read(toy.train("a.ck")).unwrap();
    let b = std::fs::read(toy.train("b.ck")).unwrap();
    assert_eq!(a, b);
    assert_eq!(toy.run(&["train", "--seed", "5", "--out", toy.path("c.ck").to_str().unwrap()]), 0);
    assert_ne!(std::fs::read(toy.path("c.ck")).unwrap(), a);
}

#[test]
fn sample_layout_and_play() {
    let toy = Toy::new();
    let ck = toy.train("m.ck");
    let ck = ck.to_str().unwrap();
    let samples = toy.path("samples");
    let code = toy.run(&[
        "sample", "--ckpt", ck, "--weights", "0.5,0.5", "-n", "5", "--dir", "1001",
        "--out", samples.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(files_with(&samples, "txt"), 5);
    assert_eq!(files_with(&samples, "meta"), 5);
    let meta = std::fs::read_to_string(samples.join("seg_002.meta")).unwrap();
    assert!(meta.contains("dir=1001") && meta.contains("index=2"), "{meta}");

    assert_eq!(toy.run(&["layout", "--ckpt", ck, "--kind", "dungeon", "-n", "3", "--weights", "10"]), 0);
    let level = toy.path("out/levels/level.txt");
    assert!(std::fs::read_to_string(toy.path("out/levels/level.layout.toml"))
        .unwrap()
        .contains("[[location]]"));

    let seg = samples.join("seg_000.txt");
    assert_eq!(toy.run(&["play", seg.to_str().unwrap(), "--ckpt", ck]), 0);
    assert_eq!(toy.run(&["play", level.to_str().unwrap(), "--ckpt", ck, "--weights", "1,1"]), 0);
}

#[test]
fn eval_binary_covers_every_binary_weight() {
    let toy = Toy::new();
    let four = TOY
        .replace("games = 2", "games = 4")
        .replace("jump_params = \"jumps.toml\"\n", "");
    std::fs::write(toy.path("run.toml"), four).unwrap();
    let ck = toy.train("m.ck");
    let out = toy.path("report");
    let code = toy.run(&["eval", "--ckpt", ck.to_str().unwrap(), "--binary", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("classification.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 15);
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["seed"], 4);
    assert!(v["config_hash"].as_str().is_some_and(|h| !h.is_empty()));
}

#[test]
fn ingest_writes_dataset() {
    let toy = Toy::new();
    assert_eq!(toy.run(&["ingest"]), 0);
    let text = std::fs::read_to_string(toy.path("out/dataset.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seed"], 4);
    assert_eq!(v["games"], serde_json::json!(["synth-a", "synth-b"]));
    assert_eq!(v["segments"].as_array().unwrap().len(), 20);
}

#[test]
fn exit_codes() {
    let toy = Toy::new();
    assert_eq!(run_from_args(["gameblend", "frobnicate"]), 1);
    assert_eq!(run_from_args(["gameblend", "--help"]), 0);
    // No config means no seed and no corpus.
    assert_eq!(run_from_args(["gameblend", "train"]), 1);
    let missing = toy.path("missing.ck");
    let m = missing.to_str().unwrap();
    assert_eq!(toy.run(&["sample", "--ckpt", m, "--weights", "10"]), 2);

    let ck = toy.train("m.ck");
    let ck = ck.to_str().unwrap();
    assert_eq!(toy.run(&["sample", "--ckpt", ck, "--weights", "0,0"]), 1);
    assert_eq!(toy.run(&["sample", "--ckpt", ck, "--weights", "1,0,0"]), 1);
    assert_eq!(toy.run(&["sample", "--ckpt", ck, "--weights", "10", "--dir", "xyz"]), 1);

    std::fs::write(toy.path("bad.toml"), TOY.replace("[corpus]\nsynthetic = { games = 2, per_game = 10, seed = 1 }", "[corpus]\nmanifest = \"absent.toml\"")).unwrap();
    let bad = toy.path("bad.toml");
    assert_eq!(run_from_args(["gameblend", "--config", bad.to_str().unwrap(), "train"]), 2);
}
