use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

use safediff_core::optimizer::auc_topk;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_corpus.txt")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safediff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_into(dir: &Path) -> PathBuf {
    ok(&["train", "--corpus", s(&corpus()), "--out-dir", s(dir), "--seed", "5", "--set", "steps=150"]);
    dir.join("model.ckpt")
}

/// One small checkpoint shared by the tests that only need a model.
fn checkpoint() -> &'static Path {
    static CKPT: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = CKPT.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let p = train_into(dir.path());
        (dir, p)
    });
    p
}

fn read_jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_corpus_is_a_usage_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let out = run(&["train", "--corpus", "no/such/corpus.txt", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/corpus.txt"));
}

#[test]
fn unknown_keys_and_bad_ranges_are_usage_errors() {
    for bad in ["temperature=1", "gamma=3", "task=retro"] {
        let out = run(&["generate", "--set", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
    let out = run(&["optimize", "--corpus", s(&corpus()), "--mode", "gpt_style_remask_excluded"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("o");
    std::fs::write(&cfg, r#"{"num_samples": 4, "seed": 9, "tau": 0.8}"#).unwrap();
    ok(&[
        "generate", "--config", s(&cfg), "--checkpoint", s(checkpoint()), "--corpus", s(&corpus()),
        "--out-dir", s(&out_dir), "--seed", "10",
    ]);
    let m = read_json(&out_dir.join("manifest.json"));
    assert_eq!(m["seed"], 10);
    assert_eq!(m["config"]["tau"], 0.8);
    assert!(m["checkpoint"]["hash"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(read_jsonl(&out_dir.join("results.jsonl")).len(), 4);
}

#[test]
fn same_seed_gives_identical_checkpoints_and_samples() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ca = std::fs::read(train_into(a.path())).unwrap();
    let cb = std::fs::read(train_into(b.path())).unwrap();
    assert_eq!(ca, cb);
    let mut results = Vec::new();
    for d in [&a, &b] {
        let out_dir = d.path().join("gen");
        ok(&[
            "generate", "--checkpoint", s(&d.path().join("model.ckpt")), "--corpus", s(&corpus()),
            "--out-dir", s(&out_dir), "--seed", "4", "--set", "num_samples=12",
        ]);
        results.push(std::fs::read(out_dir.join("results.jsonl")).unwrap());
    }
    assert_eq!(results[0], results[1]);
    let loss = std::fs::read_to_string(a.path().join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 151);
}

#[test]
fn denovo_emits_one_record_per_sample_and_metrics() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "generate", "--checkpoint", s(checkpoint()), "--corpus", s(&corpus()), "--out-dir", s(dir.path()),
        "--set", "num_samples=25", "--set", "csv=true",
    ]);
    let rows = read_jsonl(&dir.path().join("results.jsonl"));
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r["preserved"] == true && r["calls"].as_u64().unwrap() >= 1));
    let m = read_json(&dir.path().join("metrics.json"));
    assert_eq!(m["metrics"]["n"], 25);
    let csv = std::fs::read_to_string(dir.path().join("molecules.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
}

#[test]
fn linker_keeps_both_side_chains() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "generate", "--checkpoint", s(checkpoint()), "--corpus", s(&corpus()), "--out-dir", s(dir.path()),
        "--task", "linker", "--set", r#"inputs=["C1CCCCC12","C1CCOCC13"]"#, "--set", "num_samples=15",
        "--mcg-w", "2", "--mcg-gamma", "0.3",
    ]);
    for r in read_jsonl(&dir.path().join("results.jsonl")) {
        let seq = r["sequence"].as_str().unwrap();
        assert!(seq.starts_with("C1CCCCC12.") && seq.ends_with(".C1CCOCC13"), "{seq}");
        assert_eq!(r["preserved"], true);
    }
}

#[test]
fn template_errors_are_reported() {
    let out = run(&[
        "generate", "--oracle-corpus", s(&corpus()), "--task", "linker", "--set", r#"inputs=["CCO","CCN"]"#,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("attachment"));
}

#[test]
fn every_mode_runs_and_summary_auc_matches_results() {
    for mode in ["attach_only", "token_remask", "fragment_remask", "fragment_remask_mcg"] {
        let dir = TempDir::new().unwrap();
        ok(&[
            "optimize", "--checkpoint", s(checkpoint()), "--corpus", s(&corpus()), "--out-dir", s(dir.path()),
            "--task", "hit", "--mode", mode, "--set", "budget=40", "--set", "G=3000", "--set", "warmup=10",
            "--mcg-gamma", "0.2",
        ]);
        let rows = read_jsonl(&dir.path().join("results.jsonl"));
        let history: Vec<f64> = rows
            .iter()
            .filter(|r| r["fresh"] == true)
            .map(|r| r["score"].as_f64().unwrap())
            .collect();
        let summary = read_json(&dir.path().join("summary.json"));
        assert_eq!(summary["mode"], mode);
        assert_eq!(summary["oracle_calls"].as_u64().unwrap() as usize, history.len());
        assert!(history.len() <= 40);
        for k in [1, 10, 100] {
            let want = auc_topk(&history, k, 40);
            let got = summary[format!("auc_top{k}")].as_f64().unwrap();
            assert!((want - got).abs() < 1e-12, "{mode} k={k}: {want} vs {got}");
        }
    }
}

#[test]
fn lead_optimization_runs_from_one_molecule() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "optimize", "--checkpoint", s(checkpoint()), "--out-dir", s(dir.path()), "--task", "lead",
        "--set", "lead_molecule=C1CCNCC1CCO", "--set", "oracle=similarity", "--set", "budget=20",
        "--set", "G=2000",
    ]);
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["task"], "lead");
    assert!(summary["oracle_calls"].as_u64().unwrap() <= 20);
}

#[test]
fn eval_reads_plain_and_jsonl_files() {
    let dir = TempDir::new().unwrap();
    let plain = dir.path().join("mols.txt");
    std::fs::write(&plain, "CCO\nCCO\nC1CC1\nC(\n").unwrap();
    let out = ok(&["eval", "--set", &format!("molecules={}", s(&plain)), "--out-dir", s(dir.path())]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["validity"], 0.75);
    let jsonl = dir.path().join("r.jsonl");
    std::fs::write(&jsonl, "{\"sequence\":\"CCO\"}\n{\"sequence\":\"CCN\"}\n").unwrap();
    let out = ok(&["eval", "--set", &format!("molecules={}", s(&jsonl)), "--out-dir", s(dir.path())]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["uniqueness"], 1.0);
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
