use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn mhs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhs-recon"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mhs(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const DATA: [&str; 4] = ["--out", "out", "--corpus", "out/corpus.csv"];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = DATA.to_vec();
    v.extend_from_slice(extra);
    v
}

fn full_pipeline(dir: &Path) {
    ok(dir, &["synth", "--out", "out", "--n-comments", "150"]);
    let mock = ["--world", "out/world.json"];
    ok(dir, &[&["annotate"][..], &with(&mock)].concat());
    ok(dir, &[&["annotate", "--condition", "persona"][..], &with(&mock)].concat());
    for cond in ["vanilla", "persona"] {
        ok(dir, &[&["analyze", "--condition", cond][..], &with(&[])].concat());
        ok(dir, &[&["reconstruct", "--condition", cond][..], &with(&[])].concat());
    }
    ok(dir, &[&["ablate"][..], &with(&[])].concat());
    ok(dir, &[&["baseline"][..], &with(&mock)].concat());
    ok(dir, &["report", "--out", "out"]);
}

/// Every output file except the response cache, whose line order follows
/// worker completion order.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir.join("out"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() != "cache.jsonl")
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_pipeline(a.path());
    full_pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name} differs between runs");
    }
    // A replay over the filled cache reproduces the same bytes.
    full_pipeline(a.path());
    assert_eq!(snapshot(a.path()), sa);
    for name in ["report.txt", "report.json", "cv_vanilla.json", "weights_persona.csv", "manifest_report.json"] {
        assert!(sa.contains_key(name), "missing {name}");
    }
    let report = String::from_utf8(sa["report.txt"].clone()).unwrap();
    assert!(report.contains("Formula ablation"));
    assert!(report.contains("Zero-shot"));
}

#[test]
fn annotate_is_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "out", "--n-comments", "10"]);
    let args = with(&["--world", "out/world.json"]);
    let first = ok(d, &[&["annotate"][..], &args].concat());
    assert!(first.starts_with("100 prompts, 100 new requests"), "{first}");
    let lines = std::fs::read_to_string(d.join("out/predictions_vanilla.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 100);
    let second = ok(d, &[&["annotate"][..], &args].concat());
    assert!(second.starts_with("100 prompts, 0 new requests"), "{second}");
}

#[test]
fn errors_are_single_json_lines_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = mhs(dir.path(), &["reconstruct", "--out", "out"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(line["level"], "error");
    assert_eq!(line["command"], "reconstruct");
    assert!(line["message"].as_str().unwrap().contains("--corpus"));

    let out = mhs(dir.path(), &["analyze", "--out", "out", "--corpus", "missing.csv"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.toml"),
        "out = \"out\"\nfolds = 3\nlambda = { fixed = 10.0 }\n[synth]\nn_comments = 60\nseed = 7\n",
    )
    .unwrap();
    ok(d, &["--config", "run.toml", "synth"]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("out/manifest_synth.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["synth"]["n_comments"], 60);
    assert_eq!(manifest["config"]["folds"], 3);

    ok(d, &["--config", "run.toml", "annotate", "--corpus", "out/corpus.csv", "--world", "out/world.json"]);
    ok(d, &["--config", "run.toml", "reconstruct", "--corpus", "out/corpus.csv", "--folds", "4", "--lambda", "0.5"]);
    let cv: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/cv_vanilla.json")).unwrap()).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 4);
    assert_eq!(cv["folds"][0]["lambda"], 0.5);

    std::fs::write(d.join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert!(!mhs(d, &["--config", "bad.toml", "synth"]).status.success());
}
