//! End-to-end runs of the `mms` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mms(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mms"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn csv_column(text: &str, row: usize, name: &str) -> String {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(col).unwrap().to_string()
}

#[test]
fn gen_then_enumerate_finds_two_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let gen = mms(
        &["gen", "--kind", "disconnected_example", "--out", "f.json"],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let out = mms(&["enumerate", "f.json"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let footer: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
    assert_eq!(footer["footer"]["count"], 2);
    assert_eq!(footer["footer"]["complete"], true);
}

#[test]
fn analyze_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    mms(
        &["gen", "--kind", "disconnected_example", "--out", "f.json"],
        dir.path(),
    );
    let out = mms(&["analyze", "f.json", "--kind", "reduced", "--k", "2,3"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(csv_column(&text, 0, "components"), "2");
    assert_eq!(csv_column(&text, 1, "components"), "1");
}

#[test]
fn analyze_accepts_negative_gammas() {
    let dir = tempfile::tempdir().unwrap();
    mms(
        &["gen", "--kind", "example1", "--block", "b", "--out", "b.json"],
        dir.path(),
    );
    let out = mms(
        &["analyze", "b.json", "--kind", "simple", "--gamma", "-1,0,2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mms(&["sample", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(mms(&["frobnicate"], dir.path()).status.code(), Some(2));
    mms(
        &["gen", "--kind", "disconnected_example", "--out", "f.json"],
        dir.path(),
    );
    // Randomized runs need an explicit seed.
    assert_eq!(mms(&["sample", "f.json"], dir.path()).status.code(), Some(2));
    assert_eq!(mms(&["gen", "--kind", "random"], dir.path()).status.code(), Some(2));
    assert_eq!(
        mms(&["sample", "f.json", "--ephemeral"], dir.path()).status.code(),
        Some(0)
    );
}

#[test]
fn run_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mms(&["enumerate", "missing.json"], dir.path()).status.code(), Some(1));
}

#[test]
fn sample_is_reproducible_and_respects_config() {
    let dir = tempfile::tempdir().unwrap();
    mms(
        &["gen", "--kind", "disconnected_example", "--out", "f.json"],
        dir.path(),
    );
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"algorithm": "reduced", "k": 3, "t": 7, "seed": 5}"#,
    )
    .unwrap();
    let a = mms(
        &["sample", "f.json", "--config", "cfg.json", "--samples", "20"],
        dir.path(),
    );
    let b = mms(
        &["sample", "f.json", "--config", "cfg.json", "--samples", "20"],
        dir.path(),
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let first: serde_json::Value = serde_json::from_str(stdout(&a).lines().next().unwrap()).unwrap();
    assert_eq!(first["iterations_used"], 7);
    assert_eq!(first["rng_seed"], 5);
    // A flag overrides the config file.
    let c = mms(&["sample", "f.json", "--config", "cfg.json", "--t", "3"], dir.path());
    let first: serde_json::Value = serde_json::from_str(stdout(&c).lines().next().unwrap()).unwrap();
    assert_eq!(first["iterations_used"], 3);
    // Unknown config keys are usage errors.
    std::fs::write(dir.path().join("bad.json"), r#"{"temperature": 3}"#).unwrap();
    let d = mms(&["sample", "f.json", "--config", "bad.json", "--seed", "1"], dir.path());
    assert_eq!(d.status.code(), Some(2));
}

fn write_example_blocks(dir: &Path) {
    std::fs::create_dir_all(dir.join("blocks")).unwrap();
    for b in ["a", "b", "c"] {
        let out = mms(
            &[
                "gen",
                "--kind",
                "example1",
                "--block",
                b,
                "--out",
                &format!("blocks/{b}.json"),
            ],
            dir,
        );
        assert!(out.status.success());
    }
}

#[test]
fn batch_marks_malformed_block_failed() {
    let dir = tempfile::tempdir().unwrap();
    write_example_blocks(dir.path());
    std::fs::write(dir.path().join("blocks/broken.json"), "{ not json").unwrap();
    let out = mms(
        &["batch", "blocks", "--out", "out", "--seed", "9", "--samples", "10"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let blocks = manifest["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 4);
    for b in blocks {
        let status = b["status"].as_str().unwrap();
        if b["file"] == "broken.json" {
            assert!(status.starts_with("failed:"));
        } else {
            assert_eq!(status, "enumerated-exact");
        }
    }
}

#[test]
fn batch_output_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    write_example_blocks(dir.path());
    for (workers, out) in [("1", "out1"), ("3", "out3")] {
        let run = mms(
            &[
                "batch",
                "blocks",
                "--out",
                out,
                "--workers",
                workers,
                "--seed",
                "21",
                "--samples",
                "100",
            ],
            dir.path(),
        );
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for b in ["a", "b", "c"] {
        let one = std::fs::read(dir.path().join(format!("out1/{b}.samples.jsonl"))).unwrap();
        let three = std::fs::read(dir.path().join(format!("out3/{b}.samples.jsonl"))).unwrap();
        assert_eq!(one, three);
    }
}

#[test]
fn evaluate_reports_exact_distance() {
    let dir = tempfile::tempdir().unwrap();
    write_example_blocks(dir.path());
    let run = mms(
        &["batch", "blocks", "--out", "out", "--seed", "2", "--samples", "200"],
        dir.path(),
    );
    assert!(run.status.success());
    let out = mms(
        &[
            "evaluate",
            "--blocks",
            "blocks",
            "--samples",
            "out",
            "--exact-limit",
            "100",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let value = |table: &str, label: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{table},{label},")))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("summary", "tvd_p_q") - 1.0 / 6.0).abs() < 1e-12);
    assert!((value("q", "1") - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(value("summary", "datasets"), 200.0);
}
