use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fri-forge"));
    c.env_remove("FRI_FORGE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn error_json(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {line}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_byte_reproducible() {
    let a = ok(&["--threads", "1", "generate", "--count", "50", "--snr", "15", "--seed", "3"]);
    let b = ok(&["--threads", "1", "generate", "--count", "50", "--snr", "15", "--seed", "3"]);
    let c = ok(&["--threads", "1", "generate", "--count", "50", "--snr", "15", "--seed", "4"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 50);
}

#[test]
fn thread_count_does_not_change_generated_data() {
    let a = ok(&["--threads", "1", "generate", "--count", "40", "--seed", "9"]);
    let b = bin()
        .env("FRI_FORGE_THREADS", "3")
        .args(["generate", "--count", "40", "--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(a, b.stdout);
}

#[test]
fn train_and_eval_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("kernel.json");
    fs::write(
        &kernel,
        r#"{"type":"bspline","params":{"init":"gaussian","k":52,"half_width":0.3,"sigma":0.038}}"#,
    )
    .unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for r in &runs {
        ok(&[
            "--threads", "1", "train", "--kernel", s(&kernel), "--budget", "tiny", "--epochs", "2", "--seed", "5", "--out", s(r),
        ]);
    }
    for f in ["config.json", "report.json", "loss.csv", "encoder.ckpt", "kernel.json", "optimizer.json"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let evals: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("eval{i}"))).collect();
    for e in &evals {
        ok(&[
            "--threads", "1", "eval", "--suite", "table1", "--model", s(&runs[0]), "--trials", "20", "--seed", "2", "--out", s(e),
        ]);
    }
    for f in ["cells.csv", "cells.json", "summary.csv", "plotdata.json"] {
        assert_eq!(fs::read(evals[0].join(f)).unwrap(), fs::read(evals[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn oracle_then_amplitudes_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.ndjson");
    let est = dir.path().join("e.ndjson");
    let amps = dir.path().join("a.ndjson");
    ok(&["generate", "--count", "3", "--seed", "1", "--out", s(&data)]);
    ok(&["oracle", "--input", s(&data), "--step", "0.01", "--out", s(&est)]);
    ok(&["amplitudes", "--input", s(&est), "--method", "gd", "--out", s(&amps)]);
    for line in fs::read_to_string(&amps).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["tau_hat"].as_array().unwrap().len(), 2);
        assert_eq!(v["a_hat"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn hw_map_reports_resistors() {
    let v: serde_json::Value = serde_json::from_slice(&ok(&["hw", "map", "--alpha1", "13.23", "--alpha2", "24.44"])).unwrap();
    assert!((v["ideal"]["r1"].as_f64().unwrap() - 75_586.0).abs() < 1.0);
    assert!((v["ideal"]["r2"].as_f64().unwrap() - 40_917.0).abs() < 1.0);
    assert_eq!(v["series"]["realization"]["r1"].as_f64().unwrap(), 75_000.0);
}

#[test]
fn kernel_dump_writes_csv() {
    let out = String::from_utf8(ok(&["kernel", "dump", "--points", "601"])).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,g"));
    assert_eq!(lines.count(), 601);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();

    let usage = run(&["generate", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(error_json(&usage)["error"]["kind"], "usage");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"type":"gaussian","params":{"sigma":-1}}"#).unwrap();
    let config = run(&["kernel", "dump", "--config", s(&bad)]);
    assert_eq!(config.status.code(), Some(2));
    assert_eq!(error_json(&config)["error"]["exit_code"], 2);

    let rec = dir.path().join("dup.ndjson");
    fs::write(
        &rec,
        r#"{"y":[1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21],"tau":[0.1,0.2],"a":[1,1],"grid":{"n":21,"t_start":-0.78,"t_s":0.0761904761904762},"tau_hat":[0.1,0.1]}"#,
    )
    .unwrap();
    let numeric = run(&["amplitudes", "--input", s(&rec)]);
    assert_eq!(numeric.status.code(), Some(3), "{}", String::from_utf8_lossy(&numeric.stderr));
    assert_eq!(error_json(&numeric)["error"]["kind"], "rank_deficient");

    let infeasible = run(&["hw", "map", "--alpha1", "13.23", "--alpha2", "24.44", "--c1", "1e-6", "--c2", "1e-4"]);
    assert_eq!(infeasible.status.code(), Some(4), "{}", String::from_utf8_lossy(&infeasible.stderr));

    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

const HELP_PATHS: &[&[&str]] = &[
    &[],
    &["generate"],
    &["train"],
    &["eval"],
    &["oracle"],
    &["amplitudes"],
    &["hw"],
    &["hw", "map"],
    &["hw", "simulate-bench"],
    &["kernel"],
    &["kernel", "dump"],
    &["encoder"],
    &["encoder", "info"],
];

// Regenerate with `UPDATE_GOLDEN=1 cargo test --test cli golden_help`.
#[test]
fn golden_help() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for path in HELP_PATHS {
        let mut args: Vec<&str> = path.to_vec();
        args.push("--help");
        let text = String::from_utf8(ok(&args)).unwrap();
        let name = if path.is_empty() { "fri-forge".to_string() } else { path.join("-") };
        let file = golden.join(format!("{name}.txt"));
        if update {
            fs::create_dir_all(&golden).unwrap();
            fs::write(&file, &text).unwrap();
            continue;
        }
        let want = fs::read_to_string(&file).unwrap_or_else(|_| panic!("missing golden file {}", file.display()));
        assert_eq!(text, want, "help for {name} changed");
    }
}

// Every flag clap knows about appears in the rendered help of its command.
#[test]
fn help_lists_every_flag() {
    fn walk(cmd: &clap::Command, path: Vec<String>) {
        let mut args: Vec<&str> = path.iter().map(String::as_str).collect();
        args.push("--help");
        let text = String::from_utf8(ok(&args)).unwrap();
        for arg in cmd.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(text.contains(&format!("--{long}")), "{path:?} help lacks --{long}");
            }
        }
        for sub in cmd.get_subcommands().filter(|c| c.get_name() != "help") {
            let mut p = path.clone();
            p.push(sub.get_name().to_string());
            walk(sub, p);
        }
    }
    let mut root = fri_forge::cli::command();
    root.build();
    walk(&root, Vec::new());
}
