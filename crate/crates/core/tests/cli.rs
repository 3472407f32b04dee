//! The `lmc` binary end to end, on synthetic data.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmc"))
        .args(args)
        .env_remove("LMC_DATA_ROOT")
        .output()
        .expect("spawn lmc")
}

const TINY: [&str; 10] = [
    "--set",
    "dataset.name=\"synthetic\"",
    "--set",
    "dataset.train_per_class=24",
    "--set",
    "optimizer.epochs=2",
    "--set",
    "model.hidden=[16]",
    "--set",
    "optimizer.batch_size=16",
];

fn run_tiny(out: &Path) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec!["--out", out, "--threads", "1", "run", "mlp1-relu-sgd-high"];
    args.extend_from_slice(&TINY);
    lmc(&args)
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn verify_barrier_math_passes() {
    let out = lmc(&["verify", "barrier-math"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn unknown_names_exit_nonzero() {
    assert!(!lmc(&["verify", "nonsense"]).status.success());
    assert!(!lmc(&["run", "no-such-preset"]).status.success());
    assert!(!lmc(&["sweep", "no-such-sweep"]).status.success());
}

#[test]
fn presets_lists_runs_and_sweeps() {
    let text = String::from_utf8(lmc(&["presets"]).stdout).unwrap();
    assert!(text.lines().any(|l| l == "mlp1-relu-sgd-high"));
    assert!(text.lines().any(|l| l == "linear8-mnist-adam-med-bs1024"));
    assert!(text.lines().any(|l| l == "sweep architecture"));
}

#[test]
fn run_writes_the_layout_and_reruns_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let r1 = run_tiny(d1.path());
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    assert!(run_tiny(d2.path()).status.success());

    let dir = d1.path().join("mlp1-relu-sgd-high");
    for f in ["config.toml", "summary.txt", "meta.json", "metrics_a.csv", "metrics_b.csv", "barrier.csv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    assert!(dir.join("checkpoints/init.ckpt").is_file());
    let barrier = fs::read_to_string(dir.join("barrier.csv")).unwrap();
    assert_eq!(barrier.lines().filter(|l| l.starts_with("grid,")).count(), 11);

    // everything but the wall-clock metadata must match
    let a: Vec<_> = read_all(&dir).into_iter().filter(|(n, _)| n != "meta.json").collect();
    let b: Vec<_> = read_all(&d2.path().join("mlp1-relu-sgd-high"))
        .into_iter()
        .filter(|(n, _)| n != "meta.json")
        .collect();
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between reruns");
    }

    // and the barrier CSV plots
    let svg = d1.path().join("alpha.svg");
    let p = lmc(&[
        "plot",
        dir.join("barrier.csv").to_str().unwrap(),
        "--kind",
        "barrier-vs-alpha",
        "--output",
        svg.to_str().unwrap(),
    ]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn config_file_round_trips_through_run() {
    let d = tempfile::tempdir().unwrap();
    assert!(run_tiny(d.path()).status.success());
    let saved = d.path().join("mlp1-relu-sgd-high/config.toml");
    let again = d.path().join("again");
    let out = lmc(&["--out", again.to_str().unwrap(), "run", saved.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(d.path().join("mlp1-relu-sgd-high/barrier.csv")).unwrap();
    let second = fs::read(again.join("mlp1-relu-sgd-high/barrier.csv")).unwrap();
    assert_eq!(first, second);
}
