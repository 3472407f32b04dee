//! The full paired experiment through the harness: shared init, two runs
//! under different data orders, final scan, trajectory and output files.
//!
//! cargo run --release --example train_pair [preset] [epochs]
//!
//! Uses MNIST under `$LMC_DATA_ROOT` (default `data/`) when present and
//! falls back to the synthetic blobs otherwise.

use std::path::PathBuf;

use lmc_core::harness::{apply_overrides, preset, run_pair};
use lmc_core::numerics::Precision;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("mlp1-relu-sgd-high", String::as_str);
    let epochs: usize = args.get(2).map_or(Ok(5), |s| s.parse())?;
    let root = PathBuf::from(std::env::var("LMC_DATA_ROOT").unwrap_or_else(|_| "data".into()));

    let mut cfg = preset(name).ok_or_else(|| format!("no preset {name}"))?;
    cfg.optimizer.epochs = epochs;
    cfg.checkpoint_every = Some(1);
    cfg.precision = Precision::F32;
    if cfg.dataset.load(&root).is_err() {
        println!("no data under {}, using synthetic blobs", root.display());
        cfg = apply_overrides(&cfg, &["dataset.name=\"synthetic\"".into(), "dataset.train_per_class=64".into()])?;
    }
    println!("{}", cfg.to_toml());

    let out = std::env::temp_dir().join(format!("lmc-example-{name}"));
    let result = run_pair(&cfg, &root, Some(&out))?;
    let pair = &result.pairs[0];
    print!("{}", pair.report.summary());
    println!("\nepoch  B_test (first {} samples)", cfg.trajectory_samples.unwrap_or(0));
    for (epoch, r) in &pair.trajectory {
        println!("{epoch:>5}  {:.4}", r.b_test);
    }
    println!("\nfiles:");
    for path in &result.artifacts {
        println!("  {}", path.display());
    }
    Ok(())
}
