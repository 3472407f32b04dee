//! Barrier as a function of the Leaky-ReLU slope, rendered to SVG.
//!
//! cargo run --release --example leaky_sweep [depth]
//!
//! Runs on synthetic data with a narrow network so it finishes in seconds;
//! drop the overrides (or use `lmc sweep leaky-slope-2`) for the MNIST run.

use lmc_core::harness::{emit_plot, run_sweep, PlotKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let depth = std::env::args().nth(1).unwrap_or_else(|| "4".into());
    let hidden = vec!["32"; depth.parse::<usize>()? - 1].join(",");
    let overrides: Vec<String> = vec![
        "dataset.name=\"synthetic\"".into(),
        "dataset.train_per_class=64".into(),
        "optimizer.epochs=10".into(),
        "optimizer.batch_size=16".into(),
        format!("model.hidden=[{hidden}]"),
        "checkpoint_every=10".into(),
    ];
    let name = format!("leaky-slope-{depth}");
    let (csv, rows) = run_sweep(&name, &overrides, std::path::Path::new("data"), None, false)?;

    println!("slope   B_train  B_test");
    for r in &rows {
        println!("{:<6}  {:.4}   {:.4}   {}", r.value, r.b_train, r.b_test, r.status);
    }
    let svg = emit_plot(&csv, PlotKind::BarrierVsSlope)?;
    let path = std::env::temp_dir().join(format!("{name}.svg"));
    std::fs::write(&path, svg)?;
    println!("\nplot: {}", path.display());
    Ok(())
}
