//! SVG figures from barrier and sweep CSVs.
//!
//! cargo run --release --example plot [barrier.csv]

use lmc_core::harness::{emit_plot, PlotKind, SWEEP_HEADER};

const BARRIER: &str = "kind,alpha,train_error,test_error,train_loss,test_loss,b_train,b_test,nb_train,nb_test,lmc,diverged
grid,0,0.01,0.03,0.05,0.1,,,,,,
grid,0.25,0.02,0.04,0.08,0.12,,,,,,
grid,0.5,0.06,0.08,0.2,0.25,,,,,,
grid,0.75,0.02,0.04,0.08,0.12,,,,,,
grid,1,0.01,0.03,0.05,0.1,,,,,,
summary,,0.01,0.03,,,0.05,0.05,0.0515,0.0515,0,0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir();
    let barrier = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => BARRIER.to_string(),
    };
    let alpha = emit_plot(&barrier, PlotKind::BarrierVsAlpha)?;
    std::fs::write(dir.join("barrier_vs_alpha.svg"), &alpha)?;

    let mut sweep = format!("{SWEEP_HEADER}\n");
    for (series, values) in [("2-layer", [0.001, 0.002, 0.004]), ("8-layer", [0.02, 0.05, 0.12])] {
        for ((ds, acc), nb) in [("mnist", 0.98), ("cifar10", 0.55), ("cifar100", 0.25)].iter().zip(values) {
            let b = nb * acc;
            sweep += &format!("demo,{series},dataset,{ds},0,{b},{b},{nb},{nb},{acc},{acc},0,0,ok\n");
        }
    }
    let ladder = emit_plot(&sweep, PlotKind::BarrierVsDataset)?;
    std::fs::write(dir.join("barrier_vs_dataset.svg"), &ladder)?;

    // same input, same bytes
    assert_eq!(alpha, emit_plot(&barrier, PlotKind::BarrierVsAlpha)?);
    println!("wrote {} and {}", dir.join("barrier_vs_alpha.svg").display(), dir.join("barrier_vs_dataset.svg").display());
    Ok(())
}
