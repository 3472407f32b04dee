//! SGD against ADAM, with and without warmup, on the minimal model.
//!
//! cargo run --release --example optimizer_grid
//!
//! Synthetic data keeps it quick; `lmc sweep optimizers` is the MNIST run.

use lmc_core::harness::run_sweep;
use lmc_core::optim::{lr_at, OptimizerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the warmup ramp: base/w at epoch 0, base from epoch w on
    let adam = OptimizerConfig::adam_high(20, 128).with_warmup(5);
    let ramp: Vec<String> = (0..8).map(|e| format!("{:.4}", lr_at(&adam, e))).collect();
    println!("ADAM high lr, 5 warmup epochs: {}", ramp.join(" "));

    let overrides: Vec<String> = [
        "dataset.name=\"synthetic\"",
        "dataset.train_per_class=64",
        "optimizer.epochs=20",
        "optimizer.batch_size=16",
        "model.hidden=[64]",
        "checkpoint_every=20",
    ]
    .map(String::from)
    .to_vec();
    let (_, rows) = run_sweep("optimizers", &overrides, std::path::Path::new("data"), None, false)?;
    println!("\n{:<18} {:>8} {:>8} {:>9}", "setting", "B_train", "B_test", "test acc");
    for r in &rows {
        println!(
            "{:<18} {:>8.4} {:>8.4} {:>9.4}",
            r.value,
            r.b_train,
            r.b_test,
            0.5 * (r.test_acc_a + r.test_acc_b)
        );
    }
    Ok(())
}
