//! Two SGD runs from one initialization, then the error along the straight
//! line between them.
//!
//! cargo run --release --example barrier_scan

use lmc_core::data::{synthetic, Augmentation, SeedTriple, Split, SyntheticSpec};
use lmc_core::lmc::{alpha_grid, barrier_scan, interpolate, DEFAULT_GRID};
use lmc_core::nn::{evaluate, init_params, ModelSpec};
use lmc_core::optim::{train, CheckpointSchedule, OptimizerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // noisy blobs, so the endpoints are not perfect
    let data = SyntheticSpec {
        classes: 10,
        noise: 1.0,
        ..SyntheticSpec::small()
    };
    let train_set = synthetic(&data, 0, Split::Train);
    let test_set = synthetic(&data, 0, Split::Test);

    let spec = ModelSpec::mlp(train_set.sample_len(), &[64, 64], data.classes, 0.0);
    let init = init_params::<f64>(&spec, 7)?;
    let config = OptimizerConfig::sgd_high(20, 32);

    // same trainer seed, different loader seeds: only the data order differs
    let run = |loader| {
        train(
            &spec,
            &init,
            &train_set,
            &config,
            &SeedTriple::new(7, loader, 0),
            Augmentation::None,
            &CheckpointSchedule::default(),
        )
    };
    let a = run(43)?;
    let b = run(118)?;

    let report = barrier_scan(&spec, &a.params, &b.params, &train_set, &test_set, DEFAULT_GRID)?;
    print!("{}", report.summary());
    println!();
    print!("{}", report.to_csv());

    // the midpoint model by hand
    let mid = interpolate(&a.params, &b.params, 0.5)?;
    let e = evaluate(&spec, &mid, &test_set)?;
    println!("\nmidpoint test error {:.4} (grid {:?})", e.error, alpha_grid(5)?);

    // a model against itself has no barrier
    let flat = barrier_scan(&spec, &a.params, &a.params, &train_set, &test_set, DEFAULT_GRID)?;
    assert_eq!(flat.b_test, 0.0);
    Ok(())
}
