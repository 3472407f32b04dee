//! Same seeds, same bytes: checkpoints, metrics and barrier CSVs.
//!
//! cargo run --release --example determinism

use lmc_core::data::{synthetic, Augmentation, SeedTriple, Split, SyntheticSpec};
use lmc_core::lmc::barrier_scan;
use lmc_core::nn::{init_params, read_checkpoint, read_checkpoint_header, write_checkpoint, ModelSpec};
use lmc_core::optim::{train, write_metrics_csv, CheckpointSchedule, OptimizerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = SyntheticSpec::small();
    let train_set = synthetic(&data, 0, Split::Train);
    let test_set = synthetic(&data, 0, Split::Test);
    let spec = ModelSpec::mlp(train_set.sample_len(), &[32], data.classes, 0.0);
    let config = OptimizerConfig::adam_medium(5, 16);

    let go = |seeds: SeedTriple| -> Result<_, Box<dyn std::error::Error>> {
        let init = init_params::<f64>(&spec, seeds.trainer)?;
        let out = train(
            &spec,
            &init,
            &train_set,
            &config,
            &seeds,
            Augmentation::TranslateFlip,
            &CheckpointSchedule::default(),
        )?;
        Ok((write_checkpoint(&spec, &out.params), write_metrics_csv(&out.log), out.params))
    };

    let a = SeedTriple::new(1, 43, 43);
    let b = SeedTriple::new(1, 118, 118);
    let (ckpt1, log1, pa) = go(a)?;
    let (ckpt2, log2, _) = go(a)?;
    let (ckpt3, _, pb) = go(b)?;
    println!("rerun, same seeds:      checkpoints equal = {}, logs equal = {}", ckpt1 == ckpt2, log1 == log2);
    println!("different loader seeds: checkpoints equal = {}", ckpt1 == ckpt3);

    let header = read_checkpoint_header(&ckpt1)?;
    println!("checkpoint: {} bytes, {header:?}", ckpt1.len());
    let back = read_checkpoint::<f64>(&spec, &ckpt1)?;
    assert!(back.bit_eq(&pa));

    let csv1 = barrier_scan(&spec, &pa, &pb, &train_set, &test_set, 11)?.to_csv();
    let csv2 = barrier_scan(&spec, &pa, &pb, &train_set, &test_set, 11)?.to_csv();
    println!("barrier CSV reproducible = {}", csv1 == csv2);
    print!("\n{log1}");
    Ok(())
}
