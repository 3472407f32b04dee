//! Loading, subsetting, seeded ordering and augmentation.
//!
//! cargo run --release --example data_loading
//!
//! Reads `$LMC_DATA_ROOT/mnist` (default `data/`); without it the synthetic
//! blobs stand in.

use std::path::PathBuf;

use lmc_core::data::{
    epoch_order, load_mnist, subset, synthetic, Augmentation, Dataset, SeedTriple, Split, SyntheticSpec,
};

fn ascii(pixels: &[f64], height: usize, width: usize) -> String {
    let ramp = [' ', '.', ':', 'o', '#'];
    let mut s = String::new();
    for y in 0..height {
        for x in 0..width {
            let v = pixels[y * width + x].clamp(0.0, 1.0);
            s.push(ramp[((v * 4.0).round()) as usize]);
        }
        s.push('\n');
    }
    s
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::var("LMC_DATA_ROOT").unwrap_or_else(|_| "data".into()));
    let full: Dataset = match load_mnist(&root, Split::Train) {
        Ok(ds) => ds,
        Err(e) => {
            println!("{e}; using synthetic blobs");
            synthetic(&SyntheticSpec::small(), 0, Split::Train)
        }
    };
    println!(
        "{}: {} images of {}x{}x{}, {} classes",
        full.name,
        full.len(),
        full.channels,
        full.height,
        full.width,
        full.classes
    );

    let per_class = full.class_counts().into_iter().min().unwrap_or(0).min(1000);
    let small = subset(&full, per_class, 0)?;
    println!("subset of {per_class} per class: {} images, counts {:?}", small.len(), small.class_counts());

    // the loader seed alone decides the order, epoch by epoch
    for seed in [43, 118] {
        let order = epoch_order(seed, 0, small.len());
        println!("loader seed {seed}, epoch 0 starts {:?}", &order[..8]);
    }
    assert_eq!(epoch_order(43, 3, 100), epoch_order(43, 3, 100));

    // the augmentation stream is keyed by (seed, epoch): epoch 0 twice, then epoch 1
    let seeds = SeedTriple::new(0, 43, 43);
    let (h, w) = (small.height, small.width);
    let first = [0usize];
    for epoch in [0, 0, 1] {
        let mut rng = seeds.augmentation_rng(epoch);
        let batch = small.batch::<f64>(&first, Some((&mut rng, Augmentation::TranslateFlip)));
        println!("augmentation seed 43, epoch {epoch}:");
        print!("{}", ascii(&batch.inputs.row(0)[..h * w], h, w));
    }
    Ok(())
}
