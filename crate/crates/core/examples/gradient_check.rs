//! Backprop against central finite differences for every layer kind.
//!
//! cargo run --release --example gradient_check

use lmc_core::correspondence::{AttentionSpec, ConvSpec, TieMode};
use lmc_core::nn::{gradient_check, init_params, Batch, ModelSpec, FD_STEP};
use lmc_core::numerics::{split_rng, Matrix, Stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let conv = ConvSpec::new(2, 4, 6, 3, (2, 3))?;
    let attention = AttentionSpec {
        channels: 1,
        height: 4,
        width: 4,
        patch: 2,
        heads: 2,
        head_dim: 3,
        outputs: 3,
    };
    let models = [
        ("logistic", ModelSpec::logistic(6, 3)),
        ("relu mlp", ModelSpec::mlp(6, &[5, 4], 3, 0.0)),
        ("leaky mlp p=0.1", ModelSpec::mlp(6, &[5], 3, 0.1)),
        ("deep linear", ModelSpec::mlp(6, &[4, 4, 4], 3, 1.0)),
        ("locally connected", ModelSpec::structured(conv, TieMode::Lc, 3, 0.0)),
        ("convolution", ModelSpec::structured(conv, TieMode::Cnn, 3, 0.0)),
        ("attention", ModelSpec::attention(attention)),
    ];

    let mut rng = split_rng(1, Stream::Synthetic);
    for (name, spec) in models {
        let params = init_params::<f64>(&spec, 3)?;
        let inputs = Matrix::from_fn(4, spec.input_dim(), |_, _| rng.uniform_in(-1.0, 1.0));
        let labels = (0..4).map(|_| rng.below(spec.classes() as u64) as usize).collect();
        let batch = Batch::new(inputs, labels)?;
        let g = gradient_check(&spec, &params, &batch, FD_STEP)?;
        let verdict = if g.rel_error < 1e-6 { "ok" } else { "MISMATCH" };
        println!(
            "{name:<18} {:>5} coordinates  rel error {:.2e}  {verdict}",
            g.coordinates, g.rel_error
        );
    }
    Ok(())
}
