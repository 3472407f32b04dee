//! The single-block attention model: patches, heads and parameter count.
//!
//! cargo run --release --example attention

use lmc_core::correspondence::{attention_forward, attention_probabilities, AttentionSpec};
use lmc_core::data::{synthetic, Split, SyntheticSpec};
use lmc_core::nn::{init_params, ModelSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 4×4 patches, 8 heads of 48
    for (name, c, h) in [("mnist", 1, 28), ("cifar", 3, 32)] {
        let spec = AttentionSpec::vit_like(c, h, h, 10);
        println!(
            "{name}: {} tokens of {} values, model dim {}, {} parameters",
            spec.tokens(),
            spec.patch_dim(),
            spec.model_dim(),
            spec.param_count()
        );
    }

    let data = SyntheticSpec::small();
    let images = synthetic(&data, 0, Split::Test);
    let spec = AttentionSpec {
        channels: data.channels,
        height: data.height,
        width: data.width,
        patch: 4,
        heads: 2,
        head_dim: 8,
        outputs: data.classes,
    };
    let model = ModelSpec::attention(spec);
    let params = init_params::<f64>(&model, 1)?;
    let batch = images.batch::<f64>(&[0, 1], None);

    let logits = attention_forward(&spec, &params, &batch)?;
    println!("\nlogits of sample 0: {:?}", logits.row(0));
    let probs = attention_probabilities(&spec, &params, &batch.inputs)?;
    // sample 0, head 0: each row is a distribution over the 4 tokens
    let p = &probs[0];
    for t in 0..p.rows() {
        let row: Vec<String> = p.row(t).iter().map(|v| format!("{v:.3}")).collect();
        println!("token {t} attends {}", row.join(" "));
    }
    Ok(())
}
