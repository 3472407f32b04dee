//! A stride-equals-kernel convolution, its locally connected relative and
//! the dense matrix both live in.
//!
//! cargo run --release --example toeplitz

use lmc_core::correspondence::{
    conv_forward_oracle, dense_from_conv, kernel_len, toeplitz_layout, two_layer_param_count, ConvSpec, LayerVariant,
    TieMode,
};
use lmc_core::numerics::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 1 input channel, 4×4 image, 2 filters of 2×2
    let spec = ConvSpec::new(1, 4, 4, 2, (2, 2))?;
    let input: Vec<f64> = (0..spec.input_len()).map(|i| i as f64).collect();

    for mode in [TieMode::Cnn, TieMode::Lc] {
        let kernel: Vec<f64> = (0..kernel_len(&spec, mode)).map(|i| 0.1 * (i % 7) as f64 - 0.3).collect();
        let direct = conv_forward_oracle(&spec, mode, &kernel, &input)?;
        let dense = dense_from_conv(&spec, &kernel, mode)?;
        let x = Matrix::from_vec(spec.input_len(), 1, input.clone())?;
        let via_dense = dense.matmul(&x)?;
        let err = direct
            .iter()
            .zip(via_dense.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let map = toeplitz_layout(&spec, mode)?;
        println!(
            "{mode}: dense {:?}, {} active entries in {} tie groups, max |conv - dense| = {err:.1e}",
            map.dense_shape(),
            map.active_count(),
            map.group_count()
        );
    }

    // sparsity pattern of the CNN embedding, one row per output unit
    println!("\n{}", toeplitz_layout(&spec, TieMode::Cnn)?.to_text());

    // C_o=128, C_i=3, 32×32 input, 4×4 kernel, 10-class head
    let big = ConvSpec::new(3, 32, 32, 128, (4, 4))?;
    for v in [LayerVariant::Cnn, LayerVariant::Lc, LayerVariant::Mlp] {
        let n = two_layer_param_count(&big, v, 10);
        println!("{v:?}: {n} parameters ({:.2}M)", n as f64 / 1e6);
    }
    Ok(())
}
