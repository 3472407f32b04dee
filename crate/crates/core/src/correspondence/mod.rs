//! Structural ladder from dense to locally connected to convolutional layers.
//!
//! A stride-equals-kernel convolution without padding is a dense
//! `(C_o·H′·W′) × (C_i·H·W)` matrix with a fixed sparsity pattern (locality)
//! whose entries are tied across output positions (weight sharing). Dropping
//! the ties gives a locally connected layer; dropping the mask gives an MLP.
//! [`TieMap`] records both constraints so all three layers can be trained
//! through the same dense code path.

mod attention;
mod toeplitz;

use thiserror::Error;

pub use attention::{
    attention_forward, attention_probabilities, attention_tokens, AttentionSpec, ATTENTION_BLOCKS,
    LAYER_NORM_EPS, POS_INIT_BOUND,
};
pub(crate) use attention::{attention_blocks_init, backward as attention_backward, forward_cached as attention_forward_cached, AttentionCache};
pub use toeplitz::{
    conv_forward_oracle, count_biases, count_params, dense_from_conv, kernel_len, tied_gradient_reduce,
    toeplitz_layout, two_layer_param_count, ConvSpec, LayerVariant, TieMap, TieMode,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrespondenceError {
    #[error("spatial size {height}x{width} is not divisible by kernel {kernel:?}")]
    Indivisible {
        height: usize,
        width: usize,
        kernel: (usize, usize),
    },
    #[error("zero-sized channel, kernel or head dimension")]
    EmptyDimension,
    #[error("expected {expected} kernel values, got {got}")]
    KernelLength { expected: usize, got: usize },
    #[error("expected input of length {expected}, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("dense shape {got:?} does not match layout {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("tiemap text: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{split_rng, Matrix, Stream};

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = split_rng(seed, Stream::Init);
        (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect()
    }

    /// Receptive-field membership by direct geometric test, independent of
    /// the layout's enumeration order.
    fn in_field(spec: &ConvSpec, row: usize, col: usize) -> bool {
        let positions = spec.positions();
        let ow = spec.out_width();
        let (yo, xo) = ((row % positions) / ow, (row % positions) % ow);
        let hw = spec.height * spec.width;
        let (y, x) = ((col % hw) / spec.width, (col % hw) % spec.width);
        y / spec.kernel.0 == yo && x / spec.kernel.1 == xo
    }

    #[test]
    fn single_patch_layouts_coincide() {
        let spec = ConvSpec::new(1, 2, 2, 1, (2, 2)).unwrap();
        let lc = toeplitz_layout(&spec, TieMode::Lc).unwrap();
        let cnn = toeplitz_layout(&spec, TieMode::Cnn).unwrap();
        assert_eq!(lc.dense_shape(), (1, 4));
        assert_eq!(lc.active_count(), 4);
        assert_eq!(lc.groups(), cnn.groups());
    }

    #[test]
    fn four_by_four_layout_matches_brute_force() {
        let spec = ConvSpec::new(1, 4, 4, 1, (2, 2)).unwrap();
        let map = toeplitz_layout(&spec, TieMode::Cnn).unwrap();
        assert_eq!(map.dense_shape(), (4, 16));
        for row in 0..4 {
            let active: Vec<usize> = (0..16).filter(|&c| map.is_active(row, c)).collect();
            let expected: Vec<usize> = (0..16).filter(|&c| in_field(&spec, row, c)).collect();
            assert_eq!(active, expected);
            assert_eq!(active.len(), 4);
        }
        assert_eq!(map.group_count(), 4);
        assert!(map.groups().iter().all(|g| g.len() == 4));
    }

    #[test]
    fn mask_agrees_with_geometry_multichannel() {
        let spec = ConvSpec::new(2, 6, 4, 3, (3, 2)).unwrap();
        for mode in [TieMode::Lc, TieMode::Cnn] {
            let map = toeplitz_layout(&spec, mode).unwrap();
            let (rows, cols) = map.dense_shape();
            for r in 0..rows {
                for c in 0..cols {
                    assert_eq!(map.is_active(r, c), in_field(&spec, r, c), "({r},{c})");
                }
                let per_row = map.row_entries(r).count();
                assert_eq!(per_row * spec.height * spec.width, cols * 3 * 2);
            }
        }
    }

    #[test]
    fn group_cardinalities() {
        let spec = ConvSpec::new(3, 8, 8, 5, (4, 2)).unwrap();
        let cnn = toeplitz_layout(&spec, TieMode::Cnn).unwrap();
        assert_eq!(cnn.group_count(), 5 * 3 * 4 * 2);
        assert!(cnn.groups().iter().all(|g| g.len() == spec.positions()));
        let lc = toeplitz_layout(&spec, TieMode::Lc).unwrap();
        assert_eq!(lc.group_count(), 5 * spec.positions() * 3 * 4 * 2);
        assert!(lc.groups().iter().all(|g| g.len() == 1));
    }

    #[test]
    fn indivisible_dims_rejected() {
        assert!(matches!(
            ConvSpec::new(1, 5, 4, 1, (2, 2)),
            Err(CorrespondenceError::Indivisible { .. })
        ));
    }

    #[test]
    fn paper_scale_param_counts() {
        let spec = ConvSpec::new(3, 32, 32, 128, (4, 4)).unwrap();
        assert_eq!(count_params(&spec, LayerVariant::Cnn), 6_144);
        assert_eq!(count_params(&spec, LayerVariant::Lc), 393_216);
        assert_eq!(count_params(&spec, LayerVariant::Mlp), 25_165_824);
        let millions = |v| two_layer_param_count(&spec, v, 10) as f64 / 1e6;
        assert_eq!(format!("{:.2}", millions(LayerVariant::Cnn)), "0.09");
        assert_eq!(format!("{:.2}", millions(LayerVariant::Lc)), "0.48");
        assert_eq!(format!("{:.2}", millions(LayerVariant::Mlp)), "25.26");
    }

    #[test]
    fn all_ones_kernel_sums_patch() {
        let spec = ConvSpec::new(1, 2, 2, 1, (2, 2)).unwrap();
        let input = [0.5, 1.5, -2.0, 4.0];
        let out = conv_forward_oracle(&spec, TieMode::Cnn, &[1.0; 4], &input).unwrap();
        assert_eq!(out, vec![4.0]);
    }

    #[test]
    fn delta_kernel_subsamples() {
        let spec = ConvSpec::new(1, 4, 4, 1, (2, 2)).unwrap();
        let input: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let out = conv_forward_oracle(&spec, TieMode::Cnn, &[1.0, 0.0, 0.0, 0.0], &input).unwrap();
        assert_eq!(out, vec![0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn dense_embedding_matches_direct_convolution() {
        let specs = [
            ConvSpec::new(1, 4, 4, 2, (2, 2)).unwrap(),
            ConvSpec::new(3, 6, 9, 4, (3, 3)).unwrap(),
            ConvSpec::new(2, 8, 4, 3, (4, 1)).unwrap(),
        ];
        for (i, spec) in specs.iter().enumerate() {
            for mode in [TieMode::Lc, TieMode::Cnn] {
                let kernel = random_vec(kernel_len(spec, mode), i as u64);
                let input = random_vec(spec.input_len(), 100 + i as u64);
                let direct = conv_forward_oracle(spec, mode, &kernel, &input).unwrap();
                let dense = dense_from_conv(spec, &kernel, mode).unwrap();
                let x = Matrix::from_vec(spec.input_len(), 1, input).unwrap();
                let via_dense = dense.matmul(&x).unwrap();
                for (a, b) in direct.iter().zip(via_dense.as_slice()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_kernel_gives_zero_matrix() {
        let spec = ConvSpec::new(2, 4, 4, 2, (2, 2)).unwrap();
        let dense = dense_from_conv(&spec, &vec![0.0f64; kernel_len(&spec, TieMode::Cnn)], TieMode::Cnn).unwrap();
        assert!(dense.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_gather_round_trip() {
        let spec = ConvSpec::new(2, 4, 6, 3, (2, 3)).unwrap();
        for mode in [TieMode::Lc, TieMode::Cnn] {
            let kernel = random_vec(kernel_len(&spec, mode), 9);
            let map = toeplitz_layout(&spec, mode).unwrap();
            let dense = dense_from_conv(&spec, &kernel, mode).unwrap();
            assert_eq!(map.gather(&dense).unwrap(), kernel);
            assert!(map.respects_ties(&dense));
        }
    }

    #[test]
    fn kernel_length_checked() {
        let spec = ConvSpec::new(1, 4, 4, 1, (2, 2)).unwrap();
        assert!(matches!(
            dense_from_conv(&spec, &[1.0f64; 3], TieMode::Cnn),
            Err(CorrespondenceError::KernelLength { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn lc_reduce_is_masked_passthrough() {
        let spec = ConvSpec::new(1, 4, 4, 2, (2, 2)).unwrap();
        let map = toeplitz_layout(&spec, TieMode::Lc).unwrap();
        let (rows, cols) = map.dense_shape();
        let grad = Matrix::from_fn(rows, cols, |r, c| (r * cols + c) as f64);
        let reduced = tied_gradient_reduce(&grad, &map).unwrap();
        let expected: Vec<f64> = map.groups().iter().map(|g| g[0] as f64).collect();
        assert_eq!(reduced, expected);
    }

    #[test]
    fn cnn_reduce_sums_positions() {
        let spec = ConvSpec::new(1, 6, 6, 2, (2, 3)).unwrap();
        let map = toeplitz_layout(&spec, TieMode::Cnn).unwrap();
        let (rows, cols) = map.dense_shape();
        let g = 0.25;
        let grad = Matrix::from_fn(rows, cols, |_, _| g);
        let reduced = tied_gradient_reduce(&grad, &map).unwrap();
        assert!(reduced.iter().all(|&v| v == spec.positions() as f64 * g));
    }

    #[test]
    fn text_export_round_trips() {
        let spec = ConvSpec::new(2, 4, 4, 2, (2, 2)).unwrap();
        for mode in [TieMode::Lc, TieMode::Cnn] {
            let map = toeplitz_layout(&spec, mode).unwrap();
            let text = map.to_text();
            assert_eq!(text, map.to_text());
            assert!(text.starts_with("tiemap v1\nspec in_channels=2 height=4 width=4 out_channels=2 kernel=2x2 mode="));
            assert_eq!(TieMap::from_text(&text).unwrap(), map);
        }
        assert!(TieMap::from_text("tiemap v2\n").is_err());
    }

    #[test]
    fn vit_like_param_count() {
        let spec = AttentionSpec::vit_like(3, 32, 32, 10);
        assert_eq!(spec.model_dim(), 384);
        assert_eq!(spec.tokens(), 64);
        // 48*384+384 + 64*384 + 4*(384^2+384) + 2*384 + 10*384+10
        assert_eq!(spec.param_count(), 18_816 + 24_576 + 591_360 + 768 + 3_850);
    }
}
