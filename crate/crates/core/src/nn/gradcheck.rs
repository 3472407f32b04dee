use super::params::blocks_per_layer;
use super::{Batch, LayerKind, ModelSpec, Network, NnError, ParamSet};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Weight(usize),
    Bias(usize),
}

/// One free parameter: a block and the stored entries it controls (several
/// for a tie group).
struct Coordinate {
    block: usize,
    members: Vec<Slot>,
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Free parameters perturbed (tie groups count once).
    pub coordinates: usize,
    /// `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)` over all coordinates.
    pub rel_error: f64,
    pub max_abs_diff: f64,
}

fn coordinates(net: &Network, params: &ParamSet<f64>) -> Vec<Coordinate> {
    let spec = net.spec();
    let mut out = Vec::new();
    let mut block = 0;
    for (layer, n) in blocks_per_layer(spec).into_iter().enumerate() {
        match (&spec.layers[layer].kind, net.layout(layer)) {
            (LayerKind::MaskedTiedDense { .. }, Some(map)) => {
                for group in map.groups() {
                    out.push(Coordinate {
                        block,
                        members: group.iter().map(|&e| Slot::Weight(e)).collect(),
                    });
                }
                if !params.blocks[block].bias.is_empty() {
                    let mut groups = vec![Vec::new(); map.bias_group_count()];
                    for row in 0..map.dense_shape().0 {
                        groups[map.bias_group_of(row)].push(Slot::Bias(row));
                    }
                    out.extend(groups.into_iter().map(|members| Coordinate { block, members }));
                }
            }
            _ => {
                for b in block..block + n {
                    let p = &params.blocks[b];
                    out.extend((0..p.weight.len()).map(|i| Coordinate {
                        block: b,
                        members: vec![Slot::Weight(i)],
                    }));
                    out.extend((0..p.bias.len()).map(|i| Coordinate {
                        block: b,
                        members: vec![Slot::Bias(i)],
                    }));
                }
            }
        }
        block += n;
    }
    out
}

fn shift(params: &mut ParamSet<f64>, c: &Coordinate, delta: f64) {
    let block = &mut params.blocks[c.block];
    for slot in &c.members {
        match *slot {
            Slot::Weight(i) => block.weight.as_mut_slice()[i] += delta,
            Slot::Bias(i) => block.bias[i] += delta,
        }
    }
}

/// Compares [`Network::loss_and_grads`] against central differences of the
/// loss, perturbing every free parameter (each tie group as one scalar).
pub fn gradient_check(spec: &ModelSpec, params: &ParamSet<f64>, batch: &Batch<f64>, step: f64) -> Result<GradCheck, NnError> {
    let net = Network::new(spec.clone())?;
    let (_, grads) = net.loss_and_grads(params, batch)?;
    let coords = coordinates(&net, params);
    let mut work = params.clone();
    let (mut diff2, mut a2, mut n2, mut max_abs) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for c in &coords {
        shift(&mut work, c, step);
        let plus = net.loss_and_grads(&work, batch)?.0;
        shift(&mut work, c, -2.0 * step);
        let minus = net.loss_and_grads(&work, batch)?.0;
        // restore exactly rather than by a third shift
        for slot in &c.members {
            let (dst, src) = (&mut work.blocks[c.block], &params.blocks[c.block]);
            match *slot {
                Slot::Weight(i) => dst.weight.as_mut_slice()[i] = src.weight.as_slice()[i],
                Slot::Bias(i) => dst.bias[i] = src.bias[i],
            }
        }
        let numeric = (plus - minus) / (2.0 * step);
        // a tied gradient carries the group sum on every member
        let analytic = match c.members[0] {
            Slot::Weight(i) => grads.blocks[c.block].weight.as_slice()[i],
            Slot::Bias(i) => grads.blocks[c.block].bias[i],
        };
        let d = analytic - numeric;
        diff2 += d * d;
        a2 += analytic * analytic;
        n2 += numeric * numeric;
        max_abs = max_abs.max(d.abs());
    }
    let scale = a2.sqrt().max(n2.sqrt());
    Ok(GradCheck {
        coordinates: coords.len(),
        rel_error: if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale },
        max_abs_diff: max_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{AttentionSpec, ConvSpec, TieMode};
    use crate::nn::init_params;
    use crate::numerics::{split_rng, Matrix, Stream};

    fn batch(input: usize, n: usize, classes: usize, seed: u64) -> Batch<f64> {
        let mut rng = split_rng(seed, Stream::Synthetic);
        let inputs = Matrix::from_fn(n, input, |_, _| rng.uniform_in(-1.0, 1.0));
        let labels = (0..n).map(|_| rng.below(classes as u64) as usize).collect();
        Batch::new(inputs, labels).unwrap()
    }

    /// Non-zero biases so the check also covers them.
    fn jitter(params: &mut ParamSet<f64>, seed: u64) {
        let mut rng = split_rng(seed, Stream::Synthetic).at_block(9);
        for b in &mut params.blocks {
            for v in &mut b.bias {
                *v += rng.uniform_in(-0.1, 0.1);
            }
        }
    }

    fn check(spec: &ModelSpec, seed: u64) -> GradCheck {
        let mut params = init_params::<f64>(spec, seed).unwrap();
        jitter(&mut params, seed);
        let b = batch(spec.input_dim(), 5, spec.classes(), seed + 100);
        gradient_check(spec, &params, &b, FD_STEP).unwrap()
    }

    #[test]
    fn dense_models_all_slopes() {
        for p in [0.0, 0.01, 0.5, 1.0] {
            for (seed, hidden) in [(1, vec![]), (2, vec![6]), (3, vec![5, 4])] {
                let spec = ModelSpec::mlp(7, &hidden, 3, p);
                let r = check(&spec, seed);
                assert!(r.rel_error < 1e-6, "p={p} hidden={hidden:?}: {r:?}");
            }
        }
    }

    #[test]
    fn structured_models() {
        let conv = ConvSpec::new(2, 4, 6, 3, (2, 3)).unwrap();
        for mode in [TieMode::Lc, TieMode::Cnn] {
            for p in [0.0, 0.01, 0.5, 1.0] {
                let spec = ModelSpec::structured(conv, mode, 4, p);
                let r = check(&spec, 7);
                assert!(r.rel_error < 1e-6, "{mode} p={p}: {r:?}");
            }
        }
    }

    #[test]
    fn cnn_coordinates_are_groups() {
        let conv = ConvSpec::new(1, 4, 4, 2, (2, 2)).unwrap();
        let spec = ModelSpec::structured(conv, TieMode::Cnn, 3, 0.0);
        let r = check(&spec, 1);
        // 2·1·2·2 kernel values + 2 channel biases + head 3·8 + 3
        assert_eq!(r.coordinates, 8 + 2 + 24 + 3);
    }

    #[test]
    fn attention_model() {
        let att = AttentionSpec {
            channels: 2,
            height: 4,
            width: 4,
            patch: 2,
            heads: 2,
            head_dim: 3,
            outputs: 3,
        };
        let r = check(&ModelSpec::attention(att), 4);
        assert!(r.rel_error < 1e-6, "{r:?}");
    }
}
