use super::{LayerKind, ModelSpec, NnError};
use crate::correspondence::{attention_blocks_init, toeplitz_layout};
use crate::numerics::{split_rng, Matrix, Real, Stream};

/// One weight matrix with its bias vector. The bias may be empty (e.g.
/// position embeddings).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T = f64> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ParamBlock<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Self {
        Self { weight, bias }
    }

    pub fn zeros(rows: usize, cols: usize, bias_len: usize) -> Self {
        Self {
            weight: Matrix::zeros(rows, cols),
            bias: vec![T::zero(); bias_len],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.weight.rows(), self.weight.cols(), self.bias.len())
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer-ordered parameters Θ of a model. Attention layers own several
/// blocks; dense and structured layers own one each.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T = f64> {
    pub blocks: Vec<ParamBlock<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new(blocks: Vec<ParamBlock<T>>) -> Self {
        Self { blocks }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    let (r, c, n) = b.shape();
                    ParamBlock::zeros(r, c, n)
                })
                .collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        self.blocks.iter().map(ParamBlock::shape).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shapes() == other.shapes()
    }

    /// Total number of stored scalars, tied copies included.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every weight and bias buffer, in block order (weight before bias).
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.blocks
            .iter()
            .flat_map(|b| [b.weight.as_slice(), b.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [b.weight.as_mut_slice(), b.bias.as_mut_slice()])
    }

    /// All scalars flattened in [`ParamSet::slices`] order.
    pub fn to_flat(&self) -> Vec<T> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }

    /// `wa·self + wb·other`, elementwise.
    pub fn combine(&self, wa: T, other: &Self, wb: T) -> Result<Self, NnError> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (dst, src) in out.slices_mut().zip(other.slices()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = wa * *d + wb * s;
            }
        }
        Ok(out)
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<(), NnError> {
        self.check_same_shape(other)?;
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, &o) in dst.iter_mut().zip(src) {
                *d = *d + s * o;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for dst in self.slices_mut() {
            for d in dst {
                *d = *d * s;
            }
        }
    }

    /// Global L2 norm, accumulated in `f64`.
    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .flat_map(|s| s.iter())
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    weight: b.weight.cast(),
                    bias: b.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Bitwise equality (distinguishes `-0.0` from `0.0` and compares NaNs).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.same_shape(other)
            && self.slices().zip(other.slices()).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<(), NnError> {
        if !self.same_shape(other) {
            return Err(NnError::ParamShape(format!(
                "{:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )));
        }
        Ok(())
    }
}

/// Block shapes `spec` requires, in order.
pub(crate) fn expected_shapes(spec: &ModelSpec) -> Vec<(usize, usize, usize)> {
    let mut shapes = Vec::new();
    for layer in &spec.layers {
        match &layer.kind {
            LayerKind::Dense | LayerKind::MaskedTiedDense { .. } => {
                let bias = if layer.bias { layer.output } else { 0 };
                shapes.push((layer.output, layer.input, bias));
            }
            LayerKind::AttentionBlock { attention } => shapes.extend(attention.block_shapes()),
        }
    }
    shapes
}

/// Number of parameter blocks each layer owns.
pub(crate) fn blocks_per_layer(spec: &ModelSpec) -> Vec<usize> {
    spec.layers
        .iter()
        .map(|l| match &l.kind {
            LayerKind::AttentionBlock { attention } => attention.block_shapes().len(),
            _ => 1,
        })
        .collect()
}

/// Fan-in scaled uniform initialization drawn from the `Init` stream of
/// `trainer_seed`.
///
/// Weights are uniform on `±√(1/fan_in)` in row-major order, layer by layer;
/// biases start at zero. Structured layers draw one value per tie group (fan-in
/// `C_i·k₁·k₂`) and scatter it, so a CNN-mode layer starts exactly tied.
pub fn init_params<T: Real>(spec: &ModelSpec, trainer_seed: u64) -> Result<ParamSet<T>, NnError> {
    spec.validate()?;
    let mut rng = split_rng(trainer_seed, Stream::Init);
    let mut blocks = Vec::new();
    for layer in &spec.layers {
        let bias_len = if layer.bias { layer.output } else { 0 };
        match &layer.kind {
            LayerKind::Dense => {
                let bound = (1.0 / layer.input as f64).sqrt();
                let weight = Matrix::from_fn(layer.output, layer.input, |_, _| {
                    T::of(rng.uniform_in(-bound, bound))
                });
                blocks.push(ParamBlock::new(weight, vec![T::zero(); bias_len]));
            }
            LayerKind::MaskedTiedDense { conv, mode } => {
                let map = toeplitz_layout(conv, *mode)?;
                let bound = (1.0 / conv.fan_in() as f64).sqrt();
                let shared: Vec<T> = (0..map.group_count())
                    .map(|_| T::of(rng.uniform_in(-bound, bound)))
                    .collect();
                blocks.push(ParamBlock::new(map.scatter(&shared), vec![T::zero(); bias_len]));
            }
            LayerKind::AttentionBlock { attention } => {
                blocks.extend(attention_blocks_init(attention, &mut rng));
            }
        }
    }
    Ok(ParamSet::new(blocks))
}
