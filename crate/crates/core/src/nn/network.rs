use super::params::{blocks_per_layer, expected_shapes};
use super::{leaky_relu, leaky_relu_grad, Batch, LayerKind, ModelSpec, NnError, ParamBlock, ParamSet};
use crate::correspondence::{attention_backward, attention_forward_cached, toeplitz_layout, AttentionCache, TieMap};
use crate::data::Dataset;
use crate::numerics::{log_sum_exp, Matrix, Real};

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 2048;

/// A validated [`ModelSpec`] with its tie layouts built once.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    layouts: Vec<Option<TieMap>>,
    block_offsets: Vec<usize>,
    expected: Vec<(usize, usize, usize)>,
}

/// Error rate and accuracy over a dataset, plus the mean cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub error: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

enum LayerCache<T> {
    Linear { input: Matrix<T> },
    Attention { cache: Box<AttentionCache<T>> },
}

struct ForwardTrace<T> {
    caches: Vec<LayerCache<T>>,
    /// Pre-activation outputs of every non-final layer.
    pre: Vec<Matrix<T>>,
    logits: Matrix<T>,
}

impl Network {
    pub fn new(spec: ModelSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let layouts = spec
            .layers
            .iter()
            .map(|l| match &l.kind {
                LayerKind::MaskedTiedDense { conv, mode } => toeplitz_layout(conv, *mode).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut block_offsets = vec![0];
        for n in blocks_per_layer(&spec) {
            block_offsets.push(block_offsets.last().unwrap() + n);
        }
        let expected = expected_shapes(&spec);
        Ok(Self {
            spec,
            layouts,
            block_offsets,
            expected,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Tie layout of layer `layer`, if it is structured.
    pub fn layout(&self, layer: usize) -> Option<&TieMap> {
        self.layouts.get(layer).and_then(Option::as_ref)
    }

    pub fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<(), NnError> {
        if params.shapes() != self.expected {
            return Err(NnError::ParamShape(format!(
                "spec expects {:?}, got {:?}",
                self.expected,
                params.shapes()
            )));
        }
        Ok(())
    }

    fn layer_blocks<'a, T>(&self, params: &'a ParamSet<T>, layer: usize) -> &'a [ParamBlock<T>] {
        &params.blocks[self.block_offsets[layer]..self.block_offsets[layer + 1]]
    }

    fn run_forward<T: Real>(&self, params: &ParamSet<T>, inputs: &Matrix<T>) -> Result<ForwardTrace<T>, NnError> {
        self.check_params(params)?;
        if inputs.cols() != self.spec.input_dim() {
            return Err(NnError::InputWidth {
                expected: self.spec.input_dim(),
                got: inputs.cols(),
            });
        }
        let slope = T::of(self.spec.slope);
        let last = self.spec.layers.len() - 1;
        let mut caches = Vec::with_capacity(last + 1);
        let mut pre = Vec::with_capacity(last);
        let mut x = inputs.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let blocks = self.layer_blocks(params, i);
            let z = match &layer.kind {
                LayerKind::Dense => {
                    let mut z = x.matmul_t(&blocks[0].weight)?;
                    if !blocks[0].bias.is_empty() {
                        z.add_row_vector(&blocks[0].bias)?;
                    }
                    caches.push(LayerCache::Linear { input: x });
                    z
                }
                LayerKind::MaskedTiedDense { .. } => {
                    let map = self.layouts[i].as_ref().expect("built in new");
                    let zero_bias;
                    let bias = if blocks[0].bias.is_empty() {
                        zero_bias = vec![T::zero(); layer.output];
                        &zero_bias
                    } else {
                        &blocks[0].bias
                    };
                    let z = map.forward(&blocks[0].weight, bias, &x);
                    caches.push(LayerCache::Linear { input: x });
                    z
                }
                LayerKind::AttentionBlock { attention } => {
                    let (z, cache) = attention_forward_cached(attention, blocks, &x)?;
                    caches.push(LayerCache::Attention {
                        cache: Box::new(cache),
                    });
                    z
                }
            };
            if i < last {
                x = z.map(|v| leaky_relu(v, slope));
                pre.push(z);
            } else {
                return Ok(ForwardTrace {
                    caches,
                    pre,
                    logits: z,
                });
            }
        }
        unreachable!("spec has at least one layer")
    }

    /// Logits (no activation on the final layer).
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, inputs: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        Ok(self.run_forward(params, inputs)?.logits)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter block. Structured layers return tie-projected
    /// gradients: each tied entry carries its group's summed gradient and
    /// inactive entries are zero.
    pub fn loss_and_grads<T: Real>(&self, params: &ParamSet<T>, batch: &Batch<T>) -> Result<(T, ParamSet<T>), NnError> {
        self.loss_grads_correct(params, batch).map(|(loss, grads, _)| (loss, grads))
    }

    /// [`Network::loss_and_grads`] plus the number of correctly classified
    /// samples in the batch.
    pub fn loss_grads_correct<T: Real>(
        &self,
        params: &ParamSet<T>,
        batch: &Batch<T>,
    ) -> Result<(T, ParamSet<T>, usize), NnError> {
        let classes = self.spec.classes();
        if let Some(&label) = batch.labels.iter().find(|&&l| l >= classes) {
            return Err(NnError::LabelRange { label, classes });
        }
        let trace = self.run_forward(params, &batch.inputs)?;
        let n = batch.len();
        let inv_n = T::one() / T::from_usize(n.max(1));
        let mut loss = T::zero();
        let mut correct = 0;
        let mut grad = Matrix::zeros(n, classes);
        for (r, &label) in batch.labels.iter().enumerate() {
            let logits = trace.logits.row(r);
            if argmax(logits) == label {
                correct += 1;
            }
            let lse = log_sum_exp(logits);
            loss = loss + (lse - logits[label]);
            for (g, &z) in grad.row_mut(r).iter_mut().zip(logits) {
                *g = (z - lse).exp() * inv_n;
            }
            let g = grad.row_mut(r);
            g[label] = g[label] - inv_n;
        }
        let loss = loss * inv_n;
        if !loss.is_finite() {
            return Err(NnError::Diverged { loss: loss.as_f64() });
        }

        let slope = T::of(self.spec.slope);
        let mut grads: Vec<Vec<ParamBlock<T>>> = Vec::with_capacity(self.spec.layers.len());
        let mut upstream = grad;
        for i in (0..self.spec.layers.len()).rev() {
            if i < self.spec.layers.len() - 1 {
                let pre = &trace.pre[i];
                for (g, &z) in upstream.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g = *g * leaky_relu_grad(z, slope);
                }
            }
            let blocks = self.layer_blocks(params, i);
            let want_input = i > 0;
            let (layer_grads, dx) = match (&self.spec.layers[i].kind, &trace.caches[i]) {
                (LayerKind::Dense, LayerCache::Linear { input }) => {
                    let dw = upstream.t_matmul(input)?;
                    let db = if blocks[0].bias.is_empty() {
                        Vec::new()
                    } else {
                        upstream.column_sums()
                    };
                    let dx = if want_input {
                        Some(upstream.matmul(&blocks[0].weight)?)
                    } else {
                        None
                    };
                    (vec![ParamBlock::new(dw, db)], dx)
                }
                (LayerKind::MaskedTiedDense { .. }, LayerCache::Linear { input }) => {
                    let map = self.layouts[i].as_ref().expect("built in new");
                    let (dw, db, dx) = map.backward(&blocks[0].weight, input, &upstream, want_input);
                    let db = if blocks[0].bias.is_empty() { Vec::new() } else { db };
                    (vec![ParamBlock::new(dw, db)], dx)
                }
                (LayerKind::AttentionBlock { attention }, LayerCache::Attention { cache }) => {
                    attention_backward(attention, blocks, cache, &upstream, want_input)?
                }
                _ => unreachable!("cache kind follows layer kind"),
            };
            grads.push(layer_grads);
            match dx {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        grads.reverse();
        Ok((loss, ParamSet::new(grads.into_iter().flatten().collect()), correct))
    }

    /// Error rate `E = 1 − accuracy` of the argmax prediction, ties broken
    /// toward the lowest class index, plus the mean cross-entropy.
    pub fn evaluate<T: Real>(&self, params: &ParamSet<T>, dataset: &Dataset) -> Result<Evaluation, NnError> {
        let total = dataset.len();
        if total == 0 {
            return Err(NnError::EmptyDataset);
        }
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        let mut start = 0;
        while start < total {
            let end = (start + EVAL_CHUNK).min(total);
            let inputs = dataset.inputs_range::<T>(start..end);
            let logits = self.forward(params, &inputs)?;
            for r in 0..logits.rows() {
                let row = logits.row(r);
                let label = dataset.label(start + r);
                if argmax(row) == label {
                    correct += 1;
                }
                loss_sum += (log_sum_exp(row) - row[label]).as_f64();
            }
            start = end;
        }
        let accuracy = correct as f64 / total as f64;
        Ok(Evaluation {
            error: 1.0 - accuracy,
            accuracy,
            loss: loss_sum / total as f64,
            correct,
            total,
        })
    }
}

/// Index of the largest entry; the first one wins ties. NaN entries never win.
pub(crate) fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] || (row[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// One-shot [`Network::forward`].
pub fn forward<T: Real>(spec: &ModelSpec, params: &ParamSet<T>, batch: &Batch<T>) -> Result<Matrix<T>, NnError> {
    Network::new(spec.clone())?.forward(params, &batch.inputs)
}

/// One-shot [`Network::loss_and_grads`].
pub fn loss_and_grads<T: Real>(spec: &ModelSpec, params: &ParamSet<T>, batch: &Batch<T>) -> Result<(T, ParamSet<T>), NnError> {
    Network::new(spec.clone())?.loss_and_grads(params, batch)
}

/// One-shot [`Network::evaluate`].
pub fn evaluate<T: Real>(spec: &ModelSpec, params: &ParamSet<T>, dataset: &Dataset) -> Result<Evaluation, NnError> {
    Network::new(spec.clone())?.evaluate(params, dataset)
}
