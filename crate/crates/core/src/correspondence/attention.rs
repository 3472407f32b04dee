//! Simplified single-block vision transformer: patch embedding with learned
//! position embeddings, one multi-head self-attention block with no residual
//! connection and no MLP, layer normalization, mean pooling over tokens and a
//! linear classifier.

use serde::{Deserialize, Serialize};

use super::CorrespondenceError;
use crate::nn::{Batch, NnError, ParamBlock, ParamSet};
use crate::numerics::{softmax_in_place, Matrix, Real, Rng};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Position embeddings start uniform on `±POS_INIT_BOUND`.
pub const POS_INIT_BOUND: f64 = 0.02;

// Parameter block order inside an attention layer.
const EMBED: usize = 0;
const POS: usize = 1;
const QUERY: usize = 2;
const KEY: usize = 3;
const VALUE: usize = 4;
const OUT: usize = 5;
const NORM: usize = 6;
const HEAD: usize = 7;
pub const ATTENTION_BLOCKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Classifier outputs (class count).
    pub outputs: usize,
}

impl AttentionSpec {
    /// 8 heads of dimension 48 over 4×4 patches.
    pub fn vit_like(channels: usize, height: usize, width: usize, outputs: usize) -> Self {
        Self {
            channels,
            height,
            width,
            patch: 4,
            heads: 8,
            head_dim: 48,
            outputs,
        }
    }

    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        if self.patch == 0 || self.heads == 0 || self.head_dim == 0 || self.outputs == 0 || self.channels == 0 {
            return Err(CorrespondenceError::EmptyDimension);
        }
        if self.height % self.patch != 0 || self.width % self.patch != 0 || self.height == 0 || self.width == 0 {
            return Err(CorrespondenceError::Indivisible {
                height: self.height,
                width: self.width,
                kernel: (self.patch, self.patch),
            });
        }
        Ok(())
    }

    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn tokens(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch * self.patch
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// `(rows, cols, bias)` of every parameter block, in storage order.
    pub fn block_shapes(&self) -> Vec<(usize, usize, usize)> {
        let d = self.model_dim();
        vec![
            (d, self.patch_dim(), d),
            (self.tokens(), d, 0),
            (d, d, d),
            (d, d, d),
            (d, d, d),
            (d, d, d),
            (1, d, d),
            (self.outputs, d, self.outputs),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.block_shapes().iter().map(|(r, c, b)| r * c + b).sum()
    }
}

/// Initial attention blocks: fan-in uniform projections, small uniform
/// position embeddings, unit norm gain, zero biases.
pub(crate) fn attention_blocks_init<T: Real>(spec: &AttentionSpec, rng: &mut Rng) -> Vec<ParamBlock<T>> {
    let d = spec.model_dim();
    let mut uniform = |rows: usize, cols: usize, bound: f64| {
        Matrix::from_fn(rows, cols, |_, _| T::of(rng.uniform_in(-bound, bound)))
    };
    let proj_bound = (1.0 / d as f64).sqrt();
    let embed = uniform(d, spec.patch_dim(), (1.0 / spec.patch_dim() as f64).sqrt());
    let pos = uniform(spec.tokens(), d, POS_INIT_BOUND);
    let q = uniform(d, d, proj_bound);
    let k = uniform(d, d, proj_bound);
    let v = uniform(d, d, proj_bound);
    let o = uniform(d, d, proj_bound);
    let head = uniform(spec.outputs, d, proj_bound);
    let zeros = |n: usize| vec![T::zero(); n];
    vec![
        ParamBlock::new(embed, zeros(d)),
        ParamBlock::new(pos, Vec::new()),
        ParamBlock::new(q, zeros(d)),
        ParamBlock::new(k, zeros(d)),
        ParamBlock::new(v, zeros(d)),
        ParamBlock::new(o, zeros(d)),
        ParamBlock::new(Matrix::from_fn(1, d, |_, _| T::one()), zeros(d)),
        ParamBlock::new(head, zeros(spec.outputs)),
    ]
}

/// Intermediate values kept for the backward pass. Token rows are stacked
/// sample-major: row `b·N + t` is token `t` of sample `b`.
pub(crate) struct AttentionCache<T> {
    patches: Matrix<T>,
    embedded: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// Attention probabilities, index `b·heads + h`, each `N × N`.
    probs: Vec<Matrix<T>>,
    heads_out: Matrix<T>,
    normalized: Matrix<T>,
    inv_std: Vec<T>,
    /// Post-norm token representations.
    tokens: Matrix<T>,
    pooled: Matrix<T>,
}

impl<T: Real> AttentionCache<T> {
    /// Post-normalization, pre-pool token representations of sample `b`.
    pub(crate) fn sample_tokens(&self, b: usize, n: usize) -> Matrix<T> {
        let d = self.tokens.cols();
        let rows = self.tokens.as_slice()[b * n * d..(b + 1) * n * d].to_vec();
        Matrix::from_vec(n, d, rows).expect("token slice")
    }
}

fn patchify<T: Real>(spec: &AttentionSpec, x: &Matrix<T>) -> Matrix<T> {
    let (p, n, pd) = (spec.patch, spec.tokens(), spec.patch_dim());
    let pw = spec.width / p;
    let mut out = Matrix::zeros(x.rows() * n, pd);
    for b in 0..x.rows() {
        let img = x.row(b);
        for t in 0..n {
            let (py, px) = (t / pw, t % pw);
            let dst = out.row_mut(b * n + t);
            for c in 0..spec.channels {
                for dy in 0..p {
                    for dx in 0..p {
                        dst[(c * p + dy) * p + dx] =
                            img[(c * spec.height + py * p + dy) * spec.width + px * p + dx];
                    }
                }
            }
        }
    }
    out
}

fn unpatchify<T: Real>(spec: &AttentionSpec, patches: &Matrix<T>, batch: usize) -> Matrix<T> {
    let (p, n) = (spec.patch, spec.tokens());
    let pw = spec.width / p;
    let mut out = Matrix::zeros(batch, spec.input_len());
    for b in 0..batch {
        let img = out.row_mut(b);
        for t in 0..n {
            let (py, px) = (t / pw, t % pw);
            let src = patches.row(b * n + t);
            for c in 0..spec.channels {
                for dy in 0..p {
                    for dx in 0..p {
                        img[(c * spec.height + py * p + dy) * spec.width + px * p + dx] =
                            src[(c * p + dy) * p + dx];
                    }
                }
            }
        }
    }
    out
}

fn linear<T: Real>(x: &Matrix<T>, block: &ParamBlock<T>) -> Result<Matrix<T>, NnError> {
    let mut out = x.matmul_t(&block.weight)?;
    out.add_row_vector(&block.bias)?;
    Ok(out)
}

/// Copies columns `col..col+width` of rows `row..row+rows`.
fn sub<T: Real>(m: &Matrix<T>, row: usize, rows: usize, col: usize, width: usize) -> Matrix<T> {
    Matrix::from_fn(rows, width, |r, c| m.get(row + r, col + c))
}

fn put<T: Real>(dst: &mut Matrix<T>, row: usize, col: usize, src: &Matrix<T>) {
    for r in 0..src.rows() {
        dst.row_mut(row + r)[col..col + src.cols()].copy_from_slice(src.row(r));
    }
}

pub(crate) fn forward_cached<T: Real>(
    spec: &AttentionSpec,
    blocks: &[ParamBlock<T>],
    x: &Matrix<T>,
) -> Result<(Matrix<T>, AttentionCache<T>), NnError> {
    let (n, d, dh, heads) = (spec.tokens(), spec.model_dim(), spec.head_dim, spec.heads);
    let batch = x.rows();
    let patches = patchify(spec, x);
    let mut embedded = linear(&patches, &blocks[EMBED])?;
    let pos = &blocks[POS].weight;
    for b in 0..batch {
        for t in 0..n {
            for (e, &p) in embedded.row_mut(b * n + t).iter_mut().zip(pos.row(t)) {
                *e = *e + p;
            }
        }
    }
    let q = linear(&embedded, &blocks[QUERY])?;
    let k = linear(&embedded, &blocks[KEY])?;
    let v = linear(&embedded, &blocks[VALUE])?;
    let scale = T::one() / T::from_usize(dh).sqrt();

    let mut probs = Vec::with_capacity(batch * heads);
    let mut heads_out = Matrix::zeros(batch * n, d);
    for b in 0..batch {
        for h in 0..heads {
            let qh = sub(&q, b * n, n, h * dh, dh);
            let kh = sub(&k, b * n, n, h * dh, dh);
            let vh = sub(&v, b * n, n, h * dh, dh);
            let mut scores = qh.matmul_t(&kh)?;
            scores.scale(scale);
            for r in 0..n {
                softmax_in_place(scores.row_mut(r)).map_err(|_| NnError::Diverged { loss: f64::NAN })?;
            }
            let out = scores.matmul(&vh)?;
            put(&mut heads_out, b * n, h * dh, &out);
            probs.push(scores);
        }
    }
    let projected = linear(&heads_out, &blocks[OUT])?;

    let eps = T::of(LAYER_NORM_EPS);
    let gamma = blocks[NORM].weight.row(0);
    let beta = &blocks[NORM].bias;
    let mut normalized = Matrix::zeros(batch * n, d);
    let mut tokens = Matrix::zeros(batch * n, d);
    let mut inv_std = Vec::with_capacity(batch * n);
    let inv_d = T::one() / T::from_usize(d);
    for r in 0..batch * n {
        let row = projected.row(r);
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
        let istd = T::one() / (var + eps).sqrt();
        inv_std.push(istd);
        let xhat = normalized.row_mut(r);
        for (o, &v) in xhat.iter_mut().zip(row) {
            *o = (v - mean) * istd;
        }
        let xhat = normalized.row(r).to_vec();
        for (j, y) in tokens.row_mut(r).iter_mut().enumerate() {
            *y = gamma[j] * xhat[j] + beta[j];
        }
    }

    let inv_n = T::one() / T::from_usize(n);
    let mut pooled = Matrix::zeros(batch, d);
    for b in 0..batch {
        let dst = pooled.row_mut(b);
        for t in 0..n {
            for (p, &y) in dst.iter_mut().zip(tokens.row(b * n + t)) {
                *p = *p + y;
            }
        }
        for p in dst.iter_mut() {
            *p = *p * inv_n;
        }
    }
    let logits = linear(&pooled, &blocks[HEAD])?;
    Ok((
        logits,
        AttentionCache {
            patches,
            embedded,
            q,
            k,
            v,
            probs,
            heads_out,
            normalized,
            inv_std,
            tokens,
            pooled,
        },
    ))
}

fn linear_backward<T: Real>(
    x: &Matrix<T>,
    block: &ParamBlock<T>,
    grad_out: &Matrix<T>,
    want_input: bool,
) -> Result<(ParamBlock<T>, Option<Matrix<T>>), NnError> {
    let dw = grad_out.t_matmul(x)?;
    let db = if block.bias.is_empty() {
        Vec::new()
    } else {
        grad_out.column_sums()
    };
    let dx = if want_input {
        Some(grad_out.matmul(&block.weight)?)
    } else {
        None
    };
    Ok((ParamBlock::new(dw, db), dx))
}

pub(crate) fn backward<T: Real>(
    spec: &AttentionSpec,
    blocks: &[ParamBlock<T>],
    cache: &AttentionCache<T>,
    grad_logits: &Matrix<T>,
    want_input_grad: bool,
) -> Result<(Vec<ParamBlock<T>>, Option<Matrix<T>>), NnError> {
    let (n, d, dh, heads) = (spec.tokens(), spec.model_dim(), spec.head_dim, spec.heads);
    let batch = grad_logits.rows();

    let (g_head, d_pooled) = linear_backward(&cache.pooled, &blocks[HEAD], grad_logits, true)?;
    let d_pooled = d_pooled.expect("requested");

    // Mean pool: every token of sample b receives d_pooled[b] / N.
    let inv_n = T::one() / T::from_usize(n);
    let gamma = blocks[NORM].weight.row(0);
    let inv_d = T::one() / T::from_usize(d);
    let mut d_gamma = vec![T::zero(); d];
    let mut d_beta = vec![T::zero(); d];
    let mut d_projected = Matrix::zeros(batch * n, d);
    for b in 0..batch {
        let dy: Vec<T> = d_pooled.row(b).iter().map(|&g| g * inv_n).collect();
        for t in 0..n {
            let r = b * n + t;
            let xhat = cache.normalized.row(r);
            let mut dxhat = vec![T::zero(); d];
            for j in 0..d {
                d_gamma[j] = d_gamma[j] + dy[j] * xhat[j];
                d_beta[j] = d_beta[j] + dy[j];
                dxhat[j] = dy[j] * gamma[j];
            }
            let mean_dxhat = dxhat.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let mean_dxhat_xhat = dxhat
                .iter()
                .zip(xhat)
                .fold(T::zero(), |a, (&g, &x)| a + g * x)
                * inv_d;
            let istd = cache.inv_std[r];
            for (j, o) in d_projected.row_mut(r).iter_mut().enumerate() {
                *o = istd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
        }
    }
    let g_norm = ParamBlock::new(Matrix::from_vec(1, d, d_gamma)?, d_beta);

    let (g_out, d_heads) = linear_backward(&cache.heads_out, &blocks[OUT], &d_projected, true)?;
    let d_heads = d_heads.expect("requested");

    let scale = T::one() / T::from_usize(dh).sqrt();
    let mut dq = Matrix::zeros(batch * n, d);
    let mut dk = Matrix::zeros(batch * n, d);
    let mut dv = Matrix::zeros(batch * n, d);
    for b in 0..batch {
        for h in 0..heads {
            let probs = &cache.probs[b * heads + h];
            let qh = sub(&cache.q, b * n, n, h * dh, dh);
            let kh = sub(&cache.k, b * n, n, h * dh, dh);
            let vh = sub(&cache.v, b * n, n, h * dh, dh);
            let dout = sub(&d_heads, b * n, n, h * dh, dh);
            let d_probs = dout.matmul_t(&vh)?;
            let dvh = probs.t_matmul(&dout)?;
            let mut d_scores = Matrix::zeros(n, n);
            for r in 0..n {
                let p = probs.row(r);
                let g = d_probs.row(r);
                let dot = p.iter().zip(g).fold(T::zero(), |a, (&pi, &gi)| a + pi * gi);
                for (o, (&pi, &gi)) in d_scores.row_mut(r).iter_mut().zip(p.iter().zip(g)) {
                    *o = pi * (gi - dot) * scale;
                }
            }
            let dqh = d_scores.matmul(&kh)?;
            let dkh = d_scores.t_matmul(&qh)?;
            put(&mut dq, b * n, h * dh, &dqh);
            put(&mut dk, b * n, h * dh, &dkh);
            put(&mut dv, b * n, h * dh, &dvh);
        }
    }
    let (g_q, de_q) = linear_backward(&cache.embedded, &blocks[QUERY], &dq, true)?;
    let (g_k, de_k) = linear_backward(&cache.embedded, &blocks[KEY], &dk, true)?;
    let (g_v, de_v) = linear_backward(&cache.embedded, &blocks[VALUE], &dv, true)?;
    let mut d_embedded = de_q.expect("requested");
    d_embedded.axpy(T::one(), &de_k.expect("requested"))?;
    d_embedded.axpy(T::one(), &de_v.expect("requested"))?;

    let mut d_pos = Matrix::zeros(n, d);
    for b in 0..batch {
        for t in 0..n {
            for (p, &g) in d_pos.row_mut(t).iter_mut().zip(d_embedded.row(b * n + t)) {
                *p = *p + g;
            }
        }
    }
    let g_pos = ParamBlock::new(d_pos, Vec::new());
    let (g_embed, d_patches) = linear_backward(&cache.patches, &blocks[EMBED], &d_embedded, want_input_grad)?;
    let d_input = d_patches.map(|dp| unpatchify(spec, &dp, batch));

    Ok((
        vec![g_embed, g_pos, g_q, g_k, g_v, g_out, g_norm, g_head],
        d_input,
    ))
}

/// Logits of a model consisting of the single attention layer `spec`.
pub fn attention_forward<T: Real>(
    spec: &AttentionSpec,
    params: &ParamSet<T>,
    batch: &Batch<T>,
) -> Result<Matrix<T>, NnError> {
    check_params(spec, params)?;
    Ok(forward_cached(spec, &params.blocks, &batch.inputs)?.0)
}

/// Post-normalization token representations (before pooling) of every sample.
pub fn attention_tokens<T: Real>(
    spec: &AttentionSpec,
    params: &ParamSet<T>,
    inputs: &Matrix<T>,
) -> Result<Vec<Matrix<T>>, NnError> {
    check_params(spec, params)?;
    let (_, cache) = forward_cached(spec, &params.blocks, inputs)?;
    Ok((0..inputs.rows())
        .map(|b| cache.sample_tokens(b, spec.tokens()))
        .collect())
}

/// Attention probabilities of every sample and head (`b·heads + h`).
pub fn attention_probabilities<T: Real>(
    spec: &AttentionSpec,
    params: &ParamSet<T>,
    inputs: &Matrix<T>,
) -> Result<Vec<Matrix<T>>, NnError> {
    check_params(spec, params)?;
    Ok(forward_cached(spec, &params.blocks, inputs)?.1.probs)
}

fn check_params<T: Real>(spec: &AttentionSpec, params: &ParamSet<T>) -> Result<(), NnError> {
    spec.validate()?;
    if params.shapes() != spec.block_shapes() {
        return Err(NnError::ParamShape(format!(
            "attention expects {:?}, got {:?}",
            spec.block_shapes(),
            params.shapes()
        )));
    }
    Ok(())
}
