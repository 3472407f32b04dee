//! Feed-forward models: logistic regression, deep linear networks, Leaky-ReLU
//! MLPs, and the structured (LC/CNN) and attention variants, all with manual
//! forward and backward passes under a mean cross-entropy loss.

mod checkpoint;
mod gradcheck;
mod network;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::{AttentionSpec, ConvSpec, CorrespondenceError, TieMode};
use crate::numerics::{Matrix, NumericsError, Real};

pub use checkpoint::{
    read_checkpoint, read_checkpoint_file, read_checkpoint_header, spec_digest, write_checkpoint, write_checkpoint_file,
    CheckpointError, CheckpointHeader, CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, GradCheck, FD_STEP};
pub use network::{evaluate, forward, loss_and_grads, Evaluation, Network};
pub use params::{init_params, ParamBlock, ParamSet};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("parameter shapes do not match the model spec: {0}")]
    ParamShape(String),
    #[error("batch has {got} features, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("training diverged: loss is {loss}")]
    Diverged { loss: f64 },
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
}

/// How a layer maps its input to its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    /// Unconstrained `W x + b`.
    Dense,
    /// Dense layer restricted to a conv/LC sparsity pattern, with tied
    /// entries sharing one parameter.
    MaskedTiedDense { conv: ConvSpec, mode: TieMode },
    /// Single attention block ending in a linear classifier.
    AttentionBlock { attention: AttentionSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub kind: LayerKind,
    pub bias: bool,
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize) -> Self {
        Self {
            input,
            output,
            kind: LayerKind::Dense,
            bias: true,
        }
    }

    pub fn structured(conv: ConvSpec, mode: TieMode) -> Self {
        Self {
            input: conv.input_len(),
            output: conv.output_len(),
            kind: LayerKind::MaskedTiedDense { conv, mode },
            bias: true,
        }
    }

    pub fn attention(attention: AttentionSpec) -> Self {
        Self {
            input: attention.input_len(),
            output: attention.outputs,
            kind: LayerKind::AttentionBlock { attention },
            bias: true,
        }
    }
}

/// Architecture description: layers in order plus the Leaky-ReLU slope `p`
/// applied between them (never after the last layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub slope: f64,
}

impl ModelSpec {
    /// Dense network `input → hidden… → classes`. No hidden layers gives
    /// logistic regression; `slope = 1` gives a deep linear network.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, slope: f64) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let layers = dims.windows(2).map(|w| LayerSpec::dense(w[0], w[1])).collect();
        Self { layers, slope }
    }

    pub fn logistic(input: usize, classes: usize) -> Self {
        Self::mlp(input, &[], classes, 0.0)
    }

    /// Structured first layer followed by a dense classifier head.
    pub fn structured(conv: ConvSpec, mode: TieMode, classes: usize, slope: f64) -> Self {
        Self {
            layers: vec![
                LayerSpec::structured(conv, mode),
                LayerSpec::dense(conv.output_len(), classes),
            ],
            slope,
        }
    }

    pub fn attention(attention: AttentionSpec) -> Self {
        Self {
            layers: vec![LayerSpec::attention(attention)],
            slope: 0.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::InvalidSpec("no layers".into()));
        }
        if !(0.0..=1.0).contains(&self.slope) {
            return Err(NnError::InvalidSpec(format!(
                "activation slope {} outside [0, 1]",
                self.slope
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output != pair[1].input {
                return Err(NnError::InvalidSpec(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output,
                    i + 1,
                    pair[1].input
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input == 0 || layer.output == 0 {
                return Err(NnError::InvalidSpec(format!("layer {i} has a zero dimension")));
            }
            match &layer.kind {
                LayerKind::Dense => {}
                LayerKind::MaskedTiedDense { conv, .. } => {
                    conv.validate()?;
                    if conv.input_len() != layer.input || conv.output_len() != layer.output {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: conv spec implies {}→{}, layer declares {}→{}",
                            conv.input_len(),
                            conv.output_len(),
                            layer.input,
                            layer.output
                        )));
                    }
                }
                LayerKind::AttentionBlock { attention } => {
                    attention.validate()?;
                    if attention.input_len() != layer.input || attention.outputs != layer.output {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: attention spec implies {}→{}, layer declares {}→{}",
                            attention.input_len(),
                            attention.outputs,
                            layer.input,
                            layer.output
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `x` for `x ≥ 0`, `p·x` otherwise. Returns exactly zero at `x = 0`.
#[inline]
pub fn leaky_relu<T: Real>(x: T, p: T) -> T {
    if x > T::zero() {
        x
    } else if x < T::zero() {
        p * x
    } else {
        T::zero()
    }
}

/// Derivative used by the backward pass; `1` at the origin.
#[inline]
pub(crate) fn leaky_relu_grad<T: Real>(x: T, p: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        p
    }
}

/// Inputs (one sample per row) with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = f64> {
    pub inputs: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>) -> Result<Self, NnError> {
        if inputs.rows() != labels.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
