use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::correspondence::{AttentionSpec, ConvSpec, LayerVariant, TieMode};
use crate::data::{load_cifar, load_mnist, subset, synthetic, Augmentation, CifarVariant, Dataset, SeedTriple, Split, SyntheticSpec};
use crate::lmc::DEFAULT_GRID;
use crate::nn::{LayerSpec, ModelSpec};
use crate::numerics::Precision;
use crate::optim::OptimizerConfig;

/// Training subset size per class used when a preset runs at desk scale.
pub const DESK_PER_CLASS: usize = 1000;
pub const DESK_EPOCHS: usize = 50;
pub const PAPER_EPOCHS: usize = 200;
/// Hidden width of the minimal model.
pub const DEFAULT_WIDTH: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Cifar10,
    Cifar100,
    /// Gaussian blobs; needs no files.
    Synthetic,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
            DatasetName::Cifar100 => "cifar100",
            DatasetName::Synthetic => "synthetic",
        }
    }
}

fn default_subset_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    /// Class-balanced training subset; absent means the full split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_per_class: Option<usize>,
    /// Class-balanced test subset; absent means the full split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
    #[serde(default = "default_subset_seed")]
    pub subset_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetConfig {
    pub fn named(name: DatasetName, train_per_class: Option<usize>) -> Self {
        Self {
            name,
            train_per_class,
            test_per_class: None,
            subset_seed: default_subset_seed(),
            synthetic: None,
        }
    }

    /// `(channels, height, width, classes)` without touching the disk.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        match self.name {
            DatasetName::Mnist => (1, 28, 28, 10),
            DatasetName::Cifar10 => (3, 32, 32, 10),
            DatasetName::Cifar100 => (3, 32, 32, 100),
            DatasetName::Synthetic => {
                let s = self.synthetic.unwrap_or_else(SyntheticSpec::small);
                (s.channels, s.height, s.width, s.classes)
            }
        }
    }

    /// Loads (and subsets) both splits. `root` holds `mnist/`,
    /// `cifar-10-batches-bin/` and `cifar-100-binary/`.
    pub fn load(&self, root: &Path) -> Result<(Dataset, Dataset), HarnessError> {
        let (train, test) = match self.name {
            DatasetName::Mnist => (load_mnist(root, Split::Train)?, load_mnist(root, Split::Test)?),
            DatasetName::Cifar10 | DatasetName::Cifar100 => {
                let v = if self.name == DatasetName::Cifar10 {
                    CifarVariant::Cifar10
                } else {
                    CifarVariant::Cifar100
                };
                (load_cifar(root, v, Split::Train)?, load_cifar(root, v, Split::Test)?)
            }
            DatasetName::Synthetic => {
                let s = self.synthetic.unwrap_or_else(SyntheticSpec::small);
                (
                    synthetic(&s, self.subset_seed, Split::Train),
                    synthetic(&s, self.subset_seed, Split::Test),
                )
            }
        };
        let cut = |ds: Dataset, per_class: Option<usize>| match per_class {
            Some(k) => subset(&ds, k, self.subset_seed),
            None => Ok(ds),
        };
        Ok((cut(train, self.train_per_class)?, cut(test, self.test_per_class)?))
    }
}

/// Architecture, resolved against the dataset shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Dense network; no hidden layers is logistic regression, `slope = 1`
    /// a deep linear network.
    Mlp { hidden: Vec<usize>, slope: f64 },
    /// One stride-equals-kernel layer (conv, locally connected, or its
    /// dense counterpart) followed by a dense head.
    Structured {
        variant: LayerVariant,
        out_channels: usize,
        kernel: [usize; 2],
        slope: f64,
    },
    Attention { patch: usize, heads: usize, head_dim: usize },
}

impl ModelConfig {
    pub fn to_spec(&self, data: &DatasetConfig) -> Result<ModelSpec, HarnessError> {
        let (c, h, w, classes) = data.shape();
        let spec = match self {
            ModelConfig::Mlp { hidden, slope } => ModelSpec::mlp(c * h * w, hidden, classes, *slope),
            ModelConfig::Structured {
                variant,
                out_channels,
                kernel,
                slope,
            } => {
                let conv = ConvSpec::new(c, h, w, *out_channels, (kernel[0], kernel[1]))?;
                match variant {
                    LayerVariant::Cnn => ModelSpec::structured(conv, TieMode::Cnn, classes, *slope),
                    LayerVariant::Lc => ModelSpec::structured(conv, TieMode::Lc, classes, *slope),
                    LayerVariant::Mlp => ModelSpec {
                        layers: vec![
                            LayerSpec::dense(conv.input_len(), conv.output_len()),
                            LayerSpec::dense(conv.output_len(), classes),
                        ],
                        slope: *slope,
                    },
                }
            }
            ModelConfig::Attention { patch, heads, head_dim } => ModelSpec::attention(AttentionSpec {
                channels: c,
                height: h,
                width: w,
                patch: *patch,
                heads: *heads,
                head_dim: *head_dim,
                outputs: classes,
            }),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Run B's noise sources. The trainer seed is always run A's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBSeeds {
    pub loader: u64,
    pub augmentation: u64,
}

fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_repeats() -> usize {
    1
}
fn default_precision() -> Precision {
    Precision::F64
}

/// One paired-training experiment. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Seeds of run A.
    pub seeds: SeedTriple,
    /// Defaults to run A's loader seed + 1 and run A's augmentation seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_b: Option<RunBSeeds>,
    #[serde(default)]
    pub augmentation: Augmentation,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Snapshot interval (epochs) for the barrier trajectory; absent means
    /// initialization and final epoch only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    /// Per-split sample cap for trajectory evaluations (the final scan
    /// always uses the full splits).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_samples: Option<usize>,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    /// Independent seed pairs; pair `r` offsets every seed by `1000·r`.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn seeds_b(&self) -> SeedTriple {
        let b = self.run_b.unwrap_or(RunBSeeds {
            loader: self.seeds.loader + 1,
            augmentation: self.seeds.augmentation,
        });
        SeedTriple::new(self.seeds.trainer, b.loader, b.augmentation)
    }

    /// Seeds of pair `r`.
    pub fn pair_seeds(&self, r: usize) -> (SeedTriple, SeedTriple) {
        let off = 1000 * r as u64;
        let shift = |s: SeedTriple| SeedTriple::new(s.trainer + off, s.loader + off, s.augmentation + off);
        (shift(self.seeds), shift(self.seeds_b()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        self.model.to_spec(&self.dataset)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.optimizer.validate()?;
        self.model_spec()?;
        if self.grid < 2 {
            return Err(HarnessError::Config(format!("grid {} < 2", self.grid)));
        }
        if self.repeats == 0 {
            return Err(HarnessError::Config("repeats must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(HarnessError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    /// Full data and 200 epochs; warmup keeps its share of training.
    pub fn to_paper_scale(&mut self) {
        let old = self.optimizer.epochs;
        self.dataset.train_per_class = None;
        self.dataset.test_per_class = None;
        let w = self.optimizer.warmup_epochs;
        if w > 0 {
            // the 5% ramp maps to the 10 of 200 epochs; anything else scales
            self.optimizer.warmup_epochs = if w == old.div_ceil(20) {
                PAPER_EPOCHS / 20
            } else {
                (w * PAPER_EPOCHS).div_ceil(old)
            };
        }
        self.optimizer.epochs = PAPER_EPOCHS;
        if let Some(k) = self.checkpoint_every {
            self.checkpoint_every = Some((k * PAPER_EPOCHS).div_ceil(old).max(1));
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
