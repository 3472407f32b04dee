use super::config::{DatasetConfig, DatasetName, ExperimentConfig, ModelConfig, DEFAULT_WIDTH, DESK_EPOCHS, DESK_PER_CLASS};
use crate::correspondence::LayerVariant;
use crate::data::{Augmentation, SeedTriple};
use crate::lmc::DEFAULT_GRID;
use crate::numerics::Precision;
use crate::optim::{Algorithm, LrLevel, OptimizerConfig};

/// Leaky-ReLU negative slopes swept per depth.
pub const LEAKY_SLOPES: [f64; 12] = [0.0, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99];

const TABLE_DEPTHS: [(usize, &str); 4] = [(1, "logreg"), (2, "linear2"), (4, "linear4"), (8, "linear8")];
const FULL_BATCH: usize = 30_000;
const TABLE_BATCH: usize = 1024;
/// Batch size of every run that the tables leave unspecified.
const SMALL_BATCH: usize = 128;
/// Learning rate of the low-lr architecture column.
const LOW_LR: f64 = 0.001;
/// Structured-layer shape on MNIST: 32 filters of 4×4 give a 1568-unit hidden layer.
const ARCH_CHANNELS: usize = 32;
const ARCH_KERNEL: usize = 4;

fn base(name: &str, dataset: DatasetConfig, model: ModelConfig, optimizer: OptimizerConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        dataset,
        model,
        optimizer,
        seeds: SeedTriple::new(1, 43, 43),
        run_b: None,
        augmentation: Augmentation::None,
        grid: DEFAULT_GRID,
        checkpoint_every: Some(DESK_EPOCHS / 10),
        trajectory_samples: Some(2000),
        precision: Precision::F64,
        repeats: 1,
        output: None,
    }
}

fn mnist() -> DatasetConfig {
    DatasetConfig::named(DatasetName::Mnist, Some(DESK_PER_CLASS))
}

/// Desk-scale training subset: 10,000 samples whatever the class count.
fn desk_data(name: DatasetName) -> DatasetConfig {
    let per_class = match name {
        DatasetName::Cifar100 => DESK_PER_CLASS / 10,
        _ => DESK_PER_CLASS,
    };
    DatasetConfig::named(name, Some(per_class))
}

/// `layers` counts weight matrices, so 1 is logistic regression.
fn mlp(layers: usize, slope: f64) -> ModelConfig {
    ModelConfig::Mlp {
        hidden: vec![DEFAULT_WIDTH; layers - 1],
        slope,
    }
}

fn warmup_for(epochs: usize) -> usize {
    epochs.div_ceil(20)
}

fn parse_level(s: &str) -> Option<LrLevel> {
    match s {
        "high" => Some(LrLevel::High),
        "med" => Some(LrLevel::Medium),
        _ => None,
    }
}

fn parse_algorithm(s: &str) -> Option<Algorithm> {
    match s {
        "sgd" => Some(Algorithm::Sgd),
        "adam" => Some(Algorithm::Adam),
        _ => None,
    }
}

fn optimizer(alg: Algorithm, level: LrLevel, batch: usize) -> OptimizerConfig {
    OptimizerConfig::preset(alg, level, DESK_EPOCHS, batch).expect("high and medium exist for both optimizers")
}

fn table1(name: &str) -> Option<ExperimentConfig> {
    // <depth>-mnist-<alg>-<lr>-bs<30k|1024>
    let mut parts = name.split('-');
    let depth_name = parts.next()?;
    let &(layers, _) = TABLE_DEPTHS.iter().find(|(_, n)| *n == depth_name)?;
    if parts.next()? != "mnist" {
        return None;
    }
    let alg = parse_algorithm(parts.next()?)?;
    let level = parse_level(parts.next()?)?;
    let batch = match parts.next()? {
        "bs30k" => FULL_BATCH,
        "bs1024" => TABLE_BATCH,
        _ => return None,
    };
    if parts.next().is_some() || (batch == FULL_BATCH && layers > 2) {
        return None;
    }
    let slope = if layers == 1 { 0.0 } else { 1.0 };
    Some(base(name, mnist(), mlp(layers, slope), optimizer(alg, level, batch)))
}

fn table2(name: &str) -> Option<ExperimentConfig> {
    let rest = name.strip_prefix("mlp1-relu-")?;
    let (alg, level, warmup) = match rest {
        "sgd-high" => (Algorithm::Sgd, LrLevel::High, false),
        "sgd-high-warmup" => (Algorithm::Sgd, LrLevel::High, true),
        "adam-med" => (Algorithm::Adam, LrLevel::Medium, false),
        "adam-high" => (Algorithm::Adam, LrLevel::High, false),
        "adam-high-warmup" => (Algorithm::Adam, LrLevel::High, true),
        _ => return None,
    };
    let mut opt = optimizer(alg, level, SMALL_BATCH);
    if warmup {
        let w = warmup_for(opt.epochs);
        opt = opt.with_warmup(w);
    }
    Some(base(name, mnist(), mlp(2, 0.0), opt))
}

fn leaky(name: &str) -> Option<ExperimentConfig> {
    // leaky-mlp<L>-p<slope>
    let rest = name.strip_prefix("leaky-mlp")?;
    let (layers, slope) = rest.split_once("-p")?;
    let layers: usize = layers.parse().ok()?;
    if ![2, 4, 8].contains(&layers) {
        return None;
    }
    let slope = *LEAKY_SLOPES.iter().find(|p| p.to_string() == slope)?;
    Some(base(
        name,
        mnist(),
        mlp(layers, slope),
        optimizer(Algorithm::Sgd, LrLevel::Medium, SMALL_BATCH),
    ))
}

fn architecture(name: &str) -> Option<ExperimentConfig> {
    let rest = name.strip_prefix("arch-")?;
    let (arch, low) = match rest.strip_suffix("-lowlr") {
        Some(a) => (a, true),
        None => (rest, false),
    };
    let structured = |variant| ModelConfig::Structured {
        variant,
        out_channels: ARCH_CHANNELS,
        kernel: [ARCH_KERNEL, ARCH_KERNEL],
        slope: 0.0,
    };
    let model = match arch {
        "mlp" => structured(LayerVariant::Mlp),
        "lc" => structured(LayerVariant::Lc),
        "cnn" => structured(LayerVariant::Cnn),
        "attention" => ModelConfig::Attention {
            patch: 4,
            heads: 8,
            head_dim: 48,
        },
        _ => return None,
    };
    let mut opt = optimizer(Algorithm::Sgd, LrLevel::High, SMALL_BATCH);
    if low {
        opt.lr = LOW_LR;
    }
    Some(base(name, mnist(), model, opt))
}

fn ladder(name: &str) -> Option<ExperimentConfig> {
    // ladder-mlp<L>-<dataset>-sgd-<lr>
    let rest = name.strip_prefix("ladder-mlp")?;
    let mut parts = rest.split('-');
    let layers: usize = parts.next()?.parse().ok()?;
    if ![2, 4, 8].contains(&layers) {
        return None;
    }
    let dataset = match parts.next()? {
        "mnist" => DatasetName::Mnist,
        "cifar10" => DatasetName::Cifar10,
        "cifar100" => DatasetName::Cifar100,
        _ => return None,
    };
    if parts.next()? != "sgd" {
        return None;
    }
    let level = parse_level(parts.next()?)?;
    if parts.next().is_some() {
        return None;
    }
    Some(base(
        name,
        desk_data(dataset),
        mlp(layers, 0.0),
        optimizer(Algorithm::Sgd, level, SMALL_BATCH),
    ))
}

/// Desk-scale config of a named preset. See [`preset_names`] for the catalog.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    table1(name)
        .or_else(|| table2(name))
        .or_else(|| leaky(name))
        .or_else(|| architecture(name))
        .or_else(|| ladder(name))
}

/// Every preset name, in catalog order.
pub fn preset_names() -> Vec<String> {
    let mut out = Vec::new();
    for (layers, depth) in TABLE_DEPTHS {
        for bs in ["bs30k", "bs1024"] {
            if bs == "bs30k" && layers > 2 {
                continue;
            }
            for alg in ["sgd", "adam"] {
                for lr in ["high", "med"] {
                    out.push(format!("{depth}-mnist-{alg}-{lr}-{bs}"));
                }
            }
        }
    }
    for col in ["sgd-high", "sgd-high-warmup", "adam-med", "adam-high", "adam-high-warmup"] {
        out.push(format!("mlp1-relu-{col}"));
    }
    for layers in [2, 4, 8] {
        for p in LEAKY_SLOPES {
            out.push(format!("leaky-mlp{layers}-p{p}"));
        }
    }
    for suffix in ["", "-lowlr"] {
        for arch in ["mlp", "lc", "cnn", "attention"] {
            out.push(format!("arch-{arch}{suffix}"));
        }
    }
    for layers in [2, 4, 8] {
        for ds in ["mnist", "cifar10", "cifar100"] {
            for lr in ["high", "med"] {
                out.push(format!("ladder-mlp{layers}-{ds}-sgd-{lr}"));
            }
        }
    }
    out
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    /// Curve the row belongs to when plotted.
    pub series: String,
    /// Value of the swept variable.
    pub value: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub name: String,
    pub variable: String,
    pub entries: Vec<SweepEntry>,
}

fn entry(series: impl Into<String>, value: impl Into<String>, preset_name: &str) -> SweepEntry {
    SweepEntry {
        series: series.into(),
        value: value.into(),
        config: preset(preset_name).unwrap_or_else(|| panic!("catalog preset {preset_name}")),
    }
}

pub fn sweep_names() -> Vec<String> {
    let mut out: Vec<String> = ["table1", "optimizers", "architecture", "dataset-ladder"]
        .map(String::from)
        .to_vec();
    for layers in [2, 4, 8] {
        out.push(format!("leaky-slope-{layers}"));
    }
    for layers in [2, 4, 8] {
        for lr in ["high", "med"] {
            out.push(format!("dataset-ladder-{layers}-{lr}"));
        }
    }
    out
}

fn ladder_entries(layers: usize, lr: &str) -> Vec<SweepEntry> {
    ["mnist", "cifar10", "cifar100"]
        .iter()
        .map(|ds| entry(format!("{layers}-layer {lr}"), *ds, &format!("ladder-mlp{layers}-{ds}-sgd-{lr}")))
        .collect()
}

/// The configurations a named sweep runs.
pub fn sweep_plan(name: &str) -> Option<SweepPlan> {
    let (variable, entries) = match name {
        "table1" => {
            let mut entries = Vec::new();
            for name in preset_names().iter().filter(|n| table1(n).is_some()) {
                let (row, col) = name.split_once("-mnist-").expect("table preset name");
                let (col, bs) = col.rsplit_once('-').expect("batch suffix");
                entries.push(entry(format!("{row}-{bs}"), col, name));
            }
            ("optimizer", entries)
        }
        "optimizers" => (
            "optimizer",
            ["sgd-high", "sgd-high-warmup", "adam-med", "adam-high", "adam-high-warmup"]
                .iter()
                .map(|c| entry("mlp1-relu", *c, &format!("mlp1-relu-{c}")))
                .collect(),
        ),
        "architecture" => {
            let mut entries = Vec::new();
            for (series, suffix) in [("sgd-high", ""), ("sgd-low", "-lowlr")] {
                for arch in ["mlp", "lc", "cnn", "attention"] {
                    entries.push(entry(series, arch, &format!("arch-{arch}{suffix}")));
                }
            }
            ("architecture", entries)
        }
        "dataset-ladder" => {
            let mut entries = Vec::new();
            for layers in [2, 4, 8] {
                for lr in ["high", "med"] {
                    entries.extend(ladder_entries(layers, lr));
                }
            }
            ("dataset", entries)
        }
        _ => {
            if let Some(layers) = name.strip_prefix("leaky-slope-") {
                let layers: usize = layers.parse().ok().filter(|l| [2, 4, 8].contains(l))?;
                (
                    "slope",
                    LEAKY_SLOPES
                        .iter()
                        .map(|p| entry(format!("{layers}-layer"), p.to_string(), &format!("leaky-mlp{layers}-p{p}")))
                        .collect(),
                )
            } else {
                let rest = name.strip_prefix("dataset-ladder-")?;
                let (layers, lr) = rest.split_once('-')?;
                let layers: usize = layers.parse().ok().filter(|l| [2, 4, 8].contains(l))?;
                parse_level(lr)?;
                ("dataset", ladder_entries(layers, lr))
            }
        }
    };
    Some(SweepPlan {
        name: name.to_string(),
        variable: variable.to_string(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves_and_validates() {
        let names = preset_names();
        assert_eq!(names.len(), 24 + 5 + 36 + 8 + 18);
        for n in &names {
            let cfg = preset(n).unwrap_or_else(|| panic!("{n}"));
            assert_eq!(&cfg.name, n);
            cfg.validate().unwrap_or_else(|e| panic!("{n}: {e}"));
            assert_eq!(cfg.seeds_b().trainer, cfg.seeds.trainer);
            assert_ne!(cfg.seeds_b(), cfg.seeds);
            // round-trips through its own TOML
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn named_cells() {
        let cfg = preset("logreg-mnist-sgd-med-bs30k").unwrap();
        assert_eq!(cfg.model_spec().unwrap().depth(), 1);
        assert_eq!(cfg.optimizer.lr, 0.01);
        assert_eq!(cfg.optimizer.batch_size, 30_000);
        let cfg = preset("linear8-mnist-adam-med-bs1024").unwrap();
        let spec = cfg.model_spec().unwrap();
        assert_eq!((spec.depth(), spec.slope), (8, 1.0));
        assert_eq!(cfg.optimizer.lr, 0.001);
        let cfg = preset("mlp1-relu-adam-high-warmup").unwrap();
        assert_eq!((cfg.optimizer.lr, cfg.optimizer.warmup_epochs), (0.005, 3));
        let cfg = preset("arch-attention-lowlr").unwrap();
        assert_eq!(cfg.optimizer.lr, 0.001);
        assert!(preset("linear8-mnist-sgd-med-bs30k").is_none());
        assert!(preset("leaky-mlp3-p0.5").is_none());
        assert!(preset("nope").is_none());
    }

    #[test]
    fn sweeps_cover_the_catalog() {
        for s in sweep_names() {
            let plan = sweep_plan(&s).unwrap();
            assert!(!plan.entries.is_empty());
        }
        assert_eq!(sweep_plan("table1").unwrap().entries.len(), 24);
        assert_eq!(sweep_plan("optimizers").unwrap().entries.len(), 5);
        assert_eq!(sweep_plan("leaky-slope-2").unwrap().entries.len(), 12);
        assert_eq!(sweep_plan("architecture").unwrap().entries.len(), 8);
        assert_eq!(sweep_plan("dataset-ladder-4-med").unwrap().entries.len(), 3);
        assert!(sweep_plan("leaky-slope-3").is_none());
    }

    #[test]
    fn cifar100_subset_keeps_ten_thousand_samples() {
        let cfg = preset("ladder-mlp2-cifar100-sgd-med").unwrap();
        assert_eq!(cfg.dataset.train_per_class, Some(100));
        assert_eq!(cfg.model_spec().unwrap().classes(), 100);
        assert_eq!(cfg.model_spec().unwrap().input_dim(), 3072);
    }
}
