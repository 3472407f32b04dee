use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{apply_step, clip_gradients, lr_at, OptimError, OptimizerConfig, OptimizerState};
use crate::data::{epoch_order, Augmentation, Dataset, SeedTriple};
use crate::nn::{ModelSpec, Network, NnError, ParamSet};
use crate::numerics::Real;

pub const METRICS_HEADER: &str = "epoch,lr,train_loss,train_error,divergence_flag";

/// Epochs (counted as completed epochs, `0` = initialization) at which
/// parameters are snapshotted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckpointSchedule {
    pub epochs: Vec<usize>,
}

impl CheckpointSchedule {
    /// Initialization and the final epoch.
    pub fn endpoints(total: usize) -> Self {
        Self { epochs: vec![0, total] }
    }

    /// `0, k, 2k, …` plus `total`.
    pub fn every(k: usize, total: usize) -> Self {
        let mut epochs: Vec<usize> = (0..=total).step_by(k.max(1)).collect();
        if epochs.last() != Some(&total) {
            epochs.push(total);
        }
        Self { epochs }
    }

    pub fn includes(&self, epoch: usize) -> bool {
        self.epochs.contains(&epoch)
    }
}

/// Running averages over one epoch, measured on each batch before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 0-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_error: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T = f64> {
    pub params: ParamSet<T>,
    pub checkpoints: Vec<(usize, ParamSet<T>)>,
    pub log: Vec<EpochMetrics>,
    /// Loss or parameters became non-finite; training stopped at that epoch.
    pub diverged: bool,
}

/// Trains one model from `init`.
///
/// Each epoch visits the samples in `epoch_order(seeds.loader, epoch, n)`,
/// in batches of `config.batch_size` (the last partial batch is kept).
/// Augmentation draws come from the augmentation stream at block `epoch`,
/// consumed sample by sample in visiting order. The result is a pure
/// function of the arguments.
pub fn train<T: Real>(
    spec: &ModelSpec,
    init: &ParamSet<T>,
    dataset: &Dataset,
    config: &OptimizerConfig,
    seeds: &SeedTriple,
    augmentation: Augmentation,
    schedule: &CheckpointSchedule,
) -> Result<TrainOutcome<T>, OptimError> {
    config.validate()?;
    let net = Network::new(spec.clone())?;
    net.check_params(init)?;
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset.into());
    }
    let n = dataset.len();
    let mut params = init.clone();
    let mut state = OptimizerState::new(config.algorithm, &params);
    let mut checkpoints = Vec::new();
    if schedule.includes(0) {
        checkpoints.push((0, params.clone()));
    }
    let mut log = Vec::with_capacity(config.epochs);
    let mut diverged = false;

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        let order = epoch_order(seeds.loader, epoch, n);
        let mut aug = seeds.augmentation_rng(epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.batch::<T>(chunk, Some((&mut aug, augmentation)));
            match net.loss_grads_correct(&params, &batch) {
                Ok((loss, mut grads, c)) => {
                    loss_sum += loss.as_f64() * chunk.len() as f64;
                    correct += c;
                    seen += chunk.len();
                    if let Some(max_norm) = config.clip_norm {
                        clip_gradients(&mut grads, max_norm);
                    }
                    apply_step(config, &mut params, &mut grads, &mut state, lr)?;
                    if !params.is_finite() {
                        diverged = true;
                        break;
                    }
                }
                Err(NnError::Diverged { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        let (train_loss, train_error) = if diverged || seen == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (loss_sum / seen as f64, 1.0 - correct as f64 / seen as f64)
        };
        log.push(EpochMetrics {
            epoch,
            lr,
            train_loss,
            train_error,
            diverged,
        });
        if diverged {
            break;
        }
        if schedule.includes(epoch + 1) {
            checkpoints.push((epoch + 1, params.clone()));
        }
    }
    Ok(TrainOutcome {
        params,
        checkpoints,
        log,
        diverged,
    })
}

/// Metrics log as CSV with a header row.
pub fn write_metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in log {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.epoch, m.lr, m.train_loss, m.train_error, m.diverged as u8
        )
        .unwrap();
    }
    out
}
