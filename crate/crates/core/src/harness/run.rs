use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use super::plot::{emit_plot, PlotKind};
use super::{write_file, ExperimentConfig, HarnessError};
use crate::data::{Dataset, SeedTriple};
use crate::lmc::{barrier_scan, barrier_trajectory, trajectory_csv, BarrierReport};
use crate::nn::{init_params, write_checkpoint, ModelSpec};
use crate::numerics::{Precision, Real, RNG_ALGORITHM};
use crate::optim::{train, write_metrics_csv, CheckpointSchedule, EpochMetrics};

/// Version of the output directory layout and file schemas.
pub const FORMAT_VERSION: u32 = 1;

/// One seed pair's results.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub repeat: usize,
    pub seeds_a: SeedTriple,
    pub seeds_b: SeedTriple,
    /// Final-epoch scan on the full splits.
    pub report: BarrierReport,
    pub trajectory: Vec<(usize, BarrierReport)>,
    pub metrics_a: Vec<EpochMetrics>,
    pub metrics_b: Vec<EpochMetrics>,
    /// Serialized final parameters of runs A and B.
    pub checkpoint_a: Vec<u8>,
    pub checkpoint_b: Vec<u8>,
    pub init_checkpoint: Vec<u8>,
}

impl PairOutcome {
    pub fn barrier_csv(&self) -> String {
        self.report.to_csv()
    }

    pub fn trajectory_csv(&self) -> String {
        trajectory_csv(&self.trajectory)
    }
}

#[derive(Debug, Clone)]
pub struct PairResult {
    /// The config actually run.
    pub config: ExperimentConfig,
    pub pairs: Vec<PairOutcome>,
    /// Every file written, in write order.
    pub artifacts: Vec<PathBuf>,
}

impl PairResult {
    /// First pair's report.
    pub fn report(&self) -> &BarrierReport {
        &self.pairs[0].report
    }
}

/// Loads the config's data from `data_root`, runs every seed pair and
/// writes the outputs under `out` when given.
pub fn run_pair(config: &ExperimentConfig, data_root: &Path, out: Option<&Path>) -> Result<PairResult, HarnessError> {
    config.validate()?;
    let (train_set, test_set) = config.dataset.load(data_root)?;
    run_pair_with(config, &train_set, &test_set, out)
}

/// [`run_pair`] on already loaded splits.
pub fn run_pair_with(
    config: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    out: Option<&Path>,
) -> Result<PairResult, HarnessError> {
    config.validate()?;
    let spec = config.model_spec()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut pairs = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let pair = match config.precision {
            Precision::F64 => run_one::<f64>(config, &spec, train_set, test_set, r)?,
            Precision::F32 => run_one::<f32>(config, &spec, train_set, test_set, r)?,
        };
        pairs.push(pair);
    }
    let mut artifacts = Vec::new();
    if let Some(dir) = out {
        for pair in &pairs {
            let pair_dir = if config.repeats == 1 {
                dir.to_path_buf()
            } else {
                dir.join(format!("pair_{}", pair.repeat))
            };
            write_pair(config, pair, &pair_dir, &mut artifacts)?;
        }
        let config_path = dir.join("config.toml");
        write_file(&config_path, config.to_toml())?;
        artifacts.push(config_path);
        let summary_path = dir.join("summary.txt");
        write_file(&summary_path, summary_text(config, &pairs))?;
        artifacts.push(summary_path);
        let meta = serde_json::json!({
            "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            "elapsed_seconds": clock.elapsed().as_secs_f64(),
            "crate_version": env!("CARGO_PKG_VERSION"),
        });
        let meta_path = dir.join("meta.json");
        write_file(&meta_path, serde_json::to_string_pretty(&meta).expect("json") + "\n")?;
        artifacts.push(meta_path);
    }
    Ok(PairResult {
        config: config.clone(),
        pairs,
        artifacts,
    })
}

fn run_one<T: Real>(
    config: &ExperimentConfig,
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    repeat: usize,
) -> Result<PairOutcome, HarnessError> {
    let (seeds_a, seeds_b) = config.pair_seeds(repeat);
    let init = init_params::<T>(spec, seeds_a.trainer)?;
    let epochs = config.optimizer.epochs;
    let schedule = match config.checkpoint_every {
        Some(k) => CheckpointSchedule::every(k, epochs),
        None => CheckpointSchedule::endpoints(epochs),
    };
    let run = |seeds: &SeedTriple| train(spec, &init, train_set, &config.optimizer, seeds, config.augmentation, &schedule);
    let (a, b) = rayon::join(|| run(&seeds_a), || run(&seeds_b));
    let (a, b) = (a?, b?);

    let mut report = barrier_scan(spec, &a.params, &b.params, train_set, test_set, config.grid)?;
    if a.diverged || b.diverged {
        report.mark_diverged();
    }
    let trajectory = if a.diverged || b.diverged {
        Vec::new()
    } else {
        let cap = |ds: &Dataset| match config.trajectory_samples {
            Some(k) if k < ds.len() => ds.select(&(0..k).collect::<Vec<_>>()),
            _ => ds.clone(),
        };
        let (tr, te) = (cap(train_set), cap(test_set));
        barrier_trajectory(spec, &a.checkpoints, &b.checkpoints, &tr, &te, config.grid)?
    };
    Ok(PairOutcome {
        repeat,
        seeds_a,
        seeds_b,
        report,
        trajectory,
        metrics_a: a.log,
        metrics_b: b.log,
        checkpoint_a: write_checkpoint(spec, &a.params),
        checkpoint_b: write_checkpoint(spec, &b.params),
        init_checkpoint: write_checkpoint(spec, &init),
    })
}

fn write_pair(
    config: &ExperimentConfig,
    pair: &PairOutcome,
    dir: &Path,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    let epochs = config.optimizer.epochs;
    let barrier = pair.barrier_csv();
    let svg = emit_plot(&barrier, PlotKind::BarrierVsAlpha)?;
    let files: Vec<(PathBuf, Vec<u8>)> = vec![
        (dir.join("metrics_a.csv"), write_metrics_csv(&pair.metrics_a).into_bytes()),
        (dir.join("metrics_b.csv"), write_metrics_csv(&pair.metrics_b).into_bytes()),
        (dir.join("checkpoints/init.ckpt"), pair.init_checkpoint.clone()),
        (dir.join(format!("checkpoints/a_e{epochs}.ckpt")), pair.checkpoint_a.clone()),
        (dir.join(format!("checkpoints/b_e{epochs}.ckpt")), pair.checkpoint_b.clone()),
        (dir.join("barrier.csv"), barrier.into_bytes()),
        (dir.join("trajectory.csv"), pair.trajectory_csv().into_bytes()),
        (dir.join("barrier_vs_alpha.svg"), svg.into_bytes()),
    ];
    for (path, bytes) in files {
        write_file(&path, bytes)?;
        artifacts.push(path);
    }
    Ok(())
}

fn summary_text(config: &ExperimentConfig, pairs: &[PairOutcome]) -> String {
    let mut s = String::new();
    writeln!(s, "experiment        {}", config.name).unwrap();
    writeln!(s, "lmc               {} (format {FORMAT_VERSION})", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "rng               {RNG_ALGORITHM}").unwrap();
    writeln!(s, "precision         {}", config.precision).unwrap();
    writeln!(s, "seed pairs        {}", pairs.len()).unwrap();
    for p in pairs {
        writeln!(s).unwrap();
        writeln!(
            s,
            "pair {}: A seeds {}/{}/{}  B seeds {}/{}/{}",
            p.repeat,
            p.seeds_a.trainer,
            p.seeds_a.loader,
            p.seeds_a.augmentation,
            p.seeds_b.trainer,
            p.seeds_b.loader,
            p.seeds_b.augmentation
        )
        .unwrap();
        if let (Some(la), Some(lb)) = (p.metrics_a.last(), p.metrics_b.last()) {
            writeln!(s, "final train loss  {:.6} / {:.6}", la.train_loss, lb.train_loss).unwrap();
        }
        s.push_str(&p.report.summary());
    }
    if pairs.len() > 1 {
        let ok: Vec<&BarrierReport> = pairs.iter().map(|p| &p.report).filter(|r| !r.diverged).collect();
        let mean = |f: fn(&BarrierReport) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len().max(1) as f64;
        writeln!(s).unwrap();
        writeln!(s, "mean over {} finite pairs", ok.len()).unwrap();
        writeln!(s, "B_train           {:.6}", mean(|r| r.b_train)).unwrap();
        writeln!(s, "B_test            {:.6}", mean(|r| r.b_test)).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "# resolved config").unwrap();
    s.push_str(&config.to_toml());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, Split, SyntheticSpec};
    use crate::harness::{DatasetConfig, DatasetName, ModelConfig, RunBSeeds};
    use crate::optim::OptimizerConfig;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            dataset: DatasetConfig::named(DatasetName::Synthetic, None),
            model: ModelConfig::Mlp {
                hidden: vec![12],
                slope: 0.0,
            },
            optimizer: OptimizerConfig::sgd_medium(3, 32),
            seeds: SeedTriple::new(1, 2, 3),
            run_b: None,
            augmentation: Default::default(),
            grid: 5,
            checkpoint_every: Some(1),
            trajectory_samples: Some(50),
            precision: Precision::F64,
            repeats: 1,
            output: None,
        }
    }

    fn splits() -> (Dataset, Dataset) {
        let s = SyntheticSpec::small();
        (synthetic(&s, 0, Split::Train), synthetic(&s, 0, Split::Test))
    }

    #[test]
    fn identical_loader_seeds_give_zero_barrier() {
        let mut cfg = tiny();
        cfg.run_b = Some(RunBSeeds {
            loader: cfg.seeds.loader,
            augmentation: cfg.seeds.augmentation,
        });
        let (tr, te) = splits();
        let r = run_pair_with(&cfg, &tr, &te, None).unwrap();
        let p = &r.pairs[0];
        assert_eq!(p.checkpoint_a, p.checkpoint_b);
        assert_eq!((p.report.b_train, p.report.b_test), (0.0, 0.0));
    }

    #[test]
    fn outputs_are_byte_identical_on_rerun() {
        let cfg = tiny();
        let (tr, te) = splits();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = run_pair_with(&cfg, &tr, &te, Some(d1.path())).unwrap();
        let r2 = run_pair_with(&cfg, &tr, &te, Some(d2.path())).unwrap();
        assert_eq!(r1.artifacts.len(), r2.artifacts.len());
        for (a, b) in r1.artifacts.iter().zip(&r2.artifacts) {
            if a.ends_with("meta.json") {
                continue;
            }
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
        }
        let traj = &r1.pairs[0].trajectory;
        assert_eq!(traj.len(), 4);
        assert_eq!(traj[0].1.b_test, 0.0);
        assert!(traj.iter().all(|(_, r)| r.b_test >= 0.0 && r.b_test.is_finite()));
        let summary = std::fs::read_to_string(d1.path().join("summary.txt")).unwrap();
        assert!(summary.contains("seed pairs        1"));
        assert!(summary.contains("[optimizer]"));
    }

    #[test]
    fn repeats_shift_every_seed() {
        let mut cfg = tiny();
        cfg.repeats = 2;
        cfg.checkpoint_every = None;
        let (tr, te) = splits();
        let dir = tempfile::tempdir().unwrap();
        let r = run_pair_with(&cfg, &tr, &te, Some(dir.path())).unwrap();
        assert_eq!(r.pairs.len(), 2);
        assert_eq!(r.pairs[1].seeds_a, SeedTriple::new(1001, 1002, 1003));
        assert_eq!(r.pairs[1].seeds_b, SeedTriple::new(1001, 1003, 1003));
        assert!(dir.path().join("pair_1/barrier.csv").exists());
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = tiny();
        cfg.model = ModelConfig::Mlp {
            hidden: vec![8, 8],
            slope: 1.0,
        };
        cfg.optimizer.lr = 1e6;
        let (tr, te) = splits();
        let r = run_pair_with(&cfg, &tr, &te, None).unwrap();
        let rep = r.report();
        assert!(rep.diverged && !rep.is_lmc());
        assert!(rep.b_test.is_nan());
        assert!(rep.to_csv().trim_end().ends_with(",1"));
    }
}
