//! Experiment orchestration: configs, presets, paired runs, sweeps, plots
//! and the verification suites behind the `lmc` binary.

mod config;
mod plot;
mod presets;
mod run;
mod sweep;
mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    DatasetConfig, DatasetName, ExperimentConfig, ModelConfig, RunBSeeds, DEFAULT_WIDTH, DESK_EPOCHS, DESK_PER_CLASS,
    PAPER_EPOCHS,
};
pub use plot::{emit_plot, PlotKind};
pub use presets::{preset, preset_names, sweep_names, sweep_plan, SweepEntry, SweepPlan, LEAKY_SLOPES};
pub use run::{run_pair, run_pair_with, PairOutcome, PairResult, FORMAT_VERSION};
pub use sweep::{apply_overrides, run_sweep, SweepRow, SWEEP_HEADER};
pub use verify::{verify, Check, SUITES};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown preset or sweep `{0}`")]
    UnknownPreset(String),
    #[error("unknown verify suite `{0}`")]
    UnknownSuite(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
    #[error(transparent)]
    Lmc(#[from] crate::lmc::LmcError),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::CheckpointError),
    #[error(transparent)]
    Correspondence(#[from] crate::correspondence::CorrespondenceError),
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
