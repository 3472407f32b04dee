use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::presets::sweep_plan;
use super::run::run_pair_with;
use super::{write_file, DatasetConfig, ExperimentConfig, HarnessError};
use crate::data::Dataset;

pub const SWEEP_HEADER: &str =
    "sweep,series,variable,value,repeat,b_train,b_test,nb_train,nb_test,test_acc_a,test_acc_b,lmc,diverged,status";

/// One row of an aggregated sweep CSV. Failed configurations carry their
/// error in `status` and NaN measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub series: String,
    pub value: String,
    pub repeat: usize,
    pub b_train: f64,
    pub b_test: f64,
    pub nb_train: f64,
    pub nb_test: f64,
    pub test_acc_a: f64,
    pub test_acc_b: f64,
    pub lmc: bool,
    pub diverged: bool,
    pub status: String,
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key.path=value` overrides; values are TOML literals, anything
/// unparseable is taken as a string. The result is re-validated, so typos
/// in keys are errors.
pub fn apply_overrides(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut root = toml::Value::try_from(config).map_err(|e| HarnessError::Config(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{item}` is not key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut root;
        for (i, part) in path.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{}` is not a table", path[..i].join("."))))?;
            if i + 1 == path.len() {
                table.insert(part.to_string(), parse_value(raw.trim()));
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
    }
    let cfg: ExperimentConfig = root.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn clean(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn rows_csv(name: &str, variable: &str, rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{name},{},{variable},{},{},{},{},{},{},{},{},{},{},{}",
            clean(&r.series),
            clean(&r.value),
            r.repeat,
            r.b_train,
            r.b_test,
            r.nb_train,
            r.nb_test,
            r.test_acc_a,
            r.test_acc_b,
            r.lmc as u8,
            r.diverged as u8,
            clean(&r.status)
        )
        .unwrap();
    }
    out
}

fn failed(series: &str, value: &str, err: &HarnessError) -> SweepRow {
    SweepRow {
        series: series.to_string(),
        value: value.to_string(),
        repeat: 0,
        b_train: f64::NAN,
        b_test: f64::NAN,
        nb_train: f64::NAN,
        nb_test: f64::NAN,
        test_acc_a: f64::NAN,
        test_acc_b: f64::NAN,
        lmc: false,
        diverged: false,
        status: format!("error: {err}"),
    }
}

/// Runs every configuration of a named sweep and returns the aggregated
/// CSV (one row per configuration and seed pair).
///
/// Configurations run on the current rayon pool; a failing configuration
/// becomes an error row and the sweep continues. With `out`, each run gets
/// its own directory and the CSV is written to `out/<sweep>.csv`.
pub fn run_sweep(
    name: &str,
    overrides: &[String],
    data_root: &Path,
    out: Option<&Path>,
    paper_scale: bool,
) -> Result<(String, Vec<SweepRow>), HarnessError> {
    let plan = sweep_plan(name).ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?;
    let configs: Vec<Result<ExperimentConfig, HarnessError>> = plan
        .entries
        .iter()
        .map(|e| {
            let mut cfg = e.config.clone();
            if paper_scale {
                cfg.to_paper_scale();
            }
            apply_overrides(&cfg, overrides)
        })
        .collect();

    // each distinct dataset is loaded once
    let mut cache: HashMap<String, Result<(Dataset, Dataset), String>> = HashMap::new();
    for cfg in configs.iter().flatten() {
        let key = dataset_key(&cfg.dataset);
        if !cache.contains_key(&key) {
            let loaded = cfg.dataset.load(data_root).map_err(|e| e.to_string());
            cache.insert(key, loaded);
        }
    }

    let rows: Vec<Vec<SweepRow>> = plan
        .entries
        .par_iter()
        .zip(configs.par_iter())
        .map(|(entry, cfg)| {
            let cfg = match cfg {
                Ok(c) => c,
                Err(e) => return vec![failed(&entry.series, &entry.value, e)],
            };
            let (train_set, test_set) = match &cache[&dataset_key(&cfg.dataset)] {
                Ok(d) => (&d.0, &d.1),
                Err(e) => return vec![failed(&entry.series, &entry.value, &HarnessError::Config(e.clone()))],
            };
            let dir = out.map(|o| o.join(name).join(&cfg.name));
            match run_pair_with(cfg, train_set, test_set, dir.as_deref()) {
                Ok(result) => result
                    .pairs
                    .iter()
                    .map(|p| {
                        let r = &p.report;
                        SweepRow {
                            series: entry.series.clone(),
                            value: entry.value.clone(),
                            repeat: p.repeat,
                            b_train: r.b_train,
                            b_test: r.b_test,
                            nb_train: r.nb_train,
                            nb_test: r.nb_test,
                            test_acc_a: r.test_acc_a,
                            test_acc_b: r.test_acc_b,
                            lmc: r.is_lmc(),
                            diverged: r.diverged,
                            status: "ok".into(),
                        }
                    })
                    .collect(),
                Err(e) => vec![failed(&entry.series, &entry.value, &e)],
            }
        })
        .collect();
    let rows: Vec<SweepRow> = rows.into_iter().flatten().collect();
    let csv = rows_csv(name, &plan.variable, &rows);
    if let Some(o) = out {
        write_file(&o.join(format!("{name}.csv")), &csv)?;
    }
    Ok((csv, rows))
}

fn dataset_key(d: &DatasetConfig) -> String {
    serde_json::to_string(d).expect("dataset config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::preset;

    #[test]
    fn overrides_set_nested_keys() {
        let cfg = preset("leaky-mlp2-p0.5").unwrap();
        let out = apply_overrides(
            &cfg,
            &[
                "optimizer.epochs=3".into(),
                "dataset.train_per_class=10".into(),
                "precision=f32".into(),
                "model.hidden=[16]".into(),
            ],
        )
        .unwrap();
        assert_eq!(out.optimizer.epochs, 3);
        assert_eq!(out.dataset.train_per_class, Some(10));
        assert_eq!(out.precision, crate::numerics::Precision::F32);
        assert_eq!(
            out.model,
            crate::harness::ModelConfig::Mlp {
                hidden: vec![16],
                slope: 0.5
            }
        );
    }

    #[test]
    fn empty_overrides_keep_the_preset() {
        let cfg = preset("arch-cnn").unwrap();
        assert_eq!(apply_overrides(&cfg, &[]).unwrap(), cfg);
    }

    #[test]
    fn bad_overrides_are_errors() {
        let cfg = preset("arch-cnn").unwrap();
        assert!(apply_overrides(&cfg, &["optimizer.epoch=3".into()]).is_err());
        assert!(apply_overrides(&cfg, &["grid".into()]).is_err());
        assert!(apply_overrides(&cfg, &["grid=1".into()]).is_err());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        // no MNIST files under an empty root: every row fails but the sweep returns
        let (csv, rows) = run_sweep("optimizers", &[], dir.path(), None, false).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.status.starts_with("error")));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn leaky_sweep_runs_on_synthetic_data() {
        let overrides: Vec<String> = [
            "dataset.name=\"synthetic\"",
            "dataset.train_per_class=16",
            "optimizer.epochs=1",
            "model.hidden=[8]",
            "grid=3",
            "checkpoint_every=1",
        ]
        .map(String::from)
        .to_vec();
        let dir = tempfile::tempdir().unwrap();
        let (csv, rows) = run_sweep("leaky-slope-2", &overrides, dir.path(), Some(dir.path()), false).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.status == "ok"), "{csv}");
        assert!(rows.iter().all(|r| r.b_test >= 0.0));
        assert_eq!(std::fs::read_to_string(dir.path().join("leaky-slope-2.csv")).unwrap(), csv);
        assert!(csv.lines().nth(1).unwrap().starts_with("leaky-slope-2,2-layer,slope,0,0,"));
    }
}
