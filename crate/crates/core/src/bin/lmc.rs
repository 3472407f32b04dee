use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lmc_core::harness::{
    apply_overrides, emit_plot, preset, preset_names, run_pair, run_sweep, sweep_names, verify, ExperimentConfig,
    HarnessError, PlotKind, SUITES,
};

#[derive(Parser)]
#[command(name = "lmc", version, about = "Paired training and linear mode connectivity barriers")]
struct Cli {
    /// Directory holding mnist/, cifar-10-batches-bin/ and cifar-100-binary/.
    #[arg(long, env = "LMC_DATA_ROOT", default_value = "data", global = true)]
    data_root: PathBuf,
    /// Output root; each experiment writes a subdirectory.
    #[arg(long, default_value = "runs", global = true)]
    out: PathBuf,
    /// Full datasets and 200 epochs instead of the desk-scale defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one pair from a TOML config file or a preset name.
    Run {
        config: String,
        /// Override a config key, e.g. `optimizer.epochs=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run every configuration of a named sweep.
    Sweep {
        name: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render a barrier or sweep CSV as SVG.
    Plot {
        csv: PathBuf,
        /// barrier-vs-alpha, barrier-vs-slope or barrier-vs-dataset.
        #[arg(long)]
        kind: String,
        /// Defaults to the CSV path with an .svg extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a verification suite; exits nonzero on any failure.
    Verify { suite: String },
    /// List presets and sweeps.
    Presets,
}

fn load_config(arg: &str) -> Result<ExperimentConfig, HarnessError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ExperimentConfig::from_toml(&text)
    } else {
        preset(arg).ok_or_else(|| HarnessError::UnknownPreset(arg.to_string()))
    }
}

fn real_main(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut cfg = load_config(&config)?;
            if cli.paper_scale {
                cfg.to_paper_scale();
            }
            let cfg = apply_overrides(&cfg, &overrides)?;
            let dir = cfg.output.as_ref().map(PathBuf::from).unwrap_or_else(|| cli.out.join(&cfg.name));
            let result = run_pair(&cfg, &cli.data_root, Some(&dir))?;
            for p in &result.pairs {
                if result.pairs.len() > 1 {
                    println!("pair {}", p.repeat);
                }
                print!("{}", p.report.summary());
            }
            println!("outputs in {}", dir.display());
            Ok(true)
        }
        Command::Sweep { name, overrides } => {
            let (_, rows) = run_sweep(&name, &overrides, &cli.data_root, Some(&cli.out), cli.paper_scale)?;
            for r in &rows {
                println!(
                    "{:<16} {:<18} B_test {:.4}  B̄_test {:.4}  {}",
                    r.series, r.value, r.b_test, r.nb_test, r.status
                );
            }
            println!("wrote {}", cli.out.join(format!("{name}.csv")).display());
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::Plot { csv, kind, output } => {
            let kind = PlotKind::parse(&kind).ok_or_else(|| HarnessError::Plot(format!("unknown kind `{kind}`")))?;
            let text = std::fs::read_to_string(&csv).map_err(|source| HarnessError::Io {
                path: csv.clone(),
                source,
            })?;
            let svg = emit_plot(&text, kind)?;
            let target = output.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&target, svg).map_err(|source| HarnessError::Io {
                path: target.clone(),
                source,
            })?;
            println!("wrote {}", target.display());
            Ok(true)
        }
        Command::Verify { suite } => {
            let suites: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut ok = true;
            for s in suites {
                for c in verify(s, &cli.data_root)? {
                    ok &= c.passed;
                    println!("{c}");
                }
            }
            Ok(ok)
        }
        Command::Presets => {
            for n in preset_names() {
                println!("{n}");
            }
            for n in sweep_names() {
                println!("sweep {n}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("lmc: {e}");
            return ExitCode::FAILURE;
        }
    }
    match real_main(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("lmc: {e}");
            ExitCode::FAILURE
        }
    }
}
