//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The MNIST-backed criteria read `$LMC_DATA_ROOT/mnist` (default: the
//! workspace `data/`). Heavy runs use the desk presets with three seed pairs;
//! MLP runs are switched to f32 to fit the time budget.
//!
//! cargo test --release --test acceptance

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use lmc_core::correspondence::{toeplitz_layout, ConvSpec, TieMode};
use lmc_core::data::Dataset;
use lmc_core::harness::{preset, run_pair_with, verify, ExperimentConfig, ModelConfig, PairResult};
use lmc_core::lmc::{barrier, normalized_barrier};
use lmc_core::numerics::Precision;

const PAIRS: usize = 3;
/// Hidden width of the 8-layer linear networks in the depth×ADAM run.
const LINEAR8_WIDTH: usize = 128;

fn data_root() -> PathBuf {
    match std::env::var("LMC_DATA_ROOT") {
        Ok(p) => PathBuf::from(p),
        Err(_) => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// Written straight to stdout so the lines show up without `--nocapture`.
fn line(n: usize, passed: bool, started: Instant, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let text = format!(
        "criterion {n}: {status} ({:.0}s) {detail}\n",
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

fn suite(name: &str) -> (bool, String) {
    match verify(name, &data_root()) {
        Ok(checks) => {
            let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.to_string()).collect();
            if failed.is_empty() {
                (true, format!("{} checks", checks.len()))
            } else {
                (false, failed.join("; "))
            }
        }
        Err(e) => (false, e.to_string()),
    }
}

fn load_preset(name: &str) -> ExperimentConfig {
    preset(name).unwrap_or_else(|| panic!("missing preset {name}"))
}

fn run(cfg: &ExperimentConfig, data: &(Dataset, Dataset)) -> Result<PairResult, String> {
    run_pair_with(cfg, &data.0, &data.1, None).map_err(|e| format!("{}: {e}", cfg.name))
}

fn pairs_of(name: &str, f32: bool) -> ExperimentConfig {
    let mut cfg = load_preset(name);
    cfg.repeats = PAIRS;
    if f32 {
        cfg.precision = Precision::F32;
    }
    cfg
}

fn b_tests(res: &PairResult) -> Vec<f64> {
    res.pairs
        .iter()
        .map(|p| if p.report.diverged { f64::INFINITY } else { p.report.b_test })
        .collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Free parameters of the two-layer network, counted from the enumerated
/// tie groups of the layout rather than from a formula.
fn layout_count(mode: Option<TieMode>) -> usize {
    let conv = ConvSpec::new(3, 32, 32, 128, (4, 4)).unwrap();
    let head = conv.output_len() * 10 + 10;
    let first = match mode {
        Some(m) => {
            let map = toeplitz_layout(&conv, m).unwrap();
            map.group_count() + map.bias_group_count()
        }
        None => {
            let (rows, cols) = (conv.output_len(), conv.input_len());
            rows * cols + rows
        }
    };
    first + head
}

fn millions(n: usize) -> String {
    format!("{:.2}", n as f64 / 1e6)
}

fn criterion_2() -> (bool, String) {
    let (ok, detail) = suite("correspondence");
    // closed forms: 128 filters of 3×4×4 on 32×32, stride 4 → 8×8×128 outputs
    let outputs = 8 * 8 * 128;
    let head = outputs * 10 + 10;
    let expected = [
        ("CNN", 128 * 48 + 128 + head, "0.09"),
        ("LC", outputs * 48 + outputs + head, "0.48"),
        ("MLP", 3072 * outputs + outputs + head, "25.26"),
    ];
    let built = [
        layout_count(Some(TieMode::Cnn)),
        layout_count(Some(TieMode::Lc)),
        layout_count(None),
    ];
    let mut counts_ok = true;
    let mut parts = Vec::new();
    for ((label, closed, table), got) in expected.iter().zip(built) {
        counts_ok &= got == *closed && millions(got) == *table;
        parts.push(format!("{label} {}M", millions(got)));
    }
    (ok && counts_ok, format!("{detail}; {}", parts.join(", ")))
}

fn criterion_3() -> (bool, String) {
    let (ok, detail) = suite("barrier-math");
    let mut fixtures = true;
    fixtures &= barrier(&[0.3; 11], 0.3, 0.3) == 0.0;
    fixtures &= (barrier(&[0.1, 0.3, 0.2], 0.1, 0.2) - 0.15).abs() < 1e-15;
    // the curve never rises above its endpoints: max is the larger endpoint
    fixtures &= (barrier(&[0.1, 0.15, 0.2], 0.1, 0.2) - 0.05).abs() < 1e-15;
    // random curves, drawn with a plain LCG independent of the crate's RNG
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let curve: Vec<f64> = (0..11).map(|_| next()).collect();
        let (ea, eb) = (curve[0], curve[10]);
        let b = barrier(&curve, ea, eb);
        let max = curve.iter().cloned().fold(f64::MIN, f64::max);
        fixtures &= b >= 0.0 && (b - (max - 0.5 * (ea + eb))).abs() < 1e-15;
        let (acc_a, acc_b) = (0.5 + 0.5 * next(), 0.5 + 0.5 * next());
        let nb = normalized_barrier(b, acc_a, acc_b).unwrap();
        fixtures &= (nb * 0.5 * (acc_a + acc_b) - b).abs() <= 1e-12;
    }
    (ok && fixtures, format!("{detail}; inline fixtures {}", if fixtures { "ok" } else { "broken" }))
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut record = |n: usize, started: Instant, (passed, detail): (bool, String)| {
        line(n, passed, started, &detail);
        if !passed {
            failed.push(n);
        }
    };

    let t = Instant::now();
    record(1, t, suite("gradients"));
    let t = Instant::now();
    record(2, t, criterion_2());
    let t = Instant::now();
    record(3, t, criterion_3());

    let data = match load_preset("mlp1-relu-sgd-high").dataset.load(&data_root()) {
        Ok(d) => d,
        Err(e) => {
            let t = Instant::now();
            for n in 4..=9 {
                record(n, t, (false, format!("MNIST unavailable: {e}")));
            }
            panic!("acceptance failed for criteria {failed:?}");
        }
    };

    // convex case: logistic regression, SGD medium lr, BS 1024 and full batch
    let t = Instant::now();
    let mut logreg_first = None;
    let outcome = (|| -> Result<(bool, String), String> {
        let mut all = Vec::new();
        let mut parts = Vec::new();
        for name in ["logreg-mnist-sgd-med-bs1024", "logreg-mnist-sgd-med-bs30k"] {
            let res = run(&pairs_of(name, false), &data)?;
            let b = b_tests(&res);
            parts.push(format!("{name} B_test {}", fmt(&b)));
            all.extend(b);
            if logreg_first.is_none() {
                logreg_first = Some(res);
            }
        }
        Ok((all.iter().all(|&b| b < 0.01), format!("{} (< 0.01)", parts.join("; "))))
    })();
    record(4, t, outcome.unwrap_or_else(|e| (false, e)));

    // minimal model, SGD high lr
    let t = Instant::now();
    let sgd = run(&pairs_of("mlp1-relu-sgd-high", true), &data);
    let outcome = match &sgd {
        Ok(res) => {
            let b = b_tests(res);
            (b.iter().all(|&x| x < 0.02), format!("mlp1-relu-sgd-high B_test {} (< 0.02)", fmt(&b)))
        }
        Err(e) => (false, e.clone()),
    };
    record(5, t, outcome);

    // optimizer ordering on the same model
    let t = Instant::now();
    let outcome = (|| -> Result<(bool, String), String> {
        let sgd = b_tests(sgd.as_ref().map_err(|e| e.clone())?);
        let adam = b_tests(&run(&pairs_of("mlp1-relu-adam-high", true), &data)?);
        let warm = b_tests(&run(&pairs_of("mlp1-relu-adam-high-warmup", true), &data)?);
        let hits = (0..PAIRS).filter(|&r| adam[r] > sgd[r] && warm[r] < adam[r]).count();
        Ok((
            hits >= 2,
            format!(
                "B_test sgd {} adam {} adam+warmup {}; ordering holds in {hits}/{PAIRS} pairs (need 2)",
                fmt(&sgd),
                fmt(&adam),
                fmt(&warm)
            ),
        ))
    })();
    record(6, t, outcome.unwrap_or_else(|e| (false, e)));

    // depth × ADAM on the 8-layer linear network
    let t = Instant::now();
    let outcome = (|| -> Result<(bool, String), String> {
        let narrow = |name: &str| {
            let mut cfg = pairs_of(name, true);
            cfg.model = ModelConfig::Mlp {
                hidden: vec![LINEAR8_WIDTH; 7],
                slope: 1.0,
            };
            cfg
        };
        let adam = b_tests(&run(&narrow("linear8-mnist-adam-med-bs1024"), &data)?);
        let sgd = b_tests(&run(&narrow("linear8-mnist-sgd-med-bs1024"), &data)?);
        let hits = (0..PAIRS).filter(|&r| adam[r] > 0.10 && sgd[r] < 0.02).count();
        Ok((
            hits >= 2,
            format!(
                "width {LINEAR8_WIDTH}: B_test adam-med {} (> 0.10) sgd-med {} (< 0.02); {hits}/{PAIRS} pairs (need 2)",
                fmt(&adam),
                fmt(&sgd)
            ),
        ))
    })();
    record(7, t, outcome.unwrap_or_else(|e| (false, e)));

    // rerun one pair of the criterion 4 and 5 presets, compare bytes
    let t = Instant::now();
    let outcome = (|| -> Result<(bool, String), String> {
        let mut parts = Vec::new();
        let mut same = true;
        let earlier = [
            logreg_first.as_ref().ok_or("logistic regression run missing")?,
            sgd.as_ref().map_err(|e| e.clone())?,
        ];
        for first in earlier {
            let mut cfg = first.config.clone();
            cfg.repeats = 1;
            let again = run(&cfg, &data)?;
            let (a, b) = (&first.pairs[0], &again.pairs[0]);
            let eq = a.checkpoint_a == b.checkpoint_a
                && a.checkpoint_b == b.checkpoint_b
                && a.init_checkpoint == b.init_checkpoint
                && a.barrier_csv() == b.barrier_csv();
            same &= eq;
            parts.push(format!("{} {}", cfg.name, if eq { "identical" } else { "differs" }));
        }
        Ok((same, parts.join(", ")))
    })();
    record(8, t, outcome.unwrap_or_else(|e| (false, e)));

    // weight sharing: CNN mode against LC mode
    let t = Instant::now();
    let outcome = (|| -> Result<(bool, String), String> {
        let cnn = b_tests(&run(&pairs_of("arch-cnn", true), &data)?);
        let lc = b_tests(&run(&pairs_of("arch-lc", true), &data)?);
        let hits = (0..PAIRS).filter(|&r| cnn[r] > lc[r]).count();
        Ok((
            hits >= 2,
            format!("B_test cnn {} lc {}; cnn > lc in {hits}/{PAIRS} pairs (need 2)", fmt(&cnn), fmt(&lc)),
        ))
    })();
    record(9, t, outcome.unwrap_or_else(|e| (false, e)));

    assert!(failed.is_empty(), "acceptance failed for criteria {failed:?}");
}
