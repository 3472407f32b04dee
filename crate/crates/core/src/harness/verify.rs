use std::fmt;
use std::path::Path;

use super::{preset, run_pair_with, DatasetConfig, DatasetName, ExperimentConfig, HarnessError, ModelConfig, RunBSeeds};
use crate::correspondence::{
    conv_forward_oracle, dense_from_conv, kernel_len, two_layer_param_count, AttentionSpec, ConvSpec, LayerVariant,
    TieMode,
};
use crate::data::{synthetic, SeedTriple, Split, SyntheticSpec};
use crate::lmc::{barrier, barrier_scan, normalized_barrier};
use crate::nn::{gradient_check, init_params, Batch, ModelSpec, FD_STEP};
use crate::numerics::{split_rng, Matrix, Precision, Rng, Stream};
use crate::optim::OptimizerConfig;

pub const SUITES: [&str; 5] = ["gradients", "correspondence", "barrier-math", "determinism", "desk-repro"];

/// Instances per layer kind in the randomized suites.
const INSTANCES: usize = 20;
const GRAD_TOL: f64 = 1e-6;
const CONV_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

fn check(suite: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        suite,
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Runs a named suite. `data_root` is only read by `desk-repro`.
pub fn verify(suite: &str, data_root: &Path) -> Result<Vec<Check>, HarnessError> {
    match suite {
        "gradients" => gradients(),
        "correspondence" => correspondence(),
        "barrier-math" => barrier_math(),
        "determinism" => determinism(),
        "desk-repro" => desk_repro(data_root),
        _ => Err(HarnessError::UnknownSuite(suite.to_string())),
    }
}

fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

fn random_batch(rng: &mut Rng, input: usize, classes: usize) -> Batch<f64> {
    let n = pick(rng, 2, 6);
    let inputs = Matrix::from_fn(n, input, |_, _| rng.uniform_in(-1.0, 1.0));
    let labels = (0..n).map(|_| rng.below(classes as u64) as usize).collect();
    Batch::new(inputs, labels).expect("consistent batch")
}

fn random_conv(rng: &mut Rng) -> ConvSpec {
    let (k1, k2) = (pick(rng, 1, 3), pick(rng, 1, 3));
    let (h, w) = (k1 * pick(rng, 1, 3), k2 * pick(rng, 1, 3));
    ConvSpec::new(pick(rng, 1, 3), h, w, pick(rng, 1, 3), (k1, k2)).expect("positive, divisible dims")
}

/// One random model of each kind per instance, gradient-checked in f64.
fn gradients() -> Result<Vec<Check>, HarnessError> {
    let mut out = Vec::new();
    let mut rng = split_rng(2024, Stream::Synthetic);
    for i in 0..INSTANCES {
        let slope = [0.0, 0.01, 0.3, 1.0][i % 4];
        let classes = pick(&mut rng, 2, 4);
        let hidden: Vec<usize> = (0..pick(&mut rng, 0, 2)).map(|_| pick(&mut rng, 2, 6)).collect();
        let conv = random_conv(&mut rng);
        let patch = pick(&mut rng, 1, 2);
        let attention = AttentionSpec {
            channels: pick(&mut rng, 1, 2),
            height: patch * pick(&mut rng, 1, 3),
            width: patch * pick(&mut rng, 1, 3),
            patch,
            heads: pick(&mut rng, 1, 2),
            head_dim: pick(&mut rng, 1, 3),
            outputs: classes,
        };
        let models = [
            ("dense", ModelSpec::mlp(pick(&mut rng, 2, 7), &hidden, classes, slope)),
            ("lc", ModelSpec::structured(conv, TieMode::Lc, classes, slope)),
            ("cnn", ModelSpec::structured(conv, TieMode::Cnn, classes, slope)),
            ("attention", ModelSpec::attention(attention)),
        ];
        for (kind, spec) in models {
            let seed = rng.next_u64();
            let mut params = init_params::<f64>(&spec, seed)?;
            for b in &mut params.blocks {
                for v in &mut b.bias {
                    *v = rng.uniform_in(-0.1, 0.1);
                }
            }
            let batch = random_batch(&mut rng, spec.input_dim(), spec.classes());
            let g = gradient_check(&spec, &params, &batch, FD_STEP)?;
            out.push(check(
                "gradients",
                format!("{kind}-{i}"),
                g.rel_error < GRAD_TOL,
                format!("rel error {:.2e} over {} coordinates", g.rel_error, g.coordinates),
            ));
        }
    }
    Ok(out)
}

fn correspondence() -> Result<Vec<Check>, HarnessError> {
    let mut out = Vec::new();
    let mut rng = split_rng(7, Stream::Synthetic);
    for i in 0..INSTANCES {
        let spec = random_conv(&mut rng);
        for mode in [TieMode::Cnn, TieMode::Lc] {
            let kernel: Vec<f64> = (0..kernel_len(&spec, mode)).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let input: Vec<f64> = (0..spec.input_len()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let direct = conv_forward_oracle(&spec, mode, &kernel, &input)?;
            let dense = dense_from_conv(&spec, &kernel, mode)?;
            let x = Matrix::from_vec(spec.input_len(), 1, input).expect("column");
            let via_dense = dense.matmul(&x).expect("shapes agree");
            let err = direct
                .iter()
                .zip(via_dense.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(check(
                "correspondence",
                format!("{mode}-{i}"),
                err <= CONV_TOL,
                format!("{spec:?}: max |Δ| {err:.1e}"),
            ));
        }
    }
    let spec = ConvSpec::new(3, 32, 32, 128, (4, 4))?;
    for (variant, millions) in [(LayerVariant::Cnn, "0.09"), (LayerVariant::Lc, "0.48"), (LayerVariant::Mlp, "25.26")] {
        let n = two_layer_param_count(&spec, variant, 10);
        let shown = format!("{:.2}", n as f64 / 1e6);
        out.push(check(
            "correspondence",
            format!("param-count-{variant:?}").to_lowercase(),
            shown == millions,
            format!("{n} parameters = {shown}M, expected {millions}M"),
        ));
    }
    Ok(out)
}

fn barrier_math() -> Result<Vec<Check>, HarnessError> {
    let mut out = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let fixtures: [(&str, Vec<f64>, f64); 3] = [
        ("constant", vec![0.1; 11], 0.0),
        ("interior-peak", vec![0.1, 0.2, 0.3, 0.2, 0.1], 0.2),
        ("endpoint-mean", vec![0.0, 0.2, 0.2], 0.1),
    ];
    for (name, curve, want) in fixtures {
        let got = barrier(&curve, curve[0], *curve.last().unwrap());
        out.push(check("barrier-math", name, close(got, want), format!("B = {got}, expected {want}")));
    }
    for (name, b, acc_a, acc_b, want) in [
        ("normalized-half", 0.1, 0.5, 0.5, 0.2),
        ("normalized-identity", 0.07, 1.0, 1.0, 0.07),
        ("normalized-zero", 0.0, 0.3, 0.9, 0.0),
    ] {
        let got = normalized_barrier(b, acc_a, acc_b)?;
        out.push(check("barrier-math", name, close(got, want), format!("B̄ = {got}, expected {want}")));
    }
    out.push(check(
        "barrier-math",
        "zero-accuracy",
        normalized_barrier(0.1, 0.0, 0.0).is_err(),
        "zero mean accuracy is an error",
    ));

    let mut rng = split_rng(11, Stream::Synthetic);
    let (mut negatives, mut worst) = (0usize, 0.0f64);
    for _ in 0..1000 {
        let n = pick(&mut rng, 2, 21);
        let curve: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let b = barrier(&curve, curve[0], curve[n - 1]);
        if b < 0.0 {
            negatives += 1;
        }
        let (acc_a, acc_b) = (rng.uniform_in(0.05, 1.0), rng.uniform_in(0.05, 1.0));
        let nb = normalized_barrier(b, acc_a, acc_b)?;
        worst = worst.max((nb * 0.5 * (acc_a + acc_b) - b).abs());
    }
    out.push(check(
        "barrier-math",
        "non-negative",
        negatives == 0,
        format!("{negatives} of 1000 random curves negative"),
    ));
    out.push(check(
        "barrier-math",
        "normalization-consistency",
        worst < 1e-12,
        format!("max |B̄·mean acc − B| {worst:.1e}"),
    ));

    let s = SyntheticSpec::small();
    let (train_set, test_set) = (synthetic(&s, 1, Split::Train), synthetic(&s, 1, Split::Test));
    let spec = ModelSpec::mlp(s.channels * s.height * s.width, &[8], s.classes, 0.0);
    let a = init_params::<f64>(&spec, 1)?;
    let b = init_params::<f64>(&spec, 2)?;
    let ab = barrier_scan(&spec, &a, &b, &train_set, &test_set, 11)?;
    let ba = barrier_scan(&spec, &b, &a, &train_set, &test_set, 11)?;
    out.push(check(
        "barrier-math",
        "symmetry",
        ab.b_train == ba.b_train && ab.b_test == ba.b_test,
        format!("B_test {} vs {}", ab.b_test, ba.b_test),
    ));
    let aa = barrier_scan(&spec, &a, &a, &train_set, &test_set, 11)?;
    out.push(check(
        "barrier-math",
        "identical-pair",
        aa.b_train == 0.0 && aa.b_test == 0.0,
        format!("B_train {} B_test {}", aa.b_train, aa.b_test),
    ));
    Ok(out)
}

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "determinism".into(),
        dataset: DatasetConfig::named(DatasetName::Synthetic, None),
        model: ModelConfig::Mlp {
            hidden: vec![16],
            slope: 0.0,
        },
        optimizer: OptimizerConfig::sgd_high(3, 32),
        seeds: SeedTriple::new(5, 43, 43),
        run_b: None,
        augmentation: crate::data::Augmentation::TranslateFlip,
        grid: 11,
        checkpoint_every: Some(1),
        trajectory_samples: None,
        precision: Precision::F64,
        repeats: 1,
        output: None,
    }
}

fn determinism() -> Result<Vec<Check>, HarnessError> {
    let mut out = Vec::new();
    let cfg = tiny_config();
    let (train_set, test_set) = cfg.dataset.load(Path::new("."))?;
    let r1 = run_pair_with(&cfg, &train_set, &test_set, None)?;
    let r2 = run_pair_with(&cfg, &train_set, &test_set, None)?;
    let (p1, p2) = (&r1.pairs[0], &r2.pairs[0]);
    out.push(check(
        "determinism",
        "checkpoints",
        p1.checkpoint_a == p2.checkpoint_a && p1.checkpoint_b == p2.checkpoint_b,
        "final checkpoints byte-identical on rerun",
    ));
    out.push(check(
        "determinism",
        "barrier-csv",
        p1.barrier_csv() == p2.barrier_csv() && p1.trajectory_csv() == p2.trajectory_csv(),
        "barrier and trajectory CSVs byte-identical on rerun",
    ));
    out.push(check(
        "determinism",
        "noise-matters",
        p1.checkpoint_a != p1.checkpoint_b,
        "runs A and B differ under different loader seeds",
    ));
    let mut same = cfg.clone();
    same.run_b = Some(RunBSeeds {
        loader: cfg.seeds.loader,
        augmentation: cfg.seeds.augmentation,
    });
    let r = run_pair_with(&same, &train_set, &test_set, None)?;
    out.push(check(
        "determinism",
        "identical-seeds",
        r.report().b_test == 0.0 && r.pairs[0].checkpoint_a == r.pairs[0].checkpoint_b,
        format!("B_test {} with shared seeds", r.report().b_test),
    ));
    Ok(out)
}

/// Short single-pair MNIST runs of the convex and minimal-model presets.
fn desk_repro(data_root: &Path) -> Result<Vec<Check>, HarnessError> {
    let mut out = Vec::new();
    let first = preset("logreg-mnist-sgd-med-bs1024").expect("catalog preset");
    let (train_set, test_set) = match first.dataset.load(data_root) {
        Ok(d) => d,
        Err(e) => {
            out.push(check("desk-repro", "mnist", false, e.to_string()));
            return Ok(out);
        }
    };
    for (name, limit) in [
        ("logreg-mnist-sgd-med-bs1024", 0.01),
        ("logreg-mnist-sgd-med-bs30k", 0.01),
        ("mlp1-relu-sgd-high", 0.02),
    ] {
        let mut cfg = preset(name).expect("catalog preset");
        cfg.precision = Precision::F32;
        cfg.checkpoint_every = None;
        let r = run_pair_with(&cfg, &train_set, &test_set, None)?;
        let rep = r.report();
        out.push(check(
            "desk-repro",
            name,
            !rep.diverged && rep.b_test < limit,
            format!("B_test {:.4} (limit {limit}), test acc {:.4}/{:.4}", rep.b_test, rep.test_acc_a, rep.test_acc_b),
        ));
    }
    Ok(out)
}
