//! SGD with momentum, ADAM, linear warmup, gradient clipping and the
//! epoch loop that trains one model under one seed triple.

mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NnError, ParamSet};
use crate::numerics::Real;

pub use train::{train, write_metrics_csv, CheckpointSchedule, EpochMetrics, TrainOutcome, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Adam => "adam",
        })
    }
}

/// Named learning-rate levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrLevel {
    High,
    Medium,
    Low,
}

impl LrLevel {
    pub fn rate(self, algorithm: Algorithm) -> Option<f64> {
        match (algorithm, self) {
            (Algorithm::Sgd, LrLevel::High) => Some(0.1),
            (Algorithm::Sgd, LrLevel::Medium) => Some(0.01),
            (Algorithm::Sgd, LrLevel::Low) => Some(0.001),
            (Algorithm::Adam, LrLevel::High) => Some(0.005),
            (Algorithm::Adam, LrLevel::Medium) => Some(0.001),
            (Algorithm::Adam, LrLevel::Low) => None,
        }
    }
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub warmup_epochs: usize,
    /// Global-norm clipping threshold.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 penalty added to the gradient (off by default).
    #[serde(default)]
    pub weight_decay: f64,
}

impl OptimizerConfig {
    /// Preset learning rate for `algorithm` at `level`, other settings at
    /// their defaults.
    pub fn preset(algorithm: Algorithm, level: LrLevel, epochs: usize, batch_size: usize) -> Result<Self, OptimError> {
        let lr = level
            .rate(algorithm)
            .ok_or_else(|| OptimError::Config(format!("no {level:?} learning rate preset for {algorithm}")))?;
        Ok(Self {
            algorithm,
            lr,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            warmup_epochs: 0,
            clip_norm: None,
            epochs,
            batch_size,
            weight_decay: 0.0,
        })
    }

    pub fn sgd_high(epochs: usize, batch_size: usize) -> Self {
        Self::preset(Algorithm::Sgd, LrLevel::High, epochs, batch_size).unwrap()
    }

    pub fn sgd_medium(epochs: usize, batch_size: usize) -> Self {
        Self::preset(Algorithm::Sgd, LrLevel::Medium, epochs, batch_size).unwrap()
    }

    pub fn sgd_low(epochs: usize, batch_size: usize) -> Self {
        Self::preset(Algorithm::Sgd, LrLevel::Low, epochs, batch_size).unwrap()
    }

    pub fn adam_high(epochs: usize, batch_size: usize) -> Self {
        Self::preset(Algorithm::Adam, LrLevel::High, epochs, batch_size).unwrap()
    }

    pub fn adam_medium(epochs: usize, batch_size: usize) -> Self {
        Self::preset(Algorithm::Adam, LrLevel::Medium, epochs, batch_size).unwrap()
    }

    pub fn with_warmup(mut self, epochs: usize) -> Self {
        self.warmup_epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup {} exceeds {} epochs",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("momentum and betas must lie in [0, 1)".into());
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 {
            return bad("eps must be positive and weight decay non-negative".into());
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return bad(format!("clip threshold {c} must be positive"));
            }
        }
        Ok(())
    }
}

/// Learning rate for `epoch` (0-based): `base·(epoch+1)/warmup` during warmup,
/// `base` afterwards.
pub fn lr_at(config: &OptimizerConfig, epoch: usize) -> f64 {
    if epoch < config.warmup_epochs {
        config.lr * (epoch + 1) as f64 / config.warmup_epochs as f64
    } else {
        config.lr
    }
}

/// Per-parameter optimizer memory. Never interpolated.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState<T = f64> {
    Sgd { buffer: ParamSet<T> },
    Adam { m: ParamSet<T>, v: ParamSet<T>, step: u64 },
}

impl<T: Real> OptimizerState<T> {
    pub fn new(algorithm: Algorithm, params: &ParamSet<T>) -> Self {
        match algorithm {
            Algorithm::Sgd => OptimizerState::Sgd {
                buffer: params.zeros_like(),
            },
            Algorithm::Adam => OptimizerState::Adam {
                m: params.zeros_like(),
                v: params.zeros_like(),
                step: 0,
            },
        }
    }
}

/// `buffer ← μ·buffer + g`, then `θ ← θ − lr·buffer`.
pub fn sgd_step<T: Real>(params: &mut ParamSet<T>, grads: &ParamSet<T>, buffer: &mut ParamSet<T>, lr: T, momentum: T) {
    for ((p, g), b) in params.slices_mut().zip(grads.slices()).zip(buffer.slices_mut()) {
        for ((p, &g), b) in p.iter_mut().zip(g).zip(b.iter_mut()) {
            *b = momentum * *b + g;
            *p = *p - lr * *b;
        }
    }
}

/// Bias-corrected ADAM update; increments `step` first.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamSet<T>,
    m: &mut ParamSet<T>,
    v: &mut ParamSet<T>,
    step: &mut u64,
    lr: T,
    (beta1, beta2): (T, T),
    eps: T,
) {
    *step += 1;
    let t = *step as i32;
    let c1 = T::one() - beta1.powi(t);
    let c2 = T::one() - beta2.powi(t);
    let one = T::one();
    for (((p, g), m), v) in params.slices_mut().zip(grads.slices()).zip(m.slices_mut()).zip(v.slices_mut()) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// One update under `config` at learning rate `lr`, with optional weight
/// decay folded into the gradient.
pub fn apply_step<T: Real>(
    config: &OptimizerConfig,
    params: &mut ParamSet<T>,
    grads: &mut ParamSet<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<(), OptimError> {
    if config.weight_decay > 0.0 {
        grads.axpy(T::of(config.weight_decay), params)?;
    }
    match state {
        OptimizerState::Sgd { buffer } => sgd_step(params, grads, buffer, T::of(lr), T::of(config.momentum)),
        OptimizerState::Adam { m, v, step } => adam_step(
            params,
            grads,
            m,
            v,
            step,
            T::of(lr),
            (T::of(config.beta1), T::of(config.beta2)),
            T::of(config.eps),
        ),
    }
    Ok(())
}

/// Rescales `grads` to global norm `max_norm` when it is larger. Returns the
/// norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut ParamSet<T>, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(T::of(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamBlock;
    use crate::numerics::Matrix;

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet::new(vec![ParamBlock::new(Matrix::from_vec(1, 1, vec![v]).unwrap(), vec![])])
    }

    fn value(p: &ParamSet<f64>) -> f64 {
        p.blocks[0].weight.get(0, 0)
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar(1.0);
        let mut buf = scalar(0.0);
        sgd_step(&mut p, &scalar(0.5), &mut buf, 1.0, 0.0);
        assert_eq!(value(&p), 0.5);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.3);
        let mut buf = scalar(0.0);
        for _ in 0..5 {
            sgd_step(&mut p, &scalar(0.0), &mut buf, 0.1, 0.9);
        }
        assert_eq!(value(&p), 0.3);
        let (mut m, mut v, mut t) = (scalar(0.0), scalar(0.0), 0);
        for _ in 0..5 {
            adam_step(&mut p, &scalar(0.0), &mut m, &mut v, &mut t, 0.1, (0.9, 0.999), 1e-8);
        }
        assert_eq!(value(&p), 0.3);
    }

    #[test]
    fn momentum_matches_unrolled() {
        let (lr, mu, g1, g2) = (0.1, 0.9, 0.5, -0.2);
        let mut p = scalar(1.0);
        let mut buf = scalar(0.0);
        sgd_step(&mut p, &scalar(g1), &mut buf, lr, mu);
        sgd_step(&mut p, &scalar(g2), &mut buf, lr, mu);
        let b1 = g1;
        let b2 = mu * b1 + g2;
        let expect = 1.0 - lr * b1 - lr * b2;
        assert!((value(&p) - expect).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        for g in [3.0, -0.02] {
            let mut p = scalar(0.0);
            let (mut m, mut v, mut t) = (scalar(0.0), scalar(0.0), 0);
            adam_step(&mut p, &scalar(g), &mut m, &mut v, &mut t, 0.005, (0.9, 0.999), 1e-8);
            // exact value is -lr·g/(|g| + eps)
            let slack = 0.005 * 1e-8 / f64::abs(g);
            assert!((value(&p) + 0.005 * f64::signum(g)).abs() <= slack * 1.001);
        }
    }

    #[test]
    fn adam_matches_scalar_recurrence() {
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7];
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut p = scalar(0.5);
        let (mut m, mut v, mut t) = (scalar(0.0), scalar(0.0), 0);
        let (mut w, mut mm, mut vv) = (0.5f64, 0.0f64, 0.0f64);
        for (k, &g) in grads.iter().enumerate() {
            adam_step(&mut p, &scalar(g), &mut m, &mut v, &mut t, lr, (b1, b2), eps);
            mm = b1 * mm + (1.0 - b1) * g;
            vv = b2 * vv + (1.0 - b2) * g * g;
            let n = (k + 1) as i32;
            w -= lr * (mm / (1.0 - b1.powi(n))) / ((vv / (1.0 - b2.powi(n))).sqrt() + eps);
        }
        assert_eq!(t, 5);
        assert!((value(&p) - w).abs() < 1e-12);
    }

    #[test]
    fn warmup_schedule() {
        let c = OptimizerConfig::adam_high(200, 128).with_warmup(10);
        assert_eq!(lr_at(&c, 10), 0.005);
        assert_eq!(lr_at(&c, 150), 0.005);
        assert!((lr_at(&c, 4) - 0.0025).abs() < 1e-18);
        assert!((lr_at(&c, 0) - 0.0005).abs() < 1e-18);
        let rates: Vec<f64> = (0..20).map(|e| lr_at(&c, e)).collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]));
        let flat = OptimizerConfig::sgd_medium(5, 32);
        assert!((0..5).all(|e| lr_at(&flat, e) == 0.01));
    }

    #[test]
    fn presets() {
        assert_eq!(OptimizerConfig::sgd_high(1, 1).lr, 0.1);
        assert_eq!(OptimizerConfig::sgd_medium(1, 1).lr, 0.01);
        assert_eq!(OptimizerConfig::sgd_low(1, 1).lr, 0.001);
        assert_eq!(OptimizerConfig::adam_high(1, 1).lr, 0.005);
        assert_eq!(OptimizerConfig::adam_medium(1, 1).lr, 0.001);
        assert!(OptimizerConfig::preset(Algorithm::Adam, LrLevel::Low, 1, 1).is_err());
        assert!(OptimizerConfig::sgd_high(5, 1).with_warmup(6).validate().is_err());
    }

    #[test]
    fn clipping() {
        let mut g = scalar(0.5);
        assert_eq!(clip_gradients(&mut g, 1.0), 0.5);
        assert_eq!(value(&g), 0.5);
        let mut g = ParamSet::new(vec![ParamBlock::new(
            Matrix::from_vec(1, 2, vec![0.0, 4.0]).unwrap(),
            vec![0.0],
        )]);
        assert_eq!(clip_gradients(&mut g, 1.0), 4.0);
        assert!((g.l2_norm() - 1.0).abs() < 1e-12);
        assert_eq!(g.blocks[0].weight.get(0, 1), 1.0);
        let mut z = scalar(0.0);
        clip_gradients(&mut z, 1.0);
        assert_eq!(value(&z), 0.0);
    }

    #[test]
    fn config_toml_rejects_unknown_keys() {
        let ok: OptimizerConfig = toml::from_str("algorithm = \"sgd\"\nlr = 0.1\nepochs = 3\nbatch_size = 8\n").unwrap();
        assert_eq!(ok.momentum, 0.9);
        assert!(toml::from_str::<OptimizerConfig>("algorithm = \"sgd\"\nlr = 0.1\nepochs = 3\nbatch_size = 8\nmomentun = 0.5\n").is_err());
    }
}
