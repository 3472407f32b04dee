//! Linear interpolation between two trained models and the error barrier
//! along that path.
//!
//! For `Θ(α) = (1−α)·Θ_A + α·Θ_B` evaluated at `T` equidistant `α`, the
//! barrier is `B = max_α E(Θ(α)) − ½(E(Θ_A) + E(Θ_B))` and the normalized
//! barrier divides it by the mean endpoint test accuracy.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::nn::{Evaluation, ModelSpec, Network, NnError, ParamSet};
use crate::numerics::Real;

/// Grid size used unless stated otherwise.
pub const DEFAULT_GRID: usize = 11;
/// A pair is called linearly connected when `B_test` is below this.
pub const LMC_THRESHOLD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum LmcError {
    #[error("grid needs at least 2 points, got {0}")]
    Grid(usize),
    #[error("interpolation weight {0} outside [0, 1]")]
    Alpha(f64),
    #[error("mean endpoint accuracy is zero; normalized barrier undefined")]
    ZeroAccuracy,
    #[error("checkpoint schedules differ: {a:?} vs {b:?}")]
    Misaligned { a: Vec<usize>, b: Vec<usize> },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// `{0, 1/(T−1), …, 1}`.
pub fn alpha_grid(t: usize) -> Result<Vec<f64>, LmcError> {
    if t < 2 {
        return Err(LmcError::Grid(t));
    }
    Ok((0..t).map(|i| i as f64 / (t - 1) as f64).collect())
}

/// `(1−α)·a + α·b` for every weight and bias. The endpoints are returned
/// unchanged (bit-exact copies).
pub fn interpolate<T: Real>(a: &ParamSet<T>, b: &ParamSet<T>, alpha: f64) -> Result<ParamSet<T>, LmcError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LmcError::Alpha(alpha));
    }
    a.check_same_shape(b)?;
    Ok(if alpha == 0.0 || a.bit_eq(b) {
        a.clone()
    } else if alpha == 1.0 {
        b.clone()
    } else {
        a.combine(T::of(1.0 - alpha), b, T::of(alpha))?
    })
}

/// Grid point `i` of `t`, with both weights formed from integers so that
/// swapping `a` and `b` mirrors the grid exactly.
fn grid_point<T: Real>(a: &ParamSet<T>, b: &ParamSet<T>, i: usize, t: usize) -> Result<ParamSet<T>, LmcError> {
    let d = (t - 1) as f64;
    Ok(if i == 0 || a.bit_eq(b) {
        a.clone()
    } else if i == t - 1 {
        b.clone()
    } else {
        a.combine(T::of((t - 1 - i) as f64 / d), b, T::of(i as f64 / d))?
    })
}

/// Grid maximum of `curve` minus the mean of the endpoint errors.
pub fn barrier(curve: &[f64], e_a: f64, e_b: f64) -> f64 {
    let peak = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak - 0.5 * (e_a + e_b)
}

/// `B / (½(acc_A + acc_B))`.
pub fn normalized_barrier(b: f64, acc_a: f64, acc_b: f64) -> Result<f64, LmcError> {
    let mean = 0.5 * (acc_a + acc_b);
    if mean <= 0.0 {
        return Err(LmcError::ZeroAccuracy);
    }
    Ok(b / mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// Everything measured along one interpolation path.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierReport {
    pub grid: Vec<GridPoint>,
    pub train_error_a: f64,
    pub train_error_b: f64,
    pub test_error_a: f64,
    pub test_error_b: f64,
    pub test_acc_a: f64,
    pub test_acc_b: f64,
    pub b_train: f64,
    pub b_test: f64,
    /// Both normalized barriers divide by the mean endpoint test accuracy.
    pub nb_train: f64,
    pub nb_test: f64,
    pub threshold: f64,
    /// An endpoint diverged; barriers are NaN and excluded downstream.
    pub diverged: bool,
}

impl BarrierReport {
    /// `B_test < threshold` for a non-diverged pair.
    pub fn is_lmc(&self) -> bool {
        !self.diverged && self.b_test < self.threshold
    }

    /// Flags a pair whose training diverged even if its final parameters
    /// are still finite.
    pub fn mark_diverged(&mut self) {
        self.diverged = true;
        self.b_train = f64::NAN;
        self.b_test = f64::NAN;
        self.nb_train = f64::NAN;
        self.nb_test = f64::NAN;
    }

    pub fn b_train_percent(&self) -> f64 {
        100.0 * self.b_train
    }

    pub fn b_test_percent(&self) -> f64 {
        100.0 * self.b_test
    }

    fn from_grid(grid: Vec<GridPoint>, diverged: bool) -> Result<Self, LmcError> {
        let (first, last) = (grid[0], *grid.last().unwrap());
        let train: Vec<f64> = grid.iter().map(|g| g.train_error).collect();
        let test: Vec<f64> = grid.iter().map(|g| g.test_error).collect();
        let b_train = barrier(&train, first.train_error, last.train_error);
        let b_test = barrier(&test, first.test_error, last.test_error);
        let (acc_a, acc_b) = (1.0 - first.test_error, 1.0 - last.test_error);
        let (nb_train, nb_test) = if diverged {
            (f64::NAN, f64::NAN)
        } else {
            (
                normalized_barrier(b_train, acc_a, acc_b)?,
                normalized_barrier(b_test, acc_a, acc_b)?,
            )
        };
        Ok(Self {
            train_error_a: first.train_error,
            train_error_b: last.train_error,
            test_error_a: first.test_error,
            test_error_b: last.test_error,
            test_acc_a: acc_a,
            test_acc_b: acc_b,
            b_train: if diverged { f64::NAN } else { b_train },
            b_test: if diverged { f64::NAN } else { b_test },
            nb_train,
            nb_test,
            threshold: LMC_THRESHOLD,
            diverged,
            grid,
        })
    }

    /// One `grid` row per α, then a `summary` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,alpha,train_error,test_error,train_loss,test_loss,b_train,b_test,nb_train,nb_test,lmc,diverged\n",
        );
        for g in &self.grid {
            writeln!(
                out,
                "grid,{},{},{},{},{},,,,,,",
                g.alpha, g.train_error, g.test_error, g.train_loss, g.test_loss
            )
            .unwrap();
        }
        writeln!(
            out,
            "summary,,{},{},,,{},{},{},{},{},{}",
            0.5 * (self.train_error_a + self.train_error_b),
            0.5 * (self.test_error_a + self.test_error_b),
            self.b_train,
            self.b_test,
            self.nb_train,
            self.nb_test,
            self.is_lmc() as u8,
            self.diverged as u8
        )
        .unwrap();
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "grid points       {}", self.grid.len()).unwrap();
        writeln!(
            s,
            "endpoint test acc {:.4} / {:.4}",
            self.test_acc_a, self.test_acc_b
        )
        .unwrap();
        writeln!(
            s,
            "endpoint error    train {:.4} / {:.4}  test {:.4} / {:.4}",
            self.train_error_a, self.train_error_b, self.test_error_a, self.test_error_b
        )
        .unwrap();
        writeln!(s, "B_train           {:.6} ({:.2}%)", self.b_train, self.b_train_percent()).unwrap();
        writeln!(s, "B_test            {:.6} ({:.2}%)", self.b_test, self.b_test_percent()).unwrap();
        writeln!(s, "normalized B_train {:.6}", self.nb_train).unwrap();
        writeln!(s, "normalized B_test  {:.6}", self.nb_test).unwrap();
        let verdict = if self.diverged {
            "diverged"
        } else if self.is_lmc() {
            "connected"
        } else {
            "not connected"
        };
        writeln!(s, "verdict           {verdict} (threshold {})", self.threshold).unwrap();
        s
    }
}

fn point<T: Real>(net: &Network, params: &ParamSet<T>, alpha: f64, train: &Dataset, test: &Dataset) -> Result<GridPoint, LmcError> {
    let tr: Evaluation = net.evaluate(params, train)?;
    let te: Evaluation = net.evaluate(params, test)?;
    Ok(GridPoint {
        alpha,
        train_error: tr.error,
        test_error: te.error,
        train_loss: tr.loss,
        test_loss: te.loss,
    })
}

/// Evaluates `T` interpolated models on both splits. Grid points run in
/// parallel; the report is assembled in grid order.
pub fn barrier_scan<T: Real>(
    spec: &ModelSpec,
    a: &ParamSet<T>,
    b: &ParamSet<T>,
    train: &Dataset,
    test: &Dataset,
    t: usize,
) -> Result<BarrierReport, LmcError> {
    let alphas = alpha_grid(t)?;
    let net = Network::new(spec.clone())?;
    net.check_params(a)?;
    a.check_same_shape(b)?;
    let diverged = !a.is_finite() || !b.is_finite();
    let grid = (0..t)
        .into_par_iter()
        .map(|i| {
            let params = grid_point(a, b, i, t)?;
            point(&net, &params, alphas[i], train, test)
        })
        .collect::<Result<Vec<_>, _>>()?;
    BarrierReport::from_grid(grid, diverged)
}

/// One report per shared checkpoint epoch of runs A and B.
pub fn barrier_trajectory<T: Real>(
    spec: &ModelSpec,
    checkpoints_a: &[(usize, ParamSet<T>)],
    checkpoints_b: &[(usize, ParamSet<T>)],
    train: &Dataset,
    test: &Dataset,
    t: usize,
) -> Result<Vec<(usize, BarrierReport)>, LmcError> {
    let epochs = |c: &[(usize, ParamSet<T>)]| c.iter().map(|(e, _)| *e).collect::<Vec<_>>();
    if epochs(checkpoints_a) != epochs(checkpoints_b) {
        return Err(LmcError::Misaligned {
            a: epochs(checkpoints_a),
            b: epochs(checkpoints_b),
        });
    }
    checkpoints_a
        .iter()
        .zip(checkpoints_b)
        .map(|((e, a), (_, b))| Ok((*e, barrier_scan(spec, a, b, train, test, t)?)))
        .collect()
}

pub fn trajectory_csv(trajectory: &[(usize, BarrierReport)]) -> String {
    let mut out = String::from("epoch,b_train,b_test,nb_train,nb_test,test_acc_a,test_acc_b\n");
    for (e, r) in trajectory {
        writeln!(
            out,
            "{e},{},{},{},{},{},{}",
            r.b_train, r.b_test, r.nb_train, r.nb_test, r.test_acc_a, r.test_acc_b
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, Split, SyntheticSpec};
    use crate::nn::{evaluate, init_params, ParamBlock};
    use crate::numerics::{split_rng, Matrix, Stream};

    fn scalar(v: f64) -> ParamSet<f64> {
        ParamSet::new(vec![ParamBlock::new(Matrix::from_vec(1, 1, vec![v]).unwrap(), vec![v])])
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let (a, b) = (scalar(2.0), scalar(4.0));
        assert!(interpolate(&a, &b, 0.0).unwrap().bit_eq(&a));
        assert!(interpolate(&a, &b, 1.0).unwrap().bit_eq(&b));
        assert_eq!(interpolate(&a, &b, 0.5).unwrap(), scalar(3.0));
        for alpha in [0.1, 0.37, 0.9] {
            assert_eq!(interpolate(&a, &a, alpha).unwrap(), a);
        }
        assert!(interpolate(&a, &b, 1.5).is_err());
    }

    #[test]
    fn barrier_fixtures() {
        assert_eq!(barrier(&[0.1; 11], 0.1, 0.1), 0.0);
        assert!((barrier(&[0.1, 0.3, 0.2, 0.1], 0.1, 0.1) - 0.2).abs() < 1e-15);
        assert!((barrier(&[0.0, 0.2, 0.2], 0.0, 0.2) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn normalized_fixtures() {
        assert!((normalized_barrier(0.1, 0.5, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(normalized_barrier(0.07, 1.0, 1.0).unwrap(), 0.07);
        assert_eq!(normalized_barrier(0.0, 0.3, 0.9).unwrap(), 0.0);
        assert!(matches!(normalized_barrier(0.1, 0.0, 0.0), Err(LmcError::ZeroAccuracy)));
    }

    #[test]
    fn random_curves_nonnegative_and_consistent() {
        let mut rng = split_rng(5, Stream::Synthetic);
        for _ in 0..1000 {
            let t = 2 + rng.below(20) as usize;
            let curve: Vec<f64> = (0..t).map(|_| rng.uniform()).collect();
            let b = barrier(&curve, curve[0], curve[t - 1]);
            assert!(b >= 0.0);
            let (aa, ab) = (rng.uniform_in(0.01, 1.0), rng.uniform_in(0.01, 1.0));
            let nb = normalized_barrier(b, aa, ab).unwrap();
            assert!((nb * 0.5 * (aa + ab) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_has_endpoints() {
        let g = alpha_grid(11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!((g[0], g[10]), (0.0, 1.0));
        assert!((g[3] - 0.3).abs() < 1e-16);
        assert!(alpha_grid(1).is_err());
    }

    fn pair() -> (ModelSpec, ParamSet<f64>, ParamSet<f64>, Dataset, Dataset) {
        let s = SyntheticSpec::small();
        let (train, test) = (synthetic(&s, 1, Split::Train), synthetic(&s, 1, Split::Test));
        let spec = ModelSpec::mlp(64, &[8], 4, 0.0);
        let a = init_params(&spec, 1).unwrap();
        let b = init_params(&spec, 2).unwrap();
        (spec, a, b, train, test)
    }

    #[test]
    fn identical_pair_has_zero_barrier() {
        let (spec, a, _, train, test) = pair();
        let r = barrier_scan(&spec, &a, &a, &train, &test, 11).unwrap();
        assert_eq!((r.b_train, r.b_test), (0.0, 0.0));
        assert!(r.is_lmc());
    }

    #[test]
    fn scan_is_symmetric_with_exact_endpoints() {
        let (spec, a, b, train, test) = pair();
        let ab = barrier_scan(&spec, &a, &b, &train, &test, 11).unwrap();
        let ba = barrier_scan(&spec, &b, &a, &train, &test, 11).unwrap();
        assert_eq!(ab.b_test.to_bits(), ba.b_test.to_bits());
        assert_eq!(ab.b_train.to_bits(), ba.b_train.to_bits());
        assert!(ab.b_test >= 0.0 && ab.b_train >= 0.0);
        let direct = evaluate(&spec, &b, &test).unwrap();
        assert_eq!(ab.grid[10].test_error.to_bits(), direct.error.to_bits());
        assert_eq!(ab.grid[10].test_loss.to_bits(), direct.loss.to_bits());
        let csv = ab.to_csv();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.lines().last().unwrap().starts_with("summary,,"));
    }

    #[test]
    fn diverged_endpoint_is_flagged() {
        let (spec, a, mut b, train, test) = pair();
        b.blocks[0].weight.set(0, 0, f64::NAN);
        let r = barrier_scan(&spec, &a, &b, &train, &test, 3).unwrap();
        assert!(r.diverged && !r.is_lmc() && r.b_test.is_nan());
    }

    #[test]
    fn trajectory_alignment() {
        let (spec, a, b, train, test) = pair();
        let ca = vec![(0, a.clone()), (5, a.clone())];
        let cb = vec![(0, a.clone()), (5, b.clone())];
        let traj = barrier_trajectory(&spec, &ca, &cb, &train, &test, 3).unwrap();
        assert_eq!(traj[0].1.b_test, 0.0);
        assert_eq!(trajectory_csv(&traj).lines().count(), 3);
        let constant = barrier_trajectory(&spec, &ca, &ca, &train, &test, 3).unwrap();
        assert!(constant.iter().all(|(_, r)| r.b_test == 0.0 && r.b_train == 0.0));
        assert!(matches!(
            barrier_trajectory(&spec, &ca, &cb[..1], &train, &test, 3),
            Err(LmcError::Misaligned { .. })
        ));
    }
}
