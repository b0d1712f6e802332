//! Linear memory: empirical memory functions for any recorded state matrix,
//! the closed-form memory function of a linear reservoir, and capacities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{dim_err, Error, Result};
use crate::linalg::squared_correlation;
use crate::readout::{augment, ridge_solve};
use crate::reservoir::{drive_open_loop, ReservoirConfig, ReservoirState};
use crate::topology::{ConnectivityMatrix, InputWeights};

pub const DEFAULT_WINDOW: usize = 500;
pub const DEFAULT_T0: usize = 200;
pub const DEFAULT_TAU_MAX: usize = 100;
pub const DEFAULT_MEMORY_RIDGE: f64 = 1e-8;
/// Relative cutoff on the eigenvalues of `H H^T` in the analytic memory
/// function. Directions weaker than this cannot be resolved by a ridge fit
/// on a few hundred samples, so the analytic curve drops them too.
pub const ANALYTIC_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMethod {
    /// Fit on `[tau, T)`, evaluate on the undelayed states `[0, T - tau)`.
    Standard,
    /// Fit and evaluate on `[tau, T)` against the delayed target.
    Alternative,
    /// Fixed state window `[t0, t0 + T)` for every delay.
    Refined,
    Analytic,
}

impl MemoryMethod {
    pub fn name(self) -> &'static str {
        match self {
            MemoryMethod::Standard => "standard",
            MemoryMethod::Alternative => "alternative",
            MemoryMethod::Refined => "refined",
            MemoryMethod::Analytic => "analytic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(MemoryMethod::Standard),
            "alternative" => Some(MemoryMethod::Alternative),
            "refined" => Some(MemoryMethod::Refined),
            "analytic" => Some(MemoryMethod::Analytic),
            _ => None,
        }
    }
}

/// Memory function over delays `0..=tau_max` and its sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryCurve {
    pub mf: Vec<f64>,
    pub mc: f64,
    pub method: MemoryMethod,
    pub t_window: usize,
    pub t0: usize,
    /// Delays whose target or prediction had zero variance.
    pub degenerate: Vec<usize>,
}

impl MemoryCurve {
    pub fn new(mf: Vec<f64>, method: MemoryMethod, t_window: usize, t0: usize) -> Self {
        let mc = memory_capacity(&mf);
        Self { mf, mc, method, t_window, t0, degenerate: Vec::new() }
    }

    pub fn tau_max(&self) -> usize {
        self.mf.len().saturating_sub(1)
    }

    /// Rows `tau,mf,method,trial`.
    pub fn to_csv(&self, trial: usize) -> String {
        let mut s = String::from("tau,mf,method,trial\n");
        for (tau, v) in self.mf.iter().enumerate() {
            s.push_str(&format!("{tau},{v},{},{trial}\n", self.method.name()));
        }
        s
    }
}

pub fn memory_capacity(mf: &[f64]) -> f64 {
    mf.iter().sum()
}

/// I.i.d. uniform `[0, 1]` scalar series with unit sample interval.
pub fn stochastic_input<R: Rng + ?Sized>(t_total: usize, rng: &mut R) -> Result<TimeSeries> {
    if t_total == 0 {
        return Err(Error::Config("stochastic input needs at least one sample".into()));
    }
    let v: Vec<f64> = (0..t_total).map(|_| rng.random::<f64>()).collect();
    TimeSeries::scalar(&v, 1.0)
}

/// Discrete linear reservoir `r(t+1) = A r(t) + w_in u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEsn {
    pub a: ConnectivityMatrix,
    pub w_in: InputWeights,
}

impl LinearEsn {
    pub fn new(a: ConnectivityMatrix, w_in: InputWeights) -> Result<Self> {
        if a.spectral_radius() >= 1.0 {
            return Err(Error::Config(format!("linear reservoir needs spectral radius < 1, got {}", a.spectral_radius())));
        }
        if w_in.d() != 1 || w_in.n() != a.n() {
            return Err(dim_err(format!("{}x1 input weights", a.n()), format!("{}x{}", w_in.n(), w_in.d())));
        }
        Ok(Self { a, w_in })
    }
}

/// States `r(1), ..., r(T)`; column `t` has seen inputs `u(0..=t)`.
pub fn linear_esn_run(esn: &LinearEsn, u: &[f64], r0: Option<&[f64]>) -> Result<DMatrix<f64>> {
    let n = esn.a.n();
    if esn.a.spectral_radius() >= 1.0 {
        return Err(Error::Config("linear reservoir is not stable".into()));
    }
    let mut r = match r0 {
        Some(r0) if r0.len() != n => return Err(dim_err(n, r0.len())),
        Some(r0) => DVector::from_column_slice(r0),
        None => DVector::zeros(n),
    };
    let w = esn.w_in.matrix().column(0).into_owned();
    let diag = esn.a.diagonal();
    let a = esn.a.matrix();
    let mut out = DMatrix::zeros(n, u.len());
    for (t, &ut) in u.iter().enumerate() {
        r = match &diag {
            Some(d) => DVector::from_fn(n, |i, _| d[i] * r[i] + w[i] * ut),
            None => a * &r + &w * ut,
        };
        out.set_column(t, &r);
    }
    Ok(out)
}

/// Value of one memory-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Column windows `(fit, evaluate)` and the target offset for one delay.
fn windows(method: MemoryMethod, tau: usize, t0: usize, t_window: usize, available: usize) -> Result<(usize, usize, usize)> {
    let (start, len) = match method {
        MemoryMethod::Refined => {
            if tau > t0 {
                return Err(Error::InvalidInput(format!("delay {tau} exceeds window offset {t0}")));
            }
            (t0, t_window)
        }
        MemoryMethod::Standard | MemoryMethod::Alternative => {
            if tau >= t_window {
                return Err(Error::InvalidInput(format!("delay {tau} must be below window {t_window}")));
            }
            (tau, t_window - tau)
        }
        MemoryMethod::Analytic => return Err(Error::InvalidInput("analytic memory has no empirical window".into())),
    };
    if start + len > available {
        return Err(Error::InsufficientData(format!("need {} samples, have {available}", start + len)));
    }
    Ok((start, len, tau))
}

/// Squared correlation between the `tau`-delayed input and its linear
/// reconstruction from `states` (already augmented if desired). Fits are
/// centred and ridge-regularised.
#[allow(clippy::too_many_arguments)]
pub fn memory_function(
    states: &DMatrix<f64>,
    u: &[f64],
    tau: usize,
    method: MemoryMethod,
    t0: usize,
    t_window: usize,
    ridge_lambda: f64,
) -> Result<MemoryValue> {
    if states.ncols() != u.len() {
        return Err(dim_err(format!("{} state columns", u.len()), states.ncols()));
    }
    let (start, len, tau) = windows(method, tau, t0, t_window, u.len())?;
    if len < 2 {
        return Err(Error::InsufficientData("memory window shorter than two samples".into()));
    }
    let fit = states.columns(start, len).into_owned();
    let target: Vec<f64> = (start..start + len).map(|t| u[t - tau]).collect();
    let mean = fit.column_mean();
    let centred = center(&fit, &mean);
    let ty = target.iter().sum::<f64>() / len as f64;
    let y = DMatrix::from_row_slice(1, len, &target.iter().map(|v| v - ty).collect::<Vec<_>>());
    let w = ridge_solve(&centred, &y, ridge_lambda)?;
    let (pred, truth) = match method {
        MemoryMethod::Standard => {
            let eval = center(&states.columns(0, len).into_owned(), &mean);
            ((w * eval).row(0).iter().copied().collect::<Vec<_>>(), target)
        }
        _ => ((w * centred).row(0).iter().copied().collect(), target),
    };
    Ok(match squared_correlation(&truth, &pred) {
        Some(v) => MemoryValue { value: v, degenerate: false },
        None => MemoryValue { value: 0.0, degenerate: true },
    })
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

/// Memory function for delays `0..=tau_max`.
pub fn memory_curve(
    states: &DMatrix<f64>,
    u: &[f64],
    tau_max: usize,
    method: MemoryMethod,
    t0: usize,
    t_window: usize,
    ridge_lambda: f64,
) -> Result<MemoryCurve> {
    let mut mf = Vec::with_capacity(tau_max + 1);
    let mut degenerate = Vec::new();
    for tau in 0..=tau_max {
        let v = memory_function(states, u, tau, method, t0, t_window, ridge_lambda)?;
        if v.degenerate {
            degenerate.push(tau);
        }
        mf.push(v.value);
    }
    let mut curve = MemoryCurve::new(mf, method, t_window, t0);
    curve.degenerate = degenerate;
    Ok(curve)
}

/// `H[i, k] = lambda_i^k` for delays `k < T`.
fn delay_matrix(eigs: &[f64], t_window: usize) -> DMatrix<f64> {
    DMatrix::from_fn(eigs.len(), t_window, |i, k| eigs[i].powi(k as i32))
}

fn check_eigs(eigs: &[f64], t_window: usize) -> Result<()> {
    if eigs.iter().any(|l| !(l.abs() < 1.0)) {
        return Err(Error::InvalidInput("eigenvalues must lie strictly inside (-1, 1)".into()));
    }
    if t_window == 0 {
        return Err(Error::InvalidInput("window length must be at least 1".into()));
    }
    Ok(())
}

/// Right singular vectors of `H` spanning its numerical row space. The
/// cutoff on singular values is `sqrt(ANALYTIC_RTOL)`, i.e. `ANALYTIC_RTOL`
/// on the eigenvalues of `H H^T`.
fn row_space(eigs: &[f64], t_window: usize) -> DMatrix<f64> {
    let h = delay_matrix(eigs, t_window);
    let svd = h.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    let cut = ANALYTIC_RTOL.sqrt() * top;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > cut).collect();
    DMatrix::from_fn(keep.len(), t_window, |r, c| v_t[(keep[r], c)])
}

/// Closed-form memory function of a linear reservoir for delays
/// `0..=tau_max`: `h_tau^T (H H^T)^+ h_tau` with `h_tau = (lambda_i^tau)`,
/// evaluated as the diagonal of the projection onto the row space of `H`.
pub fn analytic_curve(eigs: &[f64], t_window: usize, tau_max: usize) -> Result<MemoryCurve> {
    check_eigs(eigs, t_window)?;
    if tau_max >= t_window {
        return Err(Error::InvalidInput(format!("delay {tau_max} must be below window {t_window}")));
    }
    let mf = if eigs.is_empty() {
        vec![0.0; tau_max + 1]
    } else {
        let v = row_space(eigs, t_window);
        (0..=tau_max).map(|tau| v.column(tau).norm_squared().clamp(0.0, 1.0)).collect()
    };
    Ok(MemoryCurve::new(mf, MemoryMethod::Analytic, t_window, 0))
}

pub fn analytic_mf_linear(eigs: &[f64], t_window: usize, tau: usize) -> Result<f64> {
    Ok(analytic_curve(eigs, t_window, tau)?.mf[tau])
}

/// Total analytic capacity over all `T` delays. The sum telescopes to the
/// trace of a projection, i.e. `rank(H)`.
pub fn analytic_mc(eigs: &[f64], t_window: usize) -> Result<f64> {
    Ok(analytic_rank(eigs, t_window)? as f64)
}

/// Numerical rank of `H`.
pub fn analytic_rank(eigs: &[f64], t_window: usize) -> Result<usize> {
    check_eigs(eigs, t_window)?;
    if eigs.is_empty() {
        return Ok(0);
    }
    Ok(row_space(eigs, t_window).nrows())
}

/// Refined memory curve of the vestibular reservoir driven by the scalar
/// series `u`, on squared-augmented voltages.
pub fn memory_curve_vestibular(
    cfg: &ReservoirConfig,
    u: &TimeSeries,
    tau_max: usize,
    t_window: usize,
    t0: usize,
    ridge_lambda: f64,
) -> Result<MemoryCurve> {
    if u.channels() != 1 || cfg.d() != 1 {
        return Err(dim_err("scalar input and weights", format!("{} / {} channels", u.channels(), cfg.d())));
    }
    let mut state = ReservoirState::zeros(cfg.n());
    let states = augment(&drive_open_loop(cfg, u, &mut state)?);
    memory_curve(&states, &u.channel(0), tau_max, MemoryMethod::Refined, t0, t_window, ridge_lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use crate::topology::{build_coupled, build_input_weights, build_uncoupled, match_spectrum_uncoupled};
    use proptest::prelude::*;

    fn esn(a: ConnectivityMatrix, seed: u64) -> LinearEsn {
        let w = build_input_weights(a.n(), 1, 1.0, &mut rng_from_seed(seed)).unwrap();
        LinearEsn::new(a, w).unwrap()
    }

    #[test]
    fn stochastic_input_stats() {
        let a = stochastic_input(100_000, &mut rng_from_seed(1)).unwrap();
        let b = stochastic_input(100_000, &mut rng_from_seed(1)).unwrap();
        assert_eq!(a, b);
        let x = a.channel(0);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        // Uniform [0, 1]: sd = 1/sqrt(12).
        assert!((mean - 0.5).abs() < 3.0 / (12f64.sqrt() * n.sqrt()));
        let lag1 = crate::metrics::autocorrelation(&x, 1)[1];
        assert!(lag1.abs() < 3.0 / n.sqrt());
        assert!(stochastic_input(0, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn linear_zero_input() {
        let e = esn(build_uncoupled(5, 0.9, &mut rng_from_seed(2)).unwrap(), 3);
        assert_eq!(linear_esn_run(&e, &[0.0; 20], None).unwrap(), DMatrix::zeros(5, 20));
    }

    #[test]
    fn linear_single_node_unrolled() {
        let a = ConnectivityMatrix::from_diagonal(&[0.7]);
        let w = InputWeights::new(DMatrix::from_element(1, 1, 0.4), 1.0).unwrap();
        let e = LinearEsn::new(a, w).unwrap();
        let u: Vec<f64> = (0..15).map(|t| ((t * 7) % 5) as f64 / 5.0).collect();
        let r = linear_esn_run(&e, &u, None).unwrap();
        for t in 0..u.len() {
            let expected: f64 = (0..=t).map(|i| 0.7f64.powi(i as i32) * 0.4 * u[t - i]).sum();
            assert!((r[(0, t)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_states_bounded() {
        let e = esn(build_coupled(10, 0.4, 0.9, &mut rng_from_seed(4)).unwrap(), 5);
        let u = stochastic_input(2000, &mut rng_from_seed(6)).unwrap().channel(0);
        let r = linear_esn_run(&e, &u, None).unwrap();
        let bound = e.w_in.matrix().norm() * 1.0 / (1.0 - 0.9);
        assert!(r.column_iter().all(|c| c.norm() <= bound + 1e-9));
    }

    #[test]
    fn unstable_esn_rejected() {
        let a = ConnectivityMatrix::from_diagonal(&[-1.2]);
        let w = InputWeights::new(DMatrix::from_element(1, 1, 0.4), 1.0).unwrap();
        assert!(matches!(LinearEsn::new(a, w), Err(Error::Config(_))));
    }

    #[test]
    fn single_node_closed_form() {
        for &l in &[0.3, 0.6, 0.9, -0.5] {
            let curve = analytic_curve(&[l], 50, 20).unwrap();
            for (tau, v) in curve.mf.iter().enumerate() {
                let exact = l.powi(2 * tau as i32) * (1.0 - l * l) / (1.0 - l.powi(100));
                assert!((v - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_eigenvalues_collapse() {
        let one = analytic_curve(&[0.8], 100, 30).unwrap();
        let two = analytic_curve(&[0.8, 0.8], 100, 30).unwrap();
        for (a, b) in one.mf.iter().zip(&two.mf) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((analytic_mc(&[0.5; 4], 100).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_capacity_is_rank() {
        let eigs = [0.1, -0.3, 0.5, 0.7, -0.8];
        let t = 60;
        let curve = analytic_curve(&eigs, t, t - 1).unwrap();
        assert!((curve.mc - 5.0).abs() < 1e-6);
        assert!((analytic_mc(&eigs, t).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(analytic_rank(&eigs, t).unwrap(), 5);
        assert_eq!(analytic_mc(&[], t).unwrap(), 0.0);
    }

    #[test]
    fn analytic_rejects_unstable() {
        assert!(analytic_curve(&[1.0], 10, 3).is_err());
        assert!(analytic_curve(&[0.5], 10, 10).is_err());
    }

    #[test]
    fn unregularised_fit_matches_least_squares_oracle() {
        // Independent oracle: ordinary least squares with an intercept via SVD;
        // the in-sample squared correlation equals 1 - SSE / SST.
        let e = esn(build_uncoupled(6, 0.8, &mut rng_from_seed(7)).unwrap(), 8);
        let u = stochastic_input(300, &mut rng_from_seed(9)).unwrap().channel(0);
        let r = linear_esn_run(&e, &u, None).unwrap();
        for tau in [0usize, 3, 10] {
            let (t0, tw) = (50, 250);
            let v = memory_function(&r, &u, tau, MemoryMethod::Refined, t0, tw, 0.0).unwrap();
            let design = DMatrix::from_fn(tw, 7, |t, j| if j == 0 { 1.0 } else { r[(j - 1, t0 + t)] });
            let y = DVector::from_fn(tw, |t, _| u[t0 + t - tau]);
            let beta = design.clone().svd(true, true).solve(&y, 1e-14).unwrap();
            let resid = &y - &design * beta;
            let ym = y.mean();
            let sst: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
            let oracle = 1.0 - resid.norm_squared() / sst;
            assert!((v.value - oracle).abs() < 1e-8, "tau {tau}: {} vs {oracle}", v.value);
        }
    }

    #[test]
    fn constant_states_are_degenerate() {
        let r = DMatrix::from_element(3, 400, 2.0);
        let u = stochastic_input(400, &mut rng_from_seed(10)).unwrap().channel(0);
        let v = memory_function(&r, &u, 5, MemoryMethod::Alternative, 0, 300, 1e-8).unwrap();
        assert_eq!(v, MemoryValue { value: 0.0, degenerate: true });
    }

    #[test]
    fn window_checks() {
        let r = DMatrix::zeros(2, 100);
        let u = vec![0.0; 100];
        assert!(memory_function(&r, &u, 30, MemoryMethod::Refined, 20, 50, 1e-8).is_err());
        assert!(memory_function(&r, &u, 0, MemoryMethod::Refined, 60, 50, 1e-8).is_err());
        assert!(memory_function(&r, &u, 0, MemoryMethod::Analytic, 0, 50, 1e-8).is_err());
        assert!(memory_function(&r, &u[..50], 0, MemoryMethod::Standard, 0, 50, 1e-8).is_err());
    }

    #[test]
    fn empirical_tracks_analytic() {
        let trials = 40;
        let (t_window, t0, tau_max) = (DEFAULT_WINDOW, DEFAULT_T0, 30);
        let mut mean = vec![0.0; tau_max + 1];
        let mut analytic = vec![0.0; tau_max + 1];
        for trial in 0..trials {
            let mut rng = rng_from_seed(100 + trial);
            let a = build_uncoupled(20, 0.9, &mut rng).unwrap();
            let e = esn(a, 200 + trial);
            let u = stochastic_input(t0 + t_window, &mut rng).unwrap().channel(0);
            let r = linear_esn_run(&e, &u, None).unwrap();
            let c = memory_curve(&r, &u, tau_max, MemoryMethod::Refined, t0, t_window, DEFAULT_MEMORY_RIDGE).unwrap();
            let an = analytic_curve(e.a.eigenvalues(), t_window, tau_max).unwrap();
            for tau in 0..=tau_max {
                mean[tau] += c.mf[tau] / trials as f64;
                analytic[tau] += an.mf[tau] / trials as f64;
            }
        }
        let gap = mean.iter().zip(&analytic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 0.05, "gap {gap}");
    }

    #[test]
    fn spectrum_equivalence_analytic() {
        let c = build_coupled(12, 0.4, 0.9, &mut rng_from_seed(11)).unwrap();
        let u = match_spectrum_uncoupled(&c).unwrap();
        let a = analytic_curve(c.eigenvalues(), 200, 60).unwrap();
        let b = analytic_curve(&u.diagonal().unwrap(), 200, 60).unwrap();
        assert_eq!(a.mf, b.mf);
    }

    #[test]
    fn curve_csv_layout() {
        let c = MemoryCurve::new(vec![1.0, 0.5], MemoryMethod::Refined, 500, 200);
        assert_eq!(c.mc, 1.5);
        assert_eq!(c.to_csv(3), "tau,mf,method,trial\n0,1,refined,3\n1,0.5,refined,3\n");
        assert_eq!(memory_capacity(&[]), 0.0);
        assert_eq!(memory_capacity(&[1.0]), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn analytic_permutation_invariant(eigs in proptest::collection::vec(-0.95f64..0.95, 1..8), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let mut shuffled = eigs.clone();
            shuffled.shuffle(&mut rng_from_seed(seed));
            let a = analytic_curve(&eigs, 100, 40).unwrap();
            let b = analytic_curve(&shuffled, 100, 40).unwrap();
            for (x, y) in a.mf.iter().zip(&b.mf) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn analytic_capacity_bounded_by_size(eigs in proptest::collection::vec(-0.95f64..0.95, 0..10)) {
            let mc = analytic_mc(&eigs, 150).unwrap();
            let rank = analytic_rank(&eigs, 150).unwrap() as f64;
            prop_assert!((mc - rank).abs() < 1e-6);
            prop_assert!(mc <= eigs.len() as f64 + 1e-9);
        }

        #[test]
        fn empirical_mf_in_unit_interval(seed in 0u64..200, n in 1usize..8, which in 0usize..3) {
            let method = [MemoryMethod::Standard, MemoryMethod::Alternative, MemoryMethod::Refined][which];
            let mut rng = rng_from_seed(seed);
            let e = esn(build_coupled(n, 0.4, 0.8, &mut rng).unwrap(), seed + 1);
            let u = stochastic_input(260, &mut rng).unwrap().channel(0);
            let r = linear_esn_run(&e, &u, None).unwrap();
            let (t0, tw) = if method == MemoryMethod::Refined { (60, 200) } else { (0, 260) };
            let c = memory_curve(&r, &u, 40, method, t0, tw, DEFAULT_MEMORY_RIDGE).unwrap();
            prop_assert!(c.mf.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
            prop_assert!((c.mc - c.mf.iter().sum::<f64>()).abs() < 1e-9);
        }
    }
}
