//! Benchmark chaotic flows, a fixed-step RK4 integrator and min–max
//! normalisation of sampled trajectories.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Sampled multivariate trajectory, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    dt: f64,
    channel_names: Vec<String>,
    norm_record: Option<Vec<(f64, f64)>>,
}

impl TimeSeries {
    /// Builds a series from an `L x D` matrix. Empty series (`L = 0`) are
    /// allowed so that zero-length runs have a natural representation.
    pub fn new(values: DMatrix<f64>, dt: f64, channel_names: Vec<String>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::InvalidInput("time series needs at least one channel".into()));
        }
        if channel_names.len() != values.ncols() {
            return Err(dim_err(
                format!("{} channel names", values.ncols()),
                channel_names.len(),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("sample interval must be positive, got {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("time series contains non-finite entries".into()));
        }
        Ok(Self { values, dt, channel_names, norm_record: None })
    }

    /// Skips the finiteness check; used for partial runs that stopped on a
    /// non-finite value.
    pub(crate) fn new_unchecked(values: DMatrix<f64>, dt: f64, channel_names: Vec<String>) -> Self {
        Self { values, dt, channel_names, norm_record: None }
    }

    /// Series with default channel names `u1..uD`.
    pub fn from_matrix(values: DMatrix<f64>, dt: f64) -> Result<Self> {
        let names = (1..=values.ncols()).map(|i| format!("u{i}")).collect();
        Self::new(values, dt, names)
    }

    pub fn scalar(values: &[f64], dt: f64) -> Result<Self> {
        Self::from_matrix(DMatrix::from_column_slice(values.len(), 1, values), dt)
    }

    pub fn with_norm_record(mut self, record: Vec<(f64, f64)>) -> Result<Self> {
        if record.len() != self.channels() {
            return Err(dim_err(self.channels(), record.len()));
        }
        self.norm_record = Some(record);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn norm_record(&self) -> Option<&[(f64, f64)]> {
        self.norm_record.as_deref()
    }

    /// Samples of one channel, in time order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.column(c).iter().copied().collect()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    /// Rows `start..end` as a new series sharing dt, names and norm record.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        let end = end.min(self.len());
        let start = start.min(end);
        TimeSeries {
            values: self.values.rows(start, end - start).into_owned(),
            dt: self.dt,
            channel_names: self.channel_names.clone(),
            norm_record: self.norm_record.clone(),
        }
    }

    /// Maps normalised values back to raw units using the stored record.
    pub fn denormalized(&self) -> Result<DMatrix<f64>> {
        let record = self
            .norm_record
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("series carries no normalisation record".into()))?;
        Ok(denormalize(&self.values, record))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma_l: f64,
    pub rho_l: f64,
    pub beta_l: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self { sigma_l: 10.0, rho_l: 28.0, beta_l: 8.0 / 3.0 }
    }
}

/// Resource–consumer–predator chain. `a20` is the half-saturation constant
/// of the predator's functional response (listed as `b20` in some sources).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoodChainParams {
    pub cap_k: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub a10: f64,
    pub a20: f64,
}

impl Default for FoodChainParams {
    fn default() -> Self {
        Self { cap_k: 0.98, a1: 0.4, b1: 2.009, a2: 0.08, b2: 2.876, a10: 0.16129, a20: 0.5 }
    }
}

/// Benchmark identifier without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Lorenz,
    FoodChain,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Lorenz => "lorenz",
            Benchmark::FoodChain => "food_chain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "lorenz" => Some(Benchmark::Lorenz),
            "food_chain" | "foodchain" => Some(Benchmark::FoodChain),
            _ => None,
        }
    }

    /// System with default parameters.
    pub fn system(self) -> System {
        match self {
            Benchmark::Lorenz => System::Lorenz(LorenzParams::default()),
            Benchmark::FoodChain => System::FoodChain(FoodChainParams::default()),
        }
    }

    /// Default initial condition; any point in the basin of the attractor
    /// works because transients are discarded.
    pub fn default_state0(self) -> [f64; 3] {
        match self {
            Benchmark::Lorenz => [1.0, 1.0, 1.0],
            Benchmark::FoodChain => [0.7, 0.4, 0.8],
        }
    }
}

impl std::fmt::Display for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A benchmark flow together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum System {
    Lorenz(LorenzParams),
    FoodChain(FoodChainParams),
}

const SINGULARITY_EPS: f64 = 1e-12;

impl System {
    pub fn benchmark(&self) -> Benchmark {
        match self {
            System::Lorenz(_) => Benchmark::Lorenz,
            System::FoodChain(_) => Benchmark::FoodChain,
        }
    }

    /// Right-hand side of the flow at `s`.
    pub fn derivative(&self, s: &[f64; 3]) -> Result<[f64; 3]> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite state {s:?}")));
        }
        let [u1, u2, u3] = *s;
        match self {
            System::Lorenz(p) => Ok([
                p.sigma_l * (u2 - u1),
                u1 * (p.rho_l - u3) - u2,
                u1 * u2 - p.beta_l * u3,
            ]),
            System::FoodChain(p) => {
                let d1 = u1 + p.a10;
                let d2 = u2 + p.a20;
                if d1.abs() < SINGULARITY_EPS || d2.abs() < SINGULARITY_EPS {
                    return Err(Error::Singularity(format!(
                        "functional-response denominator vanishes at {s:?}"
                    )));
                }
                Ok([
                    u1 * (1.0 - u1 / p.cap_k) - p.a1 * p.b1 * u2 * u1 / d1,
                    p.a1 * u2 * (p.b1 * u1 / d1 - 1.0) - p.a2 * p.b2 * u3 * u2 / d2,
                    p.a2 * u3 * (p.b2 * u2 / d2 - 1.0),
                ])
            }
        }
    }
}

/// Right-hand side of a benchmark flow.
pub fn system_derivative(system: &System, state: &[f64; 3]) -> Result<[f64; 3]> {
    system.derivative(state)
}

/// Scratch buffers for one classical RK4 step of a `D`-dimensional system.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` in place by one step of size `h`.
    pub fn step<F>(&mut self, deriv: &mut F, state: &mut [f64], h: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = state.len();
        debug_assert_eq!(n, self.k1.len());
        deriv(state, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * h * self.k1[i];
        }
        deriv(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * h * self.k2[i];
        }
        deriv(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = state[i] + h * self.k3[i];
        }
        deriv(&self.tmp, &mut self.k4)?;
        let h6 = h / 6.0;
        for i in 0..n {
            state[i] += h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// Classical RK4 trajectory of `n_steps` steps, initial state included, as
/// an `(n_steps + 1) x D` matrix.
pub fn rk4_integrate<F>(mut deriv: F, state0: &[f64], h: f64, n_steps: usize) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let d = state0.len();
    let mut out = DMatrix::zeros(n_steps + 1, d);
    let mut state = state0.to_vec();
    let mut ws = Rk4Workspace::new(d);
    out.row_mut(0).copy_from_slice(&state);
    for step in 1..=n_steps {
        ws.step(&mut deriv, &mut state, h).map_err(|_| Error::Divergence { step })?;
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        out.row_mut(step).copy_from_slice(&state);
    }
    Ok(out)
}

fn system_closure(system: System) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> {
    move |s: &[f64], ds: &mut [f64]| {
        let d = system.derivative(&[s[0], s[1], s[2]])?;
        ds.copy_from_slice(&d);
        Ok(())
    }
}

/// Integer number of integrator steps per sample, if `dt / h` is integral.
pub fn sample_stride(h: f64, dt: f64) -> Result<usize> {
    if !(h > 0.0 && dt > 0.0 && h.is_finite() && dt.is_finite()) {
        return Err(Error::Config(format!("h and dt must be positive (h={h}, dt={dt})")));
    }
    let ratio = dt / h;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!("dt/h = {ratio} is not an integer stride")));
    }
    Ok(stride as usize)
}

/// Integrates a benchmark, discards `transient_samples`, keeps every
/// `dt / h`-th integrator state and min–max normalises the kept samples.
pub fn generate_benchmark(
    system: System,
    h: f64,
    dt: f64,
    n_samples: usize,
    transient_samples: usize,
    state0: [f64; 3],
) -> Result<TimeSeries> {
    let raw = simulate_benchmark(system, h, dt, n_samples, transient_samples, state0)?;
    let names = vec!["u1".into(), "u2".into(), "u3".into()];
    if n_samples == 1 {
        // A lone sample has no range; it maps to the origin of the unit cube
        // and the record (v, v) still inverts it exactly.
        let record = raw.iter().map(|&v| (v, v)).collect();
        return TimeSeries::new(DMatrix::zeros(1, 3), dt, names)?.with_norm_record(record);
    }
    let (normed, record) = normalize_minmax(&raw)?;
    TimeSeries::new(normed, dt, names)?.with_norm_record(record)
}

/// Subsampled raw trajectory (no normalisation), `n_samples x 3`.
pub fn simulate_benchmark(
    system: System,
    h: f64,
    dt: f64,
    n_samples: usize,
    transient_samples: usize,
    state0: [f64; 3],
) -> Result<DMatrix<f64>> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let stride = sample_stride(h, dt)?;
    let mut deriv = system_closure(system);
    let mut ws = Rk4Workspace::new(3);
    let mut state = state0.to_vec();
    let mut out = DMatrix::zeros(n_samples, 3);
    let total = transient_samples + n_samples;
    let mut step = 0usize;
    for sample in 0..total {
        if sample >= transient_samples {
            out.row_mut(sample - transient_samples).copy_from_slice(&state);
        }
        if sample + 1 == total {
            break;
        }
        for _ in 0..stride {
            step += 1;
            ws.step(&mut deriv, &mut state, h).map_err(|_| Error::Divergence { step })?;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step });
            }
        }
    }
    Ok(out)
}

/// Per-channel min–max normalisation to `[0, 1]`.
pub fn normalize_minmax(raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<(f64, f64)>)> {
    let mut out = raw.clone();
    let mut record = Vec::with_capacity(raw.ncols());
    for (c, mut col) in out.column_iter_mut().enumerate() {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            return Err(Error::DegenerateChannel {
                channel: c,
                reason: "max equals min".into(),
            });
        }
        let span = hi - lo;
        col.iter_mut().for_each(|v| *v = (*v - lo) / span);
        record.push((lo, hi));
    }
    Ok((out, record))
}

/// Applies a recorded normalisation to new raw data.
pub fn apply_normalization(raw: &DMatrix<f64>, record: &[(f64, f64)]) -> DMatrix<f64> {
    let mut out = raw.clone();
    for (mut col, &(lo, hi)) in out.column_iter_mut().zip(record) {
        col.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    out
}

/// Inverse of [`normalize_minmax`].
pub fn denormalize(normed: &DMatrix<f64>, record: &[(f64, f64)]) -> DMatrix<f64> {
    let mut out = normed.clone();
    for (mut col, &(lo, hi)) in out.column_iter_mut().zip(record) {
        col.iter_mut().for_each(|v| *v = lo + *v * (hi - lo));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_deriv(s: &[f64], ds: &mut [f64]) -> Result<()> {
        ds.copy_from_slice(s);
        Ok(())
    }

    #[test]
    fn lorenz_origin_is_fixed() {
        let d = Benchmark::Lorenz.system().derivative(&[0.0; 3]).unwrap();
        assert_eq!(d, [0.0; 3]);
    }

    #[test]
    fn lorenz_at_ones() {
        let d = Benchmark::Lorenz.system().derivative(&[1.0; 3]).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] - (1.0 - 8.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn food_chain_extinction_is_fixed() {
        let d = Benchmark::FoodChain.system().derivative(&[0.0; 3]).unwrap();
        assert_eq!(d, [0.0; 3]);
    }

    #[test]
    fn food_chain_singularity_and_nan() {
        let sys = Benchmark::FoodChain.system();
        let err = sys.derivative(&[-0.16129, 0.1, 0.1]).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)));
        let err = sys.derivative(&[f64::NAN, 0.1, 0.1]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rk4_zero_field_is_constant() {
        let traj = rk4_integrate(
            |_s: &[f64], ds: &mut [f64]| {
                ds.fill(0.0);
                Ok(())
            },
            &[1.5, -2.0],
            0.1,
            20,
        )
        .unwrap();
        assert_eq!(traj.nrows(), 21);
        for r in traj.row_iter() {
            assert_eq!(r[0], 1.5);
            assert_eq!(r[1], -2.0);
        }
    }

    #[test]
    fn rk4_exponential_growth() {
        let traj = rk4_integrate(exp_deriv, &[1.0], 0.01, 100).unwrap();
        assert!((traj[(100, 0)] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn rk4_reports_divergence_step() {
        // dx/dt = x^2 from x0 = 1 blows up at t = 1.
        let err = rk4_integrate(
            |s: &[f64], ds: &mut [f64]| {
                ds[0] = s[0] * s[0];
                Ok(())
            },
            &[1.0],
            0.25,
            50,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { step } if step > 1));
    }

    #[test]
    fn rk4_rejects_bad_step() {
        assert!(rk4_integrate(exp_deriv, &[1.0], 0.0, 10).is_err());
    }

    #[test]
    fn stride_must_be_integral() {
        assert_eq!(sample_stride(1e-3, 0.1).unwrap(), 100);
        assert!(matches!(sample_stride(1e-3, 0.10005), Err(Error::Config(_))));
    }

    #[test]
    fn single_sample_benchmark() {
        let ts = generate_benchmark(Benchmark::Lorenz.system(), 1e-3, 0.1, 1, 0, [1.0, 2.0, 3.0])
            .unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.denormalized().unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        let raw = simulate_benchmark(Benchmark::Lorenz.system(), 1e-3, 0.1, 1, 0, [1.0, 2.0, 3.0])
            .unwrap();
        assert_eq!(raw.nrows(), 1);
        assert_eq!(raw[(0, 2)], 3.0);
    }

    #[test]
    fn lorenz_benchmark_is_normalised() {
        let ts = generate_benchmark(Benchmark::Lorenz.system(), 1e-3, 0.1, 500, 100, [1.0; 3]).unwrap();
        assert_eq!(ts.len(), 500);
        assert_eq!(ts.channels(), 3);
        assert!(ts.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for c in 0..3 {
            let col = ts.channel(c);
            assert_eq!(col.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            assert_eq!(col.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        assert!(ts.norm_record().is_some());
    }

    #[test]
    fn normalize_simple_channel() {
        let raw = DMatrix::from_column_slice(3, 1, &[0.0, 5.0, 10.0]);
        let (n, rec) = normalize_minmax(&raw).unwrap();
        assert_eq!(n.as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(rec, vec![(0.0, 10.0)]);
        let unit = DMatrix::from_column_slice(3, 1, &[0.0, 0.25, 1.0]);
        assert_eq!(normalize_minmax(&unit).unwrap().0, unit);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let raw = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        assert!(matches!(
            normalize_minmax(&raw),
            Err(Error::DegenerateChannel { channel: 1, .. })
        ));
    }

    #[test]
    fn timeseries_rejects_nan() {
        let m = DMatrix::from_column_slice(2, 1, &[0.0, f64::NAN]);
        assert!(TimeSeries::from_matrix(m, 0.1).is_err());
    }
}
