//! The vestibular reservoir: a damped cupula/endolymph oscillator per node
//! (`x`, `y`) driving a FitzHugh-Nagumo hair cell (`v`, `w`). Nodes couple
//! through the connectivity matrix acting on `x`; the input enters the
//! endolymph acceleration. The recorded state is the membrane voltage `v`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{dim_err, Error, Result};
use crate::readout::ReadoutMatrix;
use crate::topology::{ConnectivityMatrix, InputWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VestibularParams {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub d_fhn: f64,
    pub a_fhn: f64,
    pub b_fhn: f64,
    pub sigma_gain: f64,
}

impl Default for VestibularParams {
    fn default() -> Self {
        Self { m: 2.0, c: 12.0, k: 50.0, d_fhn: -3.8, a_fhn: 0.7, b_fhn: 2.0, sigma_gain: 6.5 }
    }
}

impl VestibularParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.c, self.k, self.d_fhn, self.a_fhn, self.b_fhn, self.sigma_gain];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("vestibular parameters must be finite".into()));
        }
        if self.m <= 0.0 {
            return Err(Error::Config(format!("fluid mass must be positive, got {}", self.m)));
        }
        Ok(())
    }

    /// Resting voltage of an unforced node: the real root of
    /// `v^3/3 + (1/b - d) v + a/b = 0`.
    pub fn resting_voltage(&self) -> f64 {
        let p = 1.0 / self.b_fhn - self.d_fhn;
        let q = self.a_fhn / self.b_fhn;
        let f = |v: f64| v * v * v / 3.0 + p * v + q;
        let df = |v: f64| v * v + p;
        let mut v = -q / p;
        for _ in 0..100 {
            let step = f(v) / df(v);
            v -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        v
    }
}

/// Per-node mechanical and neural state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        Self { x: vec![0.0; n], y: vec![0.0; n], v: vec![0.0; n], w: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Unforced fixed point: `x = y = 0`, `v = v*`, `w = (v* + a) / b`.
    pub fn resting(n: usize, params: &VestibularParams) -> Self {
        let v = params.resting_voltage();
        let w = (v + params.a_fhn) / params.b_fhn;
        Self { x: vec![0.0; n], y: vec![0.0; n], v: vec![v; n], w: vec![w; n] }
    }

    fn check(&self) -> Result<usize> {
        let n = self.x.len();
        if self.y.len() != n || self.v.len() != n || self.w.len() != n {
            return Err(Error::InvalidInput("state vectors have unequal lengths".into()));
        }
        Ok(n)
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(4 * self.n());
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.y);
        s.extend_from_slice(&self.v);
        s.extend_from_slice(&self.w);
        s
    }

    fn from_flat(s: &[f64]) -> Self {
        let n = s.len() / 4;
        Self {
            x: s[..n].to_vec(),
            y: s[n..2 * n].to_vec(),
            v: s[2 * n..3 * n].to_vec(),
            w: s[3 * n..].to_vec(),
        }
    }

    fn all_finite(&self) -> bool {
        [&self.x, &self.y, &self.v, &self.w].iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

/// Static description of one reservoir.
///
/// `input_range`, when present, maps each normalized input channel back to
/// physical units (`lo + (hi - lo) * u`) before it reaches the nodes. The
/// readout and the closed-loop feedback stay in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirConfig {
    pub a: ConnectivityMatrix,
    pub w_in: InputWeights,
    pub params: VestibularParams,
    pub time_constant: f64,
    pub substeps: usize,
    pub input_range: Option<Vec<(f64, f64)>>,
}

pub const DEFAULT_TIME_CONSTANT: f64 = 10.0;
pub const DEFAULT_SUBSTEPS: usize = 20;

impl ReservoirConfig {
    pub fn new(a: ConnectivityMatrix, w_in: InputWeights) -> Result<Self> {
        let cfg = Self {
            a,
            w_in,
            params: VestibularParams::default(),
            time_constant: DEFAULT_TIME_CONSTANT,
            substeps: DEFAULT_SUBSTEPS,
            input_range: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_time_constant(mut self, tau: f64) -> Result<Self> {
        self.time_constant = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        self.substeps = substeps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_params(mut self, params: VestibularParams) -> Result<Self> {
        self.params = params;
        self.validate()?;
        Ok(self)
    }

    pub fn with_input_range(mut self, range: Option<Vec<(f64, f64)>>) -> Result<Self> {
        self.input_range = range;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn d(&self) -> usize {
        self.w_in.d()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.w_in.n() != self.a.n() {
            return Err(dim_err(format!("{} input-weight rows", self.a.n()), self.w_in.n()));
        }
        if !(self.time_constant.is_finite() && self.time_constant > 0.0) {
            return Err(Error::Config(format!("time constant must be positive, got {}", self.time_constant)));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        if let Some(r) = &self.input_range {
            if r.len() != self.d() {
                return Err(dim_err(format!("{} input ranges", self.d()), r.len()));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the node equations (without the time constant).
///
/// Returns the derivative as a state-shaped value.
pub fn vestibular_derivative(state: &ReservoirState, u: &[f64], cfg: &ReservoirConfig) -> Result<ReservoirState> {
    let n = state.check()?;
    if n != cfg.n() {
        return Err(dim_err(format!("state of {} nodes", cfg.n()), n));
    }
    if u.len() != cfg.d() {
        return Err(dim_err(format!("{} input channels", cfg.d()), u.len()));
    }
    let sim = Simulator::new(cfg);
    let drive = sim.drive_vector(u);
    let s = state.to_flat();
    let mut ds = vec![0.0; 4 * n];
    sim.rhs(&s, &drive, &mut ds, 1.0);
    Ok(ReservoirState::from_flat(&ds))
}

/// Integration kernel over a flat `[x; y; v; w]` state.
struct Simulator<'a> {
    cfg: &'a ReservoirConfig,
    n: usize,
    diag: Option<Vec<f64>>,
    h: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ReservoirConfig) -> Self {
        let n = cfg.n();
        let z = || vec![0.0; 4 * n];
        Self {
            cfg,
            n,
            diag: cfg.a.diagonal(),
            h: 1.0 / cfg.substeps as f64,
            k: [z(), z(), z(), z()],
            tmp: z(),
        }
    }

    fn with_dt(mut self, dt: f64) -> Self {
        self.h = dt / self.cfg.substeps as f64;
        self
    }

    /// `W_in u`, with `u` first mapped to physical units when configured.
    fn drive_vector(&self, u: &[f64]) -> Vec<f64> {
        let w = self.cfg.w_in.matrix();
        let mut b = vec![0.0; self.n];
        for (j, &uj) in u.iter().enumerate() {
            let val = match &self.cfg.input_range {
                Some(r) => r[j].0 + (r[j].1 - r[j].0) * uj,
                None => uj,
            };
            for (i, bi) in b.iter_mut().enumerate() {
                *bi += w[(i, j)] * val;
            }
        }
        b
    }

    fn rhs(&self, s: &[f64], drive: &[f64], out: &mut [f64], scale: f64) {
        rhs(self.cfg, self.diag.as_deref(), s, drive, out, scale);
    }

    /// One sample interval under a held drive.
    fn advance(&mut self, s: &mut [f64], drive: &[f64]) {
        let h = self.h;
        let tau = self.cfg.time_constant;
        let cfg = self.cfg;
        let diag = self.diag.as_deref();
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        for _ in 0..cfg.substeps {
            rhs(cfg, diag, s, drive, k1, tau);
            for i in 0..s.len() {
                tmp[i] = s[i] + 0.5 * h * k1[i];
            }
            rhs(cfg, diag, tmp, drive, k2, tau);
            for i in 0..s.len() {
                tmp[i] = s[i] + 0.5 * h * k2[i];
            }
            rhs(cfg, diag, tmp, drive, k3, tau);
            for i in 0..s.len() {
                tmp[i] = s[i] + h * k3[i];
            }
            rhs(cfg, diag, tmp, drive, k4, tau);
            for i in 0..s.len() {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
}

fn rhs(cfg: &ReservoirConfig, diag: Option<&[f64]>, s: &[f64], drive: &[f64], out: &mut [f64], scale: f64) {
    let n = cfg.n();
    let p = &cfg.params;
    let (x, rest) = s.split_at(n);
    let (y, rest) = rest.split_at(n);
    let (v, w) = rest.split_at(n);
    let inv_m = 1.0 / p.m;
    let a = cfg.a.matrix();
    for i in 0..n {
        // A is symmetric, so (A x)_i is a contiguous column dot product.
        let coupling = match diag {
            Some(dg) => dg[i] * x[i],
            None => a.column(i).iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>(),
        };
        out[i] = scale * y[i];
        out[n + i] = scale * (inv_m * (-p.c * y[i] - p.k * x[i]) + coupling + drive[i]);
        out[2 * n + i] = scale * (p.d_fhn * v[i] - v[i] * v[i] * v[i] / 3.0 - w[i] + p.sigma_gain * x[i]);
        out[3 * n + i] = scale * (v[i] + p.a_fhn - p.b_fhn * w[i]);
    }
}

/// Drives the reservoir with `input`, holding each sample for one interval,
/// and records `v` after every interval. `state` is advanced in place.
pub fn drive_open_loop(cfg: &ReservoirConfig, input: &TimeSeries, state: &mut ReservoirState) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let n = state.check()?;
    if n != cfg.n() {
        return Err(dim_err(format!("state of {} nodes", cfg.n()), n));
    }
    if input.channels() != cfg.d() {
        return Err(dim_err(format!("{} input channels", cfg.d()), input.channels()));
    }
    let l = input.len();
    let mut out = DMatrix::zeros(n, l);
    if l == 0 {
        return Ok(out);
    }
    let mut sim = Simulator::new(cfg).with_dt(input.dt());
    let mut s = state.to_flat();
    let values = input.values();
    let mut u = vec![0.0; cfg.d()];
    for t in 0..l {
        for (j, uj) in u.iter_mut().enumerate() {
            *uj = values[(t, j)];
        }
        let drive = sim.drive_vector(&u);
        sim.advance(&mut s, &drive);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::ReservoirDivergence { sample: t });
        }
        out.column_mut(t).copy_from_slice(&s[2 * n..3 * n]);
    }
    *state = ReservoirState::from_flat(&s);
    debug_assert!(state.all_finite());
    Ok(out)
}

/// Output of an autonomous run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub series: TimeSeries,
    /// Index of the first out-of-bound prediction, when the run diverged.
    pub diverged_at: Option<usize>,
}

impl ClosedLoopRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Autonomous prediction: each step emits `W_out [v; v^2]` and feeds it back
/// as the next input. Stops early when a prediction is non-finite or
/// exceeds `bound` in magnitude; the partial series then ends with the
/// offending row.
pub fn run_closed_loop(
    cfg: &ReservoirConfig,
    w_out: &ReadoutMatrix,
    state: &mut ReservoirState,
    n_steps: usize,
    dt: f64,
    bound: f64,
) -> Result<ClosedLoopRun> {
    cfg.validate()?;
    let n = state.check()?;
    let wm = w_out.matrix();
    if n != cfg.n() || wm.ncols() != 2 * n || wm.nrows() != cfg.d() {
        return Err(dim_err(format!("{}x{} readout", cfg.d(), 2 * cfg.n()), format!("{}x{}", wm.nrows(), wm.ncols())));
    }
    let d = cfg.d();
    let mut sim = Simulator::new(cfg).with_dt(dt);
    let mut s = state.to_flat();
    let mut rows: Vec<f64> = Vec::with_capacity(n_steps * d);
    let mut diverged_at = None;
    let mut u = vec![0.0; d];
    for t in 0..n_steps {
        let v = &s[2 * n..3 * n];
        for (c, uc) in u.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &vi) in v.iter().enumerate() {
                acc += wm[(c, i)] * vi + wm[(c, n + i)] * vi * vi;
            }
            *uc = acc;
        }
        rows.extend_from_slice(&u);
        if u.iter().any(|x| !x.is_finite() || x.abs() > bound) {
            diverged_at = Some(t);
            break;
        }
        let drive = sim.drive_vector(&u);
        sim.advance(&mut s, &drive);
    }
    let len = rows.len() / d;
    let names = (1..=d).map(|i| format!("u{i}")).collect();
    let values = DMatrix::from_row_slice(len, d, &rows);
    let series = if diverged_at.is_some() {
        TimeSeries::new_unchecked(values, dt, names)
    } else {
        TimeSeries::new(values, dt, names)?
    };
    *state = ReservoirState::from_flat(&s);
    Ok(ClosedLoopRun { series, diverged_at })
}
