//! Experiment orchestration: single train/validate/test pipelines, seeded
//! ensembles over reservoir sizes, random hyperparameter search, and the
//! CSV layouts used by the command-line tool.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{generate_benchmark, Benchmark, TimeSeries};
use crate::error::{Error, Result};
use crate::linalg::mean_std;
use crate::memory::{self, memory_curve_vestibular, stochastic_input, MemoryCurve};
use crate::metrics::{
    build_histogram, deviation_value, kl_divergence, largest_lyapunov, LyapunovParams, PredictionStats,
};
use crate::readout::{augment, nrmse, predict_open, ridge_fit, ReadoutMatrix};
use crate::reservoir::{drive_open_loop, run_closed_loop, ReservoirConfig, ReservoirState, VestibularParams};
use crate::topology::{
    build_coupled, build_input_weights, build_uncoupled, couple_with_spectrum, match_spectrum_uncoupled,
    ConnectivityMatrix, InputWeights,
};
use crate::SeededRng;

/// How the connectivity matrix of a run is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Coupled,
    Uncoupled,
    /// Diagonal twin of a freshly drawn coupled network.
    UncoupledMatched,
    /// Dense coupled network sharing a random diagonal network's spectrum.
    CoupledMatched,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Coupled => "coupled",
            Topology::Uncoupled => "uncoupled",
            Topology::UncoupledMatched => "uncoupled_matched",
            Topology::CoupledMatched => "coupled_matched",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Topology::Coupled, Topology::Uncoupled, Topology::UncoupledMatched, Topology::CoupledMatched]
            .into_iter()
            .find(|t| t.name() == s)
    }

    /// Whether the resulting matrix is coupled.
    pub fn is_coupled(self) -> bool {
        matches!(self, Topology::Coupled | Topology::CoupledMatched)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every knob of one experiment. Serialises to flat `key=value` text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: Benchmark,
    pub topology: Topology,
    pub n: usize,
    pub gamma: f64,
    pub rho: f64,
    pub lambda: f64,
    pub density: f64,
    pub l_transient: usize,
    pub l_train: usize,
    pub l_validation: usize,
    pub l_test: usize,
    pub seed: u64,
    pub substeps: usize,
    pub time_constant: f64,
    /// Benchmark integrator step.
    pub h: f64,
    /// Benchmark sample interval.
    pub dt: f64,
    /// Samples of the benchmark flow discarded before any data is kept.
    pub warmup: usize,
    /// Drive the reservoir with inputs mapped back to physical units.
    pub physical_input: bool,
    pub grid: usize,
    pub divergence_bound: f64,
    pub lyapunov: bool,
    pub memory: bool,
    pub tau_max: usize,
    pub t_window: usize,
    pub t0: usize,
    pub memory_lambda: f64,
}

pub const DEFAULT_L_TEST: usize = 10_000;
pub const DEFAULT_CLIMATE_GRID: usize = 10;

impl ExperimentConfig {
    /// Tuned settings for a benchmark/topology pair.
    pub fn preset(system: Benchmark, topology: Topology) -> Self {
        let (gamma, rho, lambda) = match (system, topology.is_coupled()) {
            (Benchmark::Lorenz, true) => (1.0, 0.8, 1e-4),
            (Benchmark::Lorenz, false) => (1.0, 0.5, 1e-4),
            (Benchmark::FoodChain, true) => (3.5, 0.2, 1e-5),
            (Benchmark::FoodChain, false) => (3.5, 0.7, 1e-5),
        };
        // Driven in physical units the food-chain closed loop leaves the attractor
        // within a few hundred steps, so it gets the normalised series instead.
        let (l_train, dt, time_constant, physical_input) = match system {
            Benchmark::Lorenz => (10_000, 0.1, crate::reservoir::DEFAULT_TIME_CONSTANT, true),
            Benchmark::FoodChain => (50_000, 1.0, 4.0, false),
        };
        Self {
            system,
            topology,
            n: 30,
            gamma,
            rho,
            lambda,
            density: 0.4,
            l_transient: 10_000,
            l_train,
            l_validation: 5_000,
            l_test: DEFAULT_L_TEST,
            seed: 0,
            substeps: crate::reservoir::DEFAULT_SUBSTEPS,
            time_constant,
            h: 1e-3,
            dt,
            warmup: 2_000,
            physical_input,
            grid: DEFAULT_CLIMATE_GRID,
            divergence_bound: crate::metrics::DEFAULT_DIVERGENCE_BOUND,
            lyapunov: true,
            memory: false,
            tau_max: memory::DEFAULT_TAU_MAX,
            t_window: memory::DEFAULT_WINDOW,
            t0: memory::DEFAULT_T0,
            memory_lambda: memory::DEFAULT_MEMORY_RIDGE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n", self.n),
            ("l_train", self.l_train),
            ("l_validation", self.l_validation),
            ("substeps", self.substeps),
            ("grid", self.grid),
            ("t_window", self.t_window),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.l_validation < 2 || self.l_train < 2 {
            return Err(Error::Config("train and validation need at least two samples".into()));
        }
        let pos = [("gamma", self.gamma >= 0.0), ("rho", self.rho > 0.0), ("lambda", self.lambda >= 0.0)];
        for (k, ok) in pos {
            if !ok {
                return Err(Error::Config(format!("{k} out of range")));
            }
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density must be in (0, 1], got {}", self.density)));
        }
        if !(self.time_constant > 0.0 && self.h > 0.0 && self.dt > 0.0 && self.divergence_bound > 0.0) {
            return Err(Error::Config("time constant, h, dt and divergence bound must be positive".into()));
        }
        if self.memory && self.tau_max > self.t0 {
            return Err(Error::Config(format!("tau_max {} exceeds t0 {}", self.tau_max, self.t0)));
        }
        Ok(())
    }

    /// Flat `key=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("system", self.system.name().to_string()),
            ("topology", self.topology.name().to_string()),
            ("n", self.n.to_string()),
            ("gamma", fmt_f64(self.gamma)),
            ("rho", fmt_f64(self.rho)),
            ("lambda", fmt_f64(self.lambda)),
            ("density", fmt_f64(self.density)),
            ("l_transient", self.l_transient.to_string()),
            ("l_train", self.l_train.to_string()),
            ("l_validation", self.l_validation.to_string()),
            ("l_test", self.l_test.to_string()),
            ("seed", self.seed.to_string()),
            ("substeps", self.substeps.to_string()),
            ("time_constant", fmt_f64(self.time_constant)),
            ("h", fmt_f64(self.h)),
            ("dt", fmt_f64(self.dt)),
            ("warmup", self.warmup.to_string()),
            ("physical_input", self.physical_input.to_string()),
            ("grid", self.grid.to_string()),
            ("divergence_bound", fmt_f64(self.divergence_bound)),
            ("lyapunov", self.lyapunov.to_string()),
            ("memory", self.memory.to_string()),
            ("tau_max", self.tau_max.to_string()),
            ("t_window", self.t_window.to_string()),
            ("t0", self.t0.to_string()),
            ("memory_lambda", fmt_f64(self.memory_lambda)),
        ]
    }

    /// Parses `key=value` text. `system` and `topology` (when present)
    /// select the preset; remaining keys override it. Blank lines and `#`
    /// comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key=value, got '{line}'") })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let find = |key: &str| entries.iter().rev().find(|e| e.1 == key);
        let system = match find("system") {
            Some((line, _, v)) => {
                Benchmark::parse(v).ok_or_else(|| Error::Parse { line: *line, msg: format!("unknown system '{v}'") })?
            }
            None => Benchmark::Lorenz,
        };
        let topology = match find("topology") {
            Some((line, _, v)) => {
                Topology::parse(v).ok_or_else(|| Error::Parse { line: *line, msg: format!("unknown topology '{v}'") })?
            }
            None => Topology::Coupled,
        };
        let mut cfg = Self::preset(system, topology);
        for (line, k, v) in &entries {
            cfg.set(k, v).map_err(|msg| Error::Parse { line: *line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|_| format!("invalid value '{v}' for {key}"))
        }
        match key {
            "system" => self.system = Benchmark::parse(value).ok_or(format!("unknown system '{value}'"))?,
            "topology" => self.topology = Topology::parse(value).ok_or(format!("unknown topology '{value}'"))?,
            "n" => self.n = p(key, value)?,
            "gamma" => self.gamma = p(key, value)?,
            "rho" => self.rho = p(key, value)?,
            "lambda" => self.lambda = p(key, value)?,
            "density" => self.density = p(key, value)?,
            "l_transient" => self.l_transient = p(key, value)?,
            "l_train" => self.l_train = p(key, value)?,
            "l_validation" => self.l_validation = p(key, value)?,
            "l_test" => self.l_test = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "substeps" => self.substeps = p(key, value)?,
            "time_constant" => self.time_constant = p(key, value)?,
            "h" => self.h = p(key, value)?,
            "dt" => self.dt = p(key, value)?,
            "warmup" => self.warmup = p(key, value)?,
            "physical_input" => self.physical_input = p(key, value)?,
            "grid" => self.grid = p(key, value)?,
            "divergence_bound" => self.divergence_bound = p(key, value)?,
            "lyapunov" => self.lyapunov = p(key, value)?,
            "memory" => self.memory = p(key, value)?,
            "tau_max" => self.tau_max = p(key, value)?,
            "t_window" => self.t_window = p(key, value)?,
            "t0" => self.t0 = p(key, value)?,
            "memory_lambda" => self.memory_lambda = p(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    fn total_open_loop(&self) -> usize {
        self.l_transient + self.l_train + self.l_validation
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Benchmark::Lorenz, Topology::Coupled)
    }
}

fn fmt_f64(v: f64) -> String {
    // `{:?}` round-trips exactly through `parse`.
    format!("{v:?}")
}

const STREAM_TOPOLOGY: u64 = 1;
const STREAM_INPUT: u64 = 2;
const STREAM_MEMORY: u64 = 3;
const STREAM_TRIALS: u64 = 4;

/// Independent generator for one purpose, derived from a seed.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seeds for `n_trials` trials derived from `seed`.
pub fn trial_seeds(seed: u64, n_trials: usize) -> Vec<u64> {
    let mut rng = stream_rng(seed, STREAM_TRIALS);
    (0..n_trials).map(|_| rng.random()).collect()
}

/// Connectivity matrix for `cfg`, drawn from the topology stream.
pub fn build_connectivity(cfg: &ExperimentConfig) -> Result<ConnectivityMatrix> {
    let mut rng = stream_rng(cfg.seed, STREAM_TOPOLOGY);
    match cfg.topology {
        Topology::Coupled => build_coupled(cfg.n, cfg.density, cfg.rho, &mut rng),
        Topology::Uncoupled => build_uncoupled(cfg.n, cfg.rho, &mut rng),
        Topology::UncoupledMatched => match_spectrum_uncoupled(&build_coupled(cfg.n, cfg.density, cfg.rho, &mut rng)?),
        Topology::CoupledMatched => couple_with_spectrum(&build_uncoupled(cfg.n, cfg.rho, &mut rng)?, &mut rng),
    }
}

/// Input weights for `d` channels, drawn from the input stream.
pub fn build_weights(cfg: &ExperimentConfig, d: usize) -> Result<InputWeights> {
    build_input_weights(cfg.n, d, cfg.gamma, &mut stream_rng(cfg.seed, STREAM_INPUT))
}

/// Normalised benchmark data covering the open-loop phases, one extra
/// target sample, and the test horizon.
pub fn benchmark_data(cfg: &ExperimentConfig) -> Result<TimeSeries> {
    let system = cfg.system.system();
    let n_samples = cfg.total_open_loop() + cfg.l_test + 1;
    generate_benchmark(system, cfg.h, cfg.dt, n_samples, cfg.warmup, cfg.system.default_state0())
}

fn reservoir_for(cfg: &ExperimentConfig, a: ConnectivityMatrix, w: InputWeights, range: Option<Vec<(f64, f64)>>) -> Result<ReservoirConfig> {
    ReservoirConfig::new(a, w)?
        .with_params(VestibularParams::default())?
        .with_time_constant(cfg.time_constant)?
        .with_substeps(cfg.substeps)?
        .with_input_range(range)
}

/// Everything produced by the open-loop phases.
#[derive(Debug, Clone)]
pub struct OpenLoopRun {
    pub data: TimeSeries,
    pub reservoir: ReservoirConfig,
    pub readout: ReadoutMatrix,
    pub state: ReservoirState,
    pub train_nrmse: f64,
    pub val_nrmse: f64,
}

/// Generates data, drives the reservoir, fits and validates the readout.
pub fn run_open_loop(cfg: &ExperimentConfig) -> Result<OpenLoopRun> {
    cfg.validate()?;
    let data = benchmark_data(cfg)?;
    run_open_loop_on(cfg, data)
}

/// As [`run_open_loop`] on caller-provided normalised data.
pub fn run_open_loop_on(cfg: &ExperimentConfig, data: TimeSeries) -> Result<OpenLoopRun> {
    cfg.validate()?;
    let total = cfg.total_open_loop();
    if data.len() < total + 1 {
        return Err(Error::InsufficientData(format!("need {} samples, have {}", total + 1, data.len())));
    }
    let a = build_connectivity(cfg)?;
    let w = build_weights(cfg, data.channels())?;
    let range = if cfg.physical_input { data.norm_record().map(|r| r.to_vec()) } else { None };
    let reservoir = reservoir_for(cfg, a, w, range)?;
    let mut state = ReservoirState::zeros(cfg.n);
    let states = drive_open_loop(&reservoir, &data.slice(0, total), &mut state)?;
    let kept = augment(&states.columns(cfg.l_transient, cfg.l_train + cfg.l_validation).into_owned());
    // Column k predicts the sample after the input that produced it.
    let targets = data.values().rows(cfg.l_transient + 1, cfg.l_train + cfg.l_validation).transpose();
    let r_train = kept.columns(0, cfg.l_train).into_owned();
    let y_train = targets.columns(0, cfg.l_train).into_owned();
    let readout = ridge_fit(&r_train, &y_train, cfg.lambda)?;
    let train_nrmse = nrmse(&y_train, &predict_open(&readout, &r_train)?)?;
    let r_val = kept.columns(cfg.l_train, cfg.l_validation).into_owned();
    let y_val = targets.columns(cfg.l_train, cfg.l_validation).into_owned();
    let val_nrmse = nrmse(&y_val, &predict_open(&readout, &r_val)?)?;
    Ok(OpenLoopRun { data, reservoir, readout, state, train_nrmse, val_nrmse })
}

/// Summary of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub stats: PredictionStats,
    pub memory: Option<MemoryCurve>,
    /// Index of the first out-of-bound closed-loop sample.
    pub diverged_at: Option<usize>,
    pub wall_time: f64,
}

impl ExperimentReport {
    /// `(metric, value)` pairs for the report CSV.
    pub fn metric_rows(&self) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = self.stats.as_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(m) = &self.memory {
            rows.push(("mc".into(), m.mc));
        }
        rows.push(("wall_time".into(), self.wall_time));
        rows
    }
}

/// Full artifacts of a run; the report plus the series behind it.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub readout: ReadoutMatrix,
    pub truth: TimeSeries,
    pub prediction: TimeSeries,
}

/// Attractor statistics of a closed-loop prediction against the truth.
pub fn climate_stats(truth: &TimeSeries, pred: &TimeSeries, grid: usize, lyapunov: bool) -> Result<(f64, f64, f64, f64)> {
    let bounds = [(0.0, 1.0), (0.0, 1.0)];
    let ht = build_histogram(truth, (0, 1), grid, bounds)?;
    let hp = build_histogram(pred, (0, 1), grid, bounds)?;
    let dv = deviation_value(&ht, &hp)?;
    let kl = kl_divergence(&ht, &hp)?;
    let (mut lt, mut lp) = (f64::NAN, f64::NAN);
    if lyapunov {
        // Same estimator, same delay and Theiler window on both series.
        let x = truth.channel(0);
        let acf = crate::metrics::autocorrelation(&x, (x.len() / 4).min(2000));
        let delay = crate::metrics::first_acf_minimum(&acf).unwrap_or(1);
        let theiler = crate::metrics::dominant_period(&acf).unwrap_or(2 * delay);
        let params = LyapunovParams { delay: Some(delay), theiler: Some(theiler), ..Default::default() };
        lt = largest_lyapunov(&x, &params)?;
        lp = largest_lyapunov(&pred.channel(0), &params)?;
    }
    Ok((dv, kl, lt, lp))
}

/// Runs the whole pipeline and keeps the series.
pub fn run_experiment_full(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    run_experiment_on(cfg, benchmark_data(cfg)?)
}

/// As [`run_experiment_full`] on caller-provided normalised data, which
/// must cover the open-loop phases plus `l_test + 1` samples.
pub fn run_experiment_on(cfg: &ExperimentConfig, data: TimeSeries) -> Result<ExperimentRun> {
    let start = Instant::now();
    if data.len() < cfg.total_open_loop() + cfg.l_test + 1 {
        return Err(Error::InsufficientData(format!(
            "need {} samples, have {}",
            cfg.total_open_loop() + cfg.l_test + 1,
            data.len()
        )));
    }
    let open = run_open_loop_on(cfg, data)?;
    let mut state = open.state.clone();
    let total = cfg.total_open_loop();
    let truth = open.data.slice(total, total + cfg.l_test);
    let run = run_closed_loop(&open.reservoir, &open.readout, &mut state, cfg.l_test, cfg.dt, cfg.divergence_bound)?;
    let diverged = run.diverged();
    let (mut dv, mut kl, mut lle_truth, mut lle_pred) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if !diverged && cfg.l_test > 0 {
        (dv, kl, lle_truth, lle_pred) = climate_stats(&truth, &run.series, cfg.grid, cfg.lyapunov)?;
    }
    let stats = PredictionStats {
        train_nrmse: open.train_nrmse,
        val_nrmse: open.val_nrmse,
        dv,
        kl,
        lle_pred,
        lle_truth,
        diverged,
    };
    let memory = if cfg.memory { Some(memory_for(cfg)?) } else { None };
    let report = ExperimentReport {
        config: cfg.clone(),
        stats,
        memory,
        diverged_at: run.diverged_at,
        wall_time: start.elapsed().as_secs_f64(),
    };
    let mut prediction = run.series;
    if let Some(rec) = open.data.norm_record() {
        if !diverged {
            prediction = prediction.with_norm_record(rec.to_vec())?;
        }
    }
    Ok(ExperimentRun { report, readout: open.readout, truth, prediction })
}

/// Runs the pipeline; closed-loop divergence is recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(run_experiment_full(cfg)?.report)
}

/// Refined memory curve of the configured reservoir under i.i.d. uniform
/// scalar input. Uses the same connectivity as the prediction run.
pub fn memory_for(cfg: &ExperimentConfig) -> Result<MemoryCurve> {
    let a = build_connectivity(cfg)?;
    let w = build_weights(cfg, 1)?;
    let reservoir = reservoir_for(cfg, a, w, None)?;
    let u = stochastic_input(cfg.t0 + cfg.t_window, &mut stream_rng(cfg.seed, STREAM_MEMORY))?;
    memory_curve_vestibular(&reservoir, &u, cfg.tau_max, cfg.t_window, cfg.t0, cfg.memory_lambda)
}

/// Continues a trained reservoir autonomously from the end of the
/// open-loop phases, using `readout` instead of a fresh fit.
pub fn predict_with_readout(cfg: &ExperimentConfig, readout: &ReadoutMatrix, n_steps: usize) -> Result<crate::reservoir::ClosedLoopRun> {
    cfg.validate()?;
    let data = benchmark_data(cfg)?;
    let total = cfg.total_open_loop();
    let a = build_connectivity(cfg)?;
    let w = build_weights(cfg, data.channels())?;
    let range = if cfg.physical_input { data.norm_record().map(|r| r.to_vec()) } else { None };
    let reservoir = reservoir_for(cfg, a, w, range)?;
    let mut state = ReservoirState::zeros(cfg.n);
    drive_open_loop(&reservoir, &data.slice(0, total), &mut state)?;
    run_closed_loop(&reservoir, readout, &mut state, n_steps, cfg.dt, cfg.divergence_bound)
}

/// One `(n, metric)` aggregate over non-divergent trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_divergent: usize,
    pub n_trials: usize,
}

/// Per-size results: every trial report plus the aggregates.
#[derive(Debug, Clone)]
pub struct SizeResult {
    pub n: usize,
    pub reports: Vec<std::result::Result<ExperimentReport, Error>>,
    pub rows: Vec<SweepRow>,
}

impl SizeResult {
    pub fn n_divergent(&self) -> usize {
        self.reports.iter().filter(|r| !matches!(r, Ok(rep) if !rep.stats.diverged)).count()
    }

    pub fn row(&self, metric: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Runs `f` on a pool of `jobs` workers (0 = rayon default); output order
/// follows input order.
pub fn parallel_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

const SWEEP_METRICS: [&str; 6] = ["train_nrmse", "val_nrmse", "dv", "kl", "lle_pred", "lle_truth"];

fn aggregate(n: usize, reports: &[std::result::Result<ExperimentReport, Error>]) -> Vec<SweepRow> {
    let ok: Vec<&ExperimentReport> = reports.iter().filter_map(|r| r.as_ref().ok()).filter(|r| !r.stats.diverged).collect();
    let n_divergent = reports.len() - ok.len();
    let mut metrics: Vec<(&str, Vec<f64>)> = SWEEP_METRICS
        .iter()
        .map(|&m| {
            let vals = ok
                .iter()
                .map(|r| match m {
                    "train_nrmse" => r.stats.train_nrmse,
                    "val_nrmse" => r.stats.val_nrmse,
                    "dv" => r.stats.dv,
                    "kl" => r.stats.kl,
                    "lle_pred" => r.stats.lle_pred,
                    _ => r.stats.lle_truth,
                })
                .collect();
            (m, vals)
        })
        .collect();
    // Memory capacity does not depend on the closed loop, so every trial
    // that produced a report contributes.
    let mc: Vec<f64> = reports.iter().filter_map(|r| r.as_ref().ok()).filter_map(|r| r.memory.as_ref().map(|m| m.mc)).collect();
    if !mc.is_empty() {
        metrics.push(("mc", mc));
    }
    metrics
        .into_iter()
        .map(|(m, v)| {
            let finite: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
            let (mean, std) = mean_std(&finite);
            SweepRow { n, metric: m.to_string(), mean, std, n_divergent, n_trials: reports.len() }
        })
        .collect()
}

/// Runs `n_trials` seeded trials per reservoir size. Trial `i` uses the
/// same derived seed at every size.
pub fn ensemble_sweep(base: &ExperimentConfig, sizes: &[usize], n_trials: usize, jobs: usize) -> Result<Vec<SizeResult>> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    base.validate()?;
    // The benchmark series does not depend on the seed or the size.
    let data = benchmark_data(base)?;
    let seeds = trial_seeds(base.seed, n_trials);
    let jobs_list: Vec<(usize, u64)> = sizes.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let results = parallel_map(&jobs_list, jobs, |&(n, seed)| {
        let mut cfg = base.clone();
        cfg.n = n;
        cfg.seed = seed;
        run_experiment_on(&cfg, data.clone()).map(|r| r.report)
    });
    let mut out = Vec::with_capacity(sizes.len());
    let mut it = results.into_iter();
    for &n in sizes {
        let reports: Vec<_> = it.by_ref().take(n_trials).collect();
        let rows = aggregate(n, &reports);
        out.push(SizeResult { n, reports, rows });
    }
    Ok(out)
}

/// Closed interval for one searched hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl Bounds {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: true }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v, log: false }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        if self.log {
            rng.random_range(self.lo.ln()..=self.hi.ln()).exp()
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub gamma: Bounds,
    pub rho: Bounds,
    pub lambda: Bounds,
    pub density: Bounds,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            gamma: Bounds::linear(0.1, 5.0),
            rho: Bounds::linear(0.1, 0.95),
            lambda: Bounds::log(1e-7, 1e-2),
            density: Bounds::point(0.4),
        }
    }
}

impl SearchSpace {
    /// Space collapsed onto the hyperparameters of `cfg`.
    pub fn pinned(cfg: &ExperimentConfig) -> Self {
        Self {
            gamma: Bounds::point(cfg.gamma),
            rho: Bounds::point(cfg.rho),
            lambda: Bounds::point(cfg.lambda),
            density: Bounds::point(cfg.density),
        }
    }
}

pub const DEFAULT_SEARCH_THRESHOLD: f64 = 0.02;

/// One evaluated search sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub gamma: f64,
    pub rho: f64,
    pub lambda: f64,
    pub density: f64,
    /// Validation NRMSE, `None` when the run failed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: ExperimentConfig,
    pub best_score: f64,
    pub trials: Vec<SearchTrial>,
}

/// Uniform random search on validation NRMSE (open loop only). Stops
/// early once a score falls below `threshold`.
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    base: &ExperimentConfig,
    seed: u64,
    threshold: Option<f64>,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let mut rng = crate::rng_from_seed(seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<(f64, ExperimentConfig)> = None;
    for _ in 0..budget {
        let mut cfg = base.clone();
        cfg.gamma = space.gamma.sample(&mut rng);
        cfg.rho = space.rho.sample(&mut rng);
        cfg.lambda = space.lambda.sample(&mut rng);
        cfg.density = space.density.sample(&mut rng);
        let score = run_open_loop(&cfg).ok().map(|r| r.val_nrmse).filter(|s| s.is_finite());
        trials.push(SearchTrial { gamma: cfg.gamma, rho: cfg.rho, lambda: cfg.lambda, density: cfg.density, score });
        if let Some(s) = score {
            if best.as_ref().is_none_or(|(b, _)| s < *b) {
                best = Some((s, cfg));
            }
            if threshold.is_some_and(|t| s < t) {
                break;
            }
        }
    }
    match best {
        Some((best_score, best)) => Ok(SearchResult { best, best_score, trials }),
        None => Err(Error::SearchFailure {
            tried: trials.len(),
            configs: trials
                .iter()
                .map(|t| format!("gamma={} rho={} lambda={} density={}", t.gamma, t.rho, t.lambda, t.density))
                .collect(),
        }),
    }
}

/// `t,ch1..chD` with `t = index * dt`.
pub fn timeseries_csv(series: &TimeSeries) -> String {
    let d = series.channels();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("ch{i}")));
    let v = series.values();
    let rows: Vec<Vec<String>> = (0..series.len())
        .map(|t| {
            let mut r = vec![fmt_f64(t as f64 * series.dt())];
            r.extend((0..d).map(|c| fmt_f64(v[(t, c)])));
            r
        })
        .collect();
    crate::io::table_to_csv(&header, &rows)
}

/// Parses a `t,ch1..chD` CSV back into a series.
pub fn timeseries_from_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(Error::Parse { line: 1, msg: "expected header t,ch1..chD".into() });
    }
    let d = cols.len() - 1;
    let mut data = Vec::new();
    let mut times = Vec::new();
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if vals.len() != d + 1 {
            return Err(Error::Parse { line: i + 1, msg: format!("expected {} fields", d + 1) });
        }
        times.push(vals[0]);
        data.extend_from_slice(&vals[1..]);
    }
    let l = times.len();
    let dt = if l >= 2 { times[1] - times[0] } else { 1.0 };
    TimeSeries::new(DMatrix::from_row_slice(l, d, &data), dt, cols[1..].iter().map(|s| s.to_string()).collect())
}

pub fn report_csv(report: &ExperimentReport) -> String {
    let rows: Vec<Vec<String>> = report.metric_rows().into_iter().map(|(k, v)| vec![k, fmt_f64(v)]).collect();
    crate::io::table_to_csv(&["metric", "value"], &rows)
}

pub fn sweep_csv(results: &[SizeResult]) -> String {
    let rows: Vec<Vec<String>> = results
        .iter()
        .flat_map(|s| s.rows.iter())
        .map(|r| vec![r.n.to_string(), r.metric.clone(), fmt_f64(r.mean), fmt_f64(r.std), r.n_divergent.to_string()])
        .collect();
    crate::io::table_to_csv(&["n", "metric", "mean", "std", "n_divergent"], &rows)
}

/// Pointwise mean and population std of equally long curves.
pub fn curve_mean_std(curves: &[MemoryCurve]) -> Vec<(f64, f64)> {
    let len = curves.iter().map(|c| c.mf.len()).min().unwrap_or(0);
    (0..len)
        .map(|tau| mean_std(&curves.iter().map(|c| c.mf[tau]).collect::<Vec<_>>()))
        .collect()
}

pub fn memory_csv(curves: &[MemoryCurve]) -> String {
    let rows: Vec<Vec<String>> = curve_mean_std(curves)
        .into_iter()
        .enumerate()
        .map(|(tau, (m, s))| vec![tau.to_string(), fmt_f64(m), fmt_f64(s)])
        .collect();
    crate::io::table_to_csv(&["tau", "mf_mean", "mf_std"], &rows)
}
