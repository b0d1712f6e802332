//! Long-term attractor statistics: gridded visitation histograms, their
//! L1 deviation and KL divergence, a Rosenstein largest-Lyapunov estimator
//! and a divergence check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};

pub const KL_EPSILON: f64 = 1e-10;
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 5.0;
pub const DEFAULT_GRID: usize = 50;

/// Normalised 2-D visitation frequencies of a projected trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorHistogram {
    freqs: DMatrix<f64>,
    grid_bounds: [(f64, f64); 2],
    g: usize,
    proj: (usize, usize),
    clamped: usize,
}

impl AttractorHistogram {
    /// `freqs[(i, j)]` is the mass of cell `i` along the first projected
    /// channel and `j` along the second.
    pub fn freqs(&self) -> &DMatrix<f64> {
        &self.freqs
    }

    pub fn grid_bounds(&self) -> [(f64, f64); 2] {
        self.grid_bounds
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn proj(&self) -> (usize, usize) {
        self.proj
    }

    /// Samples that fell outside the bounds and were assigned to edge cells.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn to_csv(&self) -> String {
        crate::io::matrix_to_csv(&self.freqs)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.g != other.g || self.grid_bounds != other.grid_bounds || self.proj != other.proj {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

fn cell(x: f64, (lo, hi): (f64, f64), g: usize) -> (usize, bool) {
    let pos = (x - lo) / (hi - lo) * g as f64;
    let outside = !(lo..=hi).contains(&x);
    if pos.is_nan() || pos < 0.0 {
        return (0, true);
    }
    ((pos.floor() as usize).min(g - 1), outside)
}

/// Histogram of channels `proj` over a `g x g` grid spanning `bounds`.
pub fn build_histogram(
    series: &TimeSeries,
    proj: (usize, usize),
    g: usize,
    bounds: [(f64, f64); 2],
) -> Result<AttractorHistogram> {
    if series.is_empty() {
        return Err(Error::InsufficientData("histogram of an empty series".into()));
    }
    if g == 0 {
        return Err(Error::Config("grid resolution must be at least 1".into()));
    }
    if proj.0 >= series.channels() || proj.1 >= series.channels() {
        return Err(Error::InvalidInput(format!("projection {proj:?} exceeds {} channels", series.channels())));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
        return Err(Error::Config(format!("invalid grid bounds {bounds:?}")));
    }
    let mut counts = DMatrix::<f64>::zeros(g, g);
    let mut clamped = 0;
    let v = series.values();
    for t in 0..series.len() {
        let (i, oi) = cell(v[(t, proj.0)], bounds[0], g);
        let (j, oj) = cell(v[(t, proj.1)], bounds[1], g);
        if oi || oj {
            clamped += 1;
        }
        counts[(i, j)] += 1.0;
    }
    let freqs = counts / series.len() as f64;
    Ok(AttractorHistogram { freqs, grid_bounds: bounds, g, proj, clamped })
}

/// Sum of absolute cell differences; in `[0, 2]`.
pub fn deviation_value(truth: &AttractorHistogram, pred: &AttractorHistogram) -> Result<f64> {
    truth.same_grid(pred)?;
    Ok(truth.freqs.iter().zip(pred.freqs.iter()).map(|(f, h)| (f - h).abs()).sum())
}

/// `sum f ln(f / f_hat)` after adding `KL_EPSILON` to every cell of both
/// histograms and renormalising.
pub fn kl_divergence(truth: &AttractorHistogram, pred: &AttractorHistogram) -> Result<f64> {
    truth.same_grid(pred)?;
    let cells = (truth.g * truth.g) as f64;
    let z = 1.0 + KL_EPSILON * cells;
    let kl: f64 = truth
        .freqs
        .iter()
        .zip(pred.freqs.iter())
        .map(|(f, h)| {
            let p = (f + KL_EPSILON) / z;
            let q = (h + KL_EPSILON) / z;
            p * (p / q).ln()
        })
        .sum();
    Ok(kl.max(0.0))
}

/// True when any entry is non-finite or exceeds `bound` in magnitude.
pub fn check_divergence(values: &DMatrix<f64>, bound: f64) -> bool {
    values.iter().any(|v| !v.is_finite() || v.abs() > bound)
}

/// Settings for [`largest_lyapunov`]. `None` fields are derived from the
/// series: the delay from the first autocorrelation minimum, the Theiler
/// window from the dominant period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub emb_dim: usize,
    pub delay: Option<usize>,
    pub theiler: Option<usize>,
    pub fit_range: (usize, usize),
    /// Cap on the number of reference points (evenly strided).
    pub max_refs: usize,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self { emb_dim: 6, delay: None, theiler: None, fit_range: (1, 30), max_refs: 2000 }
    }
}

/// Autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| if c0 > 0.0 { c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0 } else { 0.0 })
        .collect()
}

/// First local minimum of the autocorrelation, at least 1.
pub fn first_acf_minimum(acf: &[f64]) -> Option<usize> {
    (1..acf.len().saturating_sub(1)).find(|&k| acf[k] <= acf[k - 1] && acf[k] < acf[k + 1])
}

/// Lag of the highest autocorrelation peak after the first minimum.
pub fn dominant_period(acf: &[f64]) -> Option<usize> {
    let start = first_acf_minimum(acf)?;
    (start + 1..acf.len().saturating_sub(1))
        .filter(|&k| acf[k] >= acf[k - 1] && acf[k] > acf[k + 1])
        .max_by(|&a, &b| acf[a].total_cmp(&acf[b]))
}

/// Rosenstein estimate of the largest Lyapunov exponent, per sample step.
pub fn largest_lyapunov(x: &[f64], params: &LyapunovParams) -> Result<f64> {
    let (k_lo, k_hi) = params.fit_range;
    if params.emb_dim == 0 || k_hi <= k_lo {
        return Err(Error::Config("invalid embedding dimension or fit range".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite entries".into()));
    }
    let acf_len = (x.len() / 4).min(2000);
    let acf = if params.delay.is_none() || params.theiler.is_none() { autocorrelation(x, acf_len) } else { Vec::new() };
    let delay = params.delay.or_else(|| first_acf_minimum(&acf)).unwrap_or(1).max(1);
    let theiler = params.theiler.or_else(|| dominant_period(&acf)).unwrap_or(2 * delay);

    let span = (params.emb_dim - 1) * delay;
    if x.len() <= span + k_hi + theiler + 2 {
        return Err(Error::InsufficientData(format!(
            "series of {} samples too short for embedding span {span} and fit window {k_hi}",
            x.len()
        )));
    }
    let m = x.len() - span;
    let dim = params.emb_dim;
    let emb = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..dim {
            let d = x[i + c * delay] - x[j + c * delay];
            s += d * d;
        }
        s
    };
    // Only points that can be followed for the whole fit window serve as
    // references.
    let usable = m - k_hi;
    let stride = usable.div_ceil(params.max_refs.max(1)).max(1);
    let mut sum_log = vec![0.0; k_hi + 1];
    let mut count = vec![0usize; k_hi + 1];
    for i in (0..usable).step_by(stride) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..usable {
            if i.abs_diff(j) <= theiler {
                continue;
            }
            let d = emb(i, j);
            if d > 0.0 && d < best.0 {
                best = (d, j);
            }
        }
        if best.1 == usize::MAX {
            continue;
        }
        let j = best.1;
        for k in 0..=k_hi {
            let d = emb(i + k, j + k);
            if d > 0.0 {
                sum_log[k] += 0.5 * d.ln();
                count[k] += 1;
            }
        }
    }
    let pts: Vec<(f64, f64)> = (k_lo..=k_hi)
        .filter(|&k| count[k] > 0)
        .map(|k| (k as f64, sum_log[k] / count[k] as f64))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData("no neighbour pairs for the divergence curve".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Scores collected from one train/validate/test run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionStats {
    pub train_nrmse: f64,
    pub val_nrmse: f64,
    pub dv: f64,
    pub kl: f64,
    pub lle_pred: f64,
    pub lle_truth: f64,
    pub diverged: bool,
}

impl PredictionStats {
    pub fn as_pairs(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("train_nrmse", self.train_nrmse),
            ("val_nrmse", self.val_nrmse),
            ("dv", self.dv),
            ("kl", self.kl),
            ("lle_pred", self.lle_pred),
            ("lle_truth", self.lle_truth),
            ("diverged", if self.diverged { 1.0 } else { 0.0 }),
        ]
    }
}
