//! Linear readout over squared-augmented reservoir states.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{dim_err, Error, Result};
use crate::linalg::pinv_psd;

/// Smallest Gram eigenvalue below which an unregularised fit switches to
/// the pseudoinverse.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutMatrix {
    w_out: DMatrix<f64>,
    ridge_lambda: f64,
}

impl ReadoutMatrix {
    pub fn new(w_out: DMatrix<f64>, ridge_lambda: f64) -> Result<Self> {
        if w_out.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("readout contains non-finite entries".into()));
        }
        if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge parameter must be >= 0, got {ridge_lambda}")));
        }
        if w_out.ncols() % 2 != 0 {
            return Err(dim_err("an even number of readout columns", w_out.ncols()));
        }
        Ok(Self { w_out, ridge_lambda })
    }

    /// `d x 2n` zero readout.
    pub fn zeros(d: usize, n: usize) -> Self {
        Self { w_out: DMatrix::zeros(d, 2 * n), ridge_lambda: 0.0 }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w_out
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    /// Reservoir size `n` (the readout spans `2n` features).
    pub fn n(&self) -> usize {
        self.w_out.ncols() / 2
    }

    pub fn d(&self) -> usize {
        self.w_out.nrows()
    }

    /// CSV with a `# lambda=..,n=..,d=..` header line followed by the
    /// `d` rows of the matrix.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# lambda={:e},n={},d={}\n", self.ridge_lambda, self.n(), self.d());
        s.push_str(&crate::io::matrix_to_csv(&self.w_out));
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty readout file".into() })?;
        let header = header
            .strip_prefix('#')
            .ok_or(Error::Parse { line: 1, msg: "missing readout header".into() })?;
        let (mut lambda, mut n, mut d) = (None, None, None);
        for kv in header.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or(Error::Parse { line: 1, msg: format!("bad header field '{kv}'") })?;
            let bad = |_| Error::Parse { line: 1, msg: format!("bad value for {}", k.trim()) };
            match k.trim() {
                "lambda" => lambda = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "n" => n = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "d" => d = Some(v.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => {}
            }
        }
        let missing = |f: &str| Error::Parse { line: 1, msg: format!("header lacks {f}") };
        let (lambda, n, d) = (lambda.ok_or(missing("lambda"))?, n.ok_or(missing("n"))?, d.ok_or(missing("d"))?);
        let mut data = Vec::with_capacity(2 * n * d);
        for (i, line) in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if row.len() != 2 * n {
                return Err(Error::Parse { line: i + 1, msg: format!("expected {} columns, got {}", 2 * n, row.len()) });
            }
            data.extend(row);
        }
        if data.len() != 2 * n * d {
            return Err(Error::Parse { line: 0, msg: format!("expected {d} readout rows") });
        }
        Self::new(DMatrix::from_row_slice(d, 2 * n, &data), lambda)
    }
}

/// Stacks `[R; R∘R]`.
pub fn augment(r: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, l) = r.shape();
    let mut out = DMatrix::zeros(2 * n, l);
    out.rows_mut(0, n).copy_from(r);
    out.rows_mut(n, n).copy_from(&r.map(|v| v * v));
    out
}

/// Ridge regression `W = Y R^T (R R^T + lambda I)^-1`.
pub fn ridge_fit(r_aug: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<ReadoutMatrix> {
    ReadoutMatrix::new(ridge_solve(r_aug, y, lambda)?, lambda)
}

/// The ridge solve without the even-width readout constraint, for generic
/// feature matrices.
pub fn ridge_solve(r: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if r.ncols() == 0 {
        return Err(Error::InsufficientData("ridge fit needs at least one sample".into()));
    }
    if r.ncols() != y.ncols() {
        return Err(dim_err(format!("{} target samples", r.ncols()), y.ncols()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge parameter must be >= 0, got {lambda}")));
    }
    if r.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ridge fit inputs contain non-finite entries".into()));
    }
    let m = r.nrows();
    let mut g = r * r.transpose();
    for i in 0..m {
        g[(i, i)] += lambda;
    }
    let b = y * r.transpose();
    let use_pinv = lambda == 0.0 && {
        let ev = SymmetricEigen::new(g.clone()).eigenvalues;
        ev.iter().fold(f64::INFINITY, |a, v| a.min(*v)) < SINGULAR_EIGENVALUE
    };
    if !use_pinv {
        if let Some(ch) = Cholesky::new(g.clone()) {
            return Ok(ch.solve(&b.transpose()).transpose());
        }
    }
    Ok(b * pinv_psd(&g, 1e-14))
}

pub fn predict_open(w_out: &ReadoutMatrix, r_aug: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w_out.matrix().ncols() != r_aug.nrows() {
        return Err(dim_err(format!("{} feature rows", w_out.matrix().ncols()), r_aug.nrows()));
    }
    Ok(w_out.matrix() * r_aug)
}

/// Per-channel RMSE over the population standard deviation of the truth.
/// Rows are channels, columns samples.
pub fn nrmse_per_channel(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<Vec<f64>> {
    if y.shape() != y_hat.shape() {
        return Err(dim_err(format!("{:?}", y.shape()), format!("{:?}", y_hat.shape())));
    }
    let l = y.ncols();
    if l < 2 {
        return Err(Error::InsufficientData("NRMSE needs at least two samples".into()));
    }
    (0..y.nrows())
        .map(|c| {
            let row: Vec<f64> = y.row(c).iter().copied().collect();
            let (_, sd) = crate::linalg::mean_std(&row);
            if !(sd > 0.0) {
                return Err(Error::DegenerateChannel { channel: c, reason: "constant truth".into() });
            }
            let mse = y.row(c).iter().zip(y_hat.row(c).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / l as f64;
            Ok(mse.sqrt() / sd)
        })
        .collect()
}

/// Channel-averaged NRMSE.
pub fn nrmse(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    let per = nrmse_per_channel(y, y_hat)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}
