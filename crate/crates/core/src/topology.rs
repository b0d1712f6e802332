//! Reservoir connectivity: coupled sparse symmetric networks, uncoupled
//! (diagonal) networks, and conversions between the two that preserve the
//! eigenvalue spectrum.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end of the remapped spectrum, relative to the spectral radius.
pub const GAP_FRACTION: f64 = 1e-3;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Coupled,
    Uncoupled,
}

/// Internal weight matrix of a reservoir with its (real, sorted) spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    a: DMatrix<f64>,
    kind: TopologyKind,
    spectral_radius: f64,
    eigenvalues: Vec<f64>,
}

impl ConnectivityMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        self.a.iter().filter(|v| **v != 0.0).count() as f64 / (n * n) as f64
    }

    /// Diagonal entries when the matrix is uncoupled.
    pub fn diagonal(&self) -> Option<Vec<f64>> {
        match self.kind {
            TopologyKind::Uncoupled => Some(self.a.diagonal().iter().copied().collect()),
            TopologyKind::Coupled => None,
        }
    }

    /// Wraps an arbitrary symmetric matrix, computing its spectrum.
    pub fn from_symmetric(a: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&a)?;
        let eigenvalues = sorted_eigenvalues(&a);
        let spectral_radius = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let kind = if is_diagonal(&a) { TopologyKind::Uncoupled } else { TopologyKind::Coupled };
        Ok(Self { a, kind, spectral_radius, eigenvalues })
    }

    /// Diagonal matrix with the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
        let mut eigenvalues = diag.to_vec();
        eigenvalues.sort_by(f64::total_cmp);
        let spectral_radius = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self { a, kind: TopologyKind::Uncoupled, spectral_radius, eigenvalues }
    }

    /// Dense row-major CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        crate::io::matrix_to_csv(&self.a)
    }
}

/// Input weight matrix with i.i.d. entries on `[-gamma, gamma]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputWeights {
    w_in: DMatrix<f64>,
    gamma: f64,
}

impl InputWeights {
    pub fn new(w_in: DMatrix<f64>, gamma: f64) -> Result<Self> {
        if w_in.iter().any(|v| !v.is_finite() || v.abs() > gamma) {
            return Err(Error::InvalidInput(format!("input weights must lie in [-{gamma}, {gamma}]")));
        }
        Ok(Self { w_in, gamma })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn d(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn to_csv(&self) -> String {
        crate::io::matrix_to_csv(&self.w_in)
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::InvalidInput(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0))
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn check_common(n: usize, rho: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("reservoir size must be at least 1".into()));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Config(format!("spectral radius must be positive, got {rho}")));
    }
    Ok(())
}

/// Random sparse symmetric network whose spectrum is affinely mapped onto
/// `[-rho, -GAP_FRACTION * rho]`.
///
/// The affine map `lambda -> alpha * lambda + beta` of the spectrum keeps
/// the eigenvectors, so it is applied as `alpha * A + beta * I`: the
/// off-diagonal sparsity pattern survives and both end points of the
/// spectrum are hit exactly.
pub fn build_coupled<R: Rng + ?Sized>(n: usize, density: f64, rho: f64, rng: &mut R) -> Result<ConnectivityMatrix> {
    check_common(n, rho)?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("link density must be in (0, 1], got {density}")));
    }
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if rng.random::<f64>() < density {
                let w = rng.random_range(-1.0..=1.0);
                raw[(i, j)] = w;
                raw[(j, i)] = w;
            }
        }
    }
    let raw_eigs = sorted_eigenvalues(&raw);
    let lo = raw_eigs[0];
    let hi = raw_eigs[n - 1];
    let delta = GAP_FRACTION * rho;

    let (a, eigenvalues) = if n == 1 || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
        // Degenerate spectrum: every eigenvalue maps to -rho.
        (DMatrix::from_diagonal_element(n, n, -rho), vec![-rho; n])
    } else {
        let alpha = (rho - delta) / (hi - lo);
        let beta = -rho - alpha * lo;
        let mut a = raw * alpha;
        for i in 0..n {
            a[(i, i)] += beta;
        }
        let mut mapped: Vec<f64> = raw_eigs.iter().map(|l| alpha * (l - lo) - rho).collect();
        mapped[0] = -rho;
        mapped[n - 1] = -delta;
        (a, mapped)
    };
    Ok(ConnectivityMatrix { a, kind: TopologyKind::Coupled, spectral_radius: rho, eigenvalues })
}

/// Diagonal network with entries uniform on `[-rho, -GAP_FRACTION * rho]`
/// and one randomly chosen entry pinned to `-rho`.
pub fn build_uncoupled<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Result<ConnectivityMatrix> {
    check_common(n, rho)?;
    let delta = GAP_FRACTION * rho;
    let mut diag: Vec<f64> = (0..n).map(|_| rng.random_range(-rho..=-delta)).collect();
    let pinned = rng.random_range(0..n);
    diag[pinned] = -rho;
    let mut m = ConnectivityMatrix::from_diagonal(&diag);
    m.spectral_radius = rho;
    Ok(m)
}

/// Diagonal twin of a coupled network: its diagonal is the coupled
/// network's eigenvalue list.
pub fn match_spectrum_uncoupled(coupled: &ConnectivityMatrix) -> Result<ConnectivityMatrix> {
    if coupled.kind != TopologyKind::Coupled {
        return Err(Error::InvalidInput("spectrum matching expects a coupled network".into()));
    }
    check_symmetric(&coupled.a)?;
    let mut m = ConnectivityMatrix::from_diagonal(&coupled.eigenvalues);
    m.spectral_radius = coupled.spectral_radius;
    Ok(m)
}

/// Haar-distributed orthogonal matrix from the QR factorisation of a
/// standard-normal matrix, with the sign convention `diag(R) > 0`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Dense coupled network `Q diag(lambda) Q^T` sharing the spectrum of an
/// uncoupled one.
pub fn couple_with_spectrum<R: Rng + ?Sized>(uncoupled: &ConnectivityMatrix, rng: &mut R) -> Result<ConnectivityMatrix> {
    if uncoupled.kind != TopologyKind::Uncoupled {
        return Err(Error::InvalidInput("coupling expects an uncoupled network".into()));
    }
    let n = uncoupled.n();
    let q = random_orthogonal(n, rng);
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&uncoupled.eigenvalues));
    let a = &q * lambda * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    Ok(ConnectivityMatrix {
        a,
        kind: TopologyKind::Coupled,
        spectral_radius: uncoupled.spectral_radius,
        eigenvalues: uncoupled.eigenvalues.clone(),
    })
}

/// `N x D` input weights, i.i.d. uniform on `[-gamma, gamma]`.
pub fn build_input_weights<R: Rng + ?Sized>(n: usize, d: usize, gamma: f64, rng: &mut R) -> Result<InputWeights> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!("input weights need n, d >= 1 (got {n}x{d})")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Config(format!("input scale must be non-negative, got {gamma}")));
    }
    let w = if gamma == 0.0 {
        DMatrix::zeros(n, d)
    } else {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-gamma..=gamma))
    };
    InputWeights::new(w, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn max_asym(a: &DMatrix<f64>) -> f64 {
        (a - a.transpose()).amax()
    }

    #[test]
    fn coupled_pins_radius_and_negativity() {
        let mut rng = rng_from_seed(1);
        let m = build_coupled(30, 0.4, 0.8, &mut rng).unwrap();
        let ev = sorted_eigenvalues(m.matrix());
        let radius = ev.iter().fold(0.0f64, |r, v| r.max(v.abs()));
        assert!((radius - 0.8).abs() < 1e-9);
        assert!(ev.iter().all(|&v| v < 0.0));
        assert!(max_asym(m.matrix()) <= 1e-12);
        for (a, b) in ev.iter().zip(m.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coupled_singleton() {
        let mut rng = rng_from_seed(2);
        let m = build_coupled(1, 0.4, 0.7, &mut rng).unwrap();
        assert_eq!(m.matrix()[(0, 0)], -0.7);
    }

    #[test]
    fn coupled_dense_spectrum_in_band() {
        let mut rng = rng_from_seed(3);
        let m = build_coupled(5, 1.0, 0.9, &mut rng).unwrap();
        // Independent check through the characteristic equation: det(A - l I)
        // changes sign across every eigenvalue reported by the dense solver.
        let ev = sorted_eigenvalues(m.matrix());
        for &l in &ev {
            assert!(l >= -0.9 - 1e-12 && l <= -0.9e-3 + 1e-12);
        }
        assert!((ev[0] + 0.9).abs() < 1e-12);
        assert!((ev[4] + 0.9e-3).abs() < 1e-12);
    }

    #[test]
    fn coupled_rejects_bad_config() {
        let mut rng = rng_from_seed(0);
        assert!(matches!(build_coupled(0, 0.4, 0.8, &mut rng), Err(Error::Config(_))));
        assert!(matches!(build_coupled(10, 0.0, 0.8, &mut rng), Err(Error::Config(_))));
        assert!(matches!(build_uncoupled(0, 0.8, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn coupled_density_close_to_target() {
        let mut rng = rng_from_seed(11);
        for &n in &[20usize, 40, 60] {
            let m = build_coupled(n, 0.4, 0.8, &mut rng).unwrap();
            let d = m.density();
            assert!((d - 0.4).abs() <= 0.04 + 1.0 / n as f64, "n={n} density={d}");
        }
    }

    #[test]
    fn uncoupled_band_and_pin() {
        let mut rng = rng_from_seed(4);
        let m = build_uncoupled(30, 0.5, &mut rng).unwrap();
        let d = m.diagonal().unwrap();
        assert!(d.iter().all(|&v| (-0.5..=-5e-4).contains(&v)));
        assert_eq!(d.iter().cloned().fold(f64::INFINITY, f64::min), -0.5);
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, m.eigenvalues());
        let one = build_uncoupled(1, 0.3, &mut rng).unwrap();
        assert_eq!(one.matrix()[(0, 0)], -0.3);
    }

    #[test]
    fn match_spectrum_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.1, 0.1, -0.5]);
        let c = ConnectivityMatrix::from_symmetric(a).unwrap();
        let u = match_spectrum_uncoupled(&c).unwrap();
        let d = u.diagonal().unwrap();
        assert!((d[0] + 0.6).abs() < 1e-12);
        assert!((d[1] + 0.4).abs() < 1e-12);
        assert_eq!(u.kind(), TopologyKind::Uncoupled);
        assert_eq!(u.spectral_radius(), c.spectral_radius());
    }

    #[test]
    fn match_spectrum_rejects_uncoupled_and_asymmetric() {
        let mut rng = rng_from_seed(5);
        let u = build_uncoupled(4, 0.5, &mut rng).unwrap();
        assert!(match_spectrum_uncoupled(&u).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.2, 0.1, -0.5]);
        assert!(ConnectivityMatrix::from_symmetric(a).is_err());
    }

    #[test]
    fn couple_preserves_spectrum() {
        let mut rng = rng_from_seed(6);
        let u = build_uncoupled(12, 0.7, &mut rng).unwrap();
        let c = couple_with_spectrum(&u, &mut rng).unwrap();
        assert!(max_asym(c.matrix()) <= 1e-12);
        let ev = sorted_eigenvalues(c.matrix());
        for (a, b) in ev.iter().zip(u.eigenvalues()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(c.spectral_radius(), u.spectral_radius());
    }

    #[test]
    fn couple_mixes_nodes() {
        let mut coupled_count = 0;
        for seed in 0..100 {
            let mut rng = rng_from_seed(seed);
            let u = build_uncoupled(3, 0.9, &mut rng).unwrap();
            let c = couple_with_spectrum(&u, &mut rng).unwrap();
            let a = c.matrix();
            let off = a[(0, 1)].abs() + a[(0, 2)].abs() + a[(1, 2)].abs();
            if off > 1e-8 {
                coupled_count += 1;
            }
        }
        assert!(coupled_count >= 99);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rng_from_seed(7);
        let q = random_orthogonal(8, &mut rng);
        let err = (&q.transpose() * &q - DMatrix::identity(8, 8)).amax();
        assert!(err < 1e-12);
    }

    #[test]
    fn input_weights_bounds() {
        let mut rng = rng_from_seed(8);
        let z = build_input_weights(5, 3, 0.0, &mut rng).unwrap();
        assert!(z.matrix().iter().all(|&v| v == 0.0));
        let w = build_input_weights(1000, 3, 1.0, &mut rng).unwrap();
        let mean = w.matrix().iter().sum::<f64>() / 3000.0;
        assert!(mean.abs() < 0.05);
        assert!(w.matrix().iter().all(|v| v.abs() <= 1.0));
        let f = build_input_weights(30, 3, 3.5, &mut rng).unwrap();
        assert!(f.matrix().iter().all(|v| v.abs() <= 3.5));
    }

    #[test]
    fn constructors_are_deterministic() {
        let a = build_coupled(15, 0.4, 0.8, &mut rng_from_seed(9)).unwrap();
        let b = build_coupled(15, 0.4, 0.8, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        let a = build_uncoupled(15, 0.8, &mut rng_from_seed(9)).unwrap();
        let b = build_uncoupled(15, 0.8, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }
}
