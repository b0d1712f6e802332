//! Small dense linear-algebra helpers shared by the readout and memory code.

use nalgebra::{DMatrix, SymmetricEigen};

/// Moore-Penrose pseudoinverse of a symmetric positive semi-definite
/// matrix. Eigenvalues below `rtol * max_eigenvalue` are treated as zero.
pub fn pinv_psd(g: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = g.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let cut = rtol * top;
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l > cut && l > 0.0 { 1.0 / l } else { 0.0 };
        scaled.column_mut(j).scale_mut(inv);
    }
    scaled * q.transpose()
}

/// Numerical rank of a symmetric PSD matrix using the same cutoff rule as
/// [`pinv_psd`].
pub fn rank_psd(g: &DMatrix<f64>, rtol: f64) -> usize {
    if g.nrows() == 0 {
        return 0;
    }
    let eig = SymmetricEigen::new(g.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    eig.eigenvalues.iter().filter(|&&l| l > rtol * top && l > 0.0).count()
}

/// Population mean and standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Squared Pearson correlation; `None` when either side has zero variance.
pub fn squared_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let (ma, _) = mean_std(&a[..n]);
    let (mb, _) = mean_std(&b[..n]);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    let tiny = f64::EPSILON * f64::EPSILON * n as f64;
    if saa <= tiny * ma.abs().max(1.0).powi(2) || sbb <= tiny * mb.abs().max(1.0).powi(2) {
        return None;
    }
    Some((sab * sab / (saa * sbb)).clamp(0.0, 1.0))
}
