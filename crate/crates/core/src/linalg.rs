//! Small dense symmetric-matrix helpers built on nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

fn spectral_map(a: &Mat, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = EIGEN_FLOOR * largest;
    if largest <= 0.0 || eig.eigenvalues.iter().any(|&v| v <= floor) {
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|x, y| x.total_cmp(y));
        return Err(Error::NotPositiveDefinite { eigenvalues });
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Symmetric positive-definite square root.
pub fn sqrt_pd(a: &Mat) -> Result<Mat> {
    spectral_map(a, f64::sqrt)
}

/// Inverse symmetric square root `A^{-1/2}`.
pub fn inv_sqrt_pd(a: &Mat) -> Result<Mat> {
    spectral_map(a, |v| 1.0 / v.sqrt())
}

pub fn inverse_pd(a: &Mat) -> Result<Mat> {
    spectral_map(a, |v| 1.0 / v)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn pinv_psd(a: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(a));
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = EIGEN_FLOOR * largest;
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|v| if v > floor { 1.0 / v } else { 0.0 }));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Row-major nested vectors, the JSON layout for matrices.
pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let a = Mat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let r = inv_sqrt_pd(&a).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((r[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sqrt_pd(&a).unwrap();
        assert!(max_abs(&(&r * &r - &a)) < 1e-14);
    }

    #[test]
    fn singular_rejected() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inv_sqrt_pd(&a), Err(Error::NotPositiveDefinite { .. })));
        let p = pinv_psd(&a);
        assert!(max_abs(&(&a * &p * &a - &a)) < 1e-14);
    }
}
