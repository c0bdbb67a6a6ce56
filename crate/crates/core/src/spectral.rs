//! Symmetric eigendecomposition, spectral matrix functions, pseudoinverses
//! and the graph Fourier transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold (against the spectral radius) below which an
/// eigenvalue is treated as zero.
pub const EPS_ZERO: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// `M = U·diag(λ)·Uᵀ` with ascending `λ` and orthonormal columns in `U`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `U·diag(d)·Uᵀ` for an arbitrary diagonal `d`.
    pub fn reassemble(&self, diagonal: &[f64]) -> DMatrix<f64> {
        assert_eq!(diagonal.len(), self.n());
        let mut scaled = self.vectors.clone();
        for (mut col, &d) in scaled.column_iter_mut().zip(diagonal) {
            col *= d;
        }
        let out = scaled * self.vectors.transpose();
        symmetrize(&out)
    }

    /// `U·diag(f(λ₁), …, f(λₙ))·Uᵀ`.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        if mapped.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(self.reassemble(&mapped))
    }

    /// Graph Fourier transform `Uᵀx`.
    pub fn gft(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: x.len() });
        }
        Ok(self.vectors.tr_mul(x))
    }

    pub fn inverse_gft(&self, coefficients: &DVector<f64>) -> Result<DVector<f64>> {
        if coefficients.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: coefficients.len() });
        }
        Ok(&self.vectors * coefficients)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cyclic Jacobi eigendecomposition of the symmetric part of `m`.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-12·‖M‖_F`.
/// Eigenvalues come back ascending; each eigenvector is signed so that its
/// first entry of largest magnitude is positive.
pub fn eig_sym(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    // row-major working copies
    let mut a = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_TOL * norm;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a, n);
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].total_cmp(&a[y * n + y]));
    let values: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let peak = (0..n).fold(0.0f64, |acc, i| acc.max(v[i * n + k].abs()));
        let lead = (0..n)
            .find(|&i| v[i * n + k].abs() >= peak - 1e-12)
            .unwrap_or(0);
        let sign = if v[lead * n + k] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[i * n + k];
        }
    }
    Ok(SpectralDecomposition { vectors, values })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j] * a[i * n + j];
            }
        }
    }
    sum.sqrt()
}

/// Scalar pseudoinverse of each entry; values with
/// `|λ| ≤ eps_zero·max|λ|` map to zero.
pub fn pseudoinverse_spectrum(lambdas: &[f64], eps_zero: f64) -> Vec<f64> {
    let radius = lambdas.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = eps_zero * radius;
    lambdas
        .iter()
        .map(|&l| if l.abs() <= cutoff || l == 0.0 { 0.0 } else { 1.0 / l })
        .collect()
}

/// Moore–Penrose pseudoinverse of a symmetric matrix.
pub fn pseudoinverse(m: &DMatrix<f64>, eps_zero: f64) -> Result<DMatrix<f64>> {
    let d = eig_sym(m)?;
    Ok(d.reassemble(&pseudoinverse_spectrum(d.values(), eps_zero)))
}

/// Log of the product of the nonzero eigenvalues.
pub fn log_pseudo_determinant(lambdas: &[f64], eps_zero: f64) -> f64 {
    let radius = lambdas.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    lambdas
        .iter()
        .filter(|l| l.abs() > eps_zero * radius)
        .map(|l| l.abs().ln())
        .sum()
}
