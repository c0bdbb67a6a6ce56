//! Gaussian graph signals, sample covariances and the discrete random
//! diffusion process whose continuous limit is the heat kernel.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CglMatrix;
use crate::rng::{tag, Stream};
use crate::spectral::{self, EPS_ZERO};

/// `k` observations of an `n`-vertex signal, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch {
    data: DMatrix<f64>,
}

impl SignalBatch {
    pub fn from_rows(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Degenerate("signal batch needs at least one sample and vertex".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn k(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }
}

/// Draws `k` samples of `N(0, Σ)` from the stream `(seed, SIGNAL, 0, 0)`.
pub fn sample_signals(sigma: &DMatrix<f64>, k: usize, seed: u64) -> Result<SignalBatch> {
    let mut stream = Stream::new(seed, tag::SIGNAL, 0, 0);
    sample_signals_from(sigma, k, &mut stream)
}

/// Each sample is `U·diag(√λᵢ)·z` with `z` drawn as `n` consecutive standard
/// normals; eigenvalues at or below `EPS_ZERO·λ_max` count as zero, so
/// singular covariances are handled.
pub fn sample_signals_from(sigma: &DMatrix<f64>, k: usize, stream: &mut Stream) -> Result<SignalBatch> {
    if k == 0 {
        return Err(Error::Degenerate("sample count k must be at least 1".into()));
    }
    let d = spectral::eig_sym(sigma)?;
    let radius = d.spectral_radius();
    let min = d.values()[0];
    if min < -1e-10 * radius {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let n = d.n();
    let mut factor = d.vectors().clone();
    for (mut col, &l) in factor.column_iter_mut().zip(d.values()) {
        col *= if l > EPS_ZERO * radius { l.sqrt() } else { 0.0 };
    }
    let mut z = DMatrix::zeros(k, n);
    for i in 0..k {
        for j in 0..n {
            z[(i, j)] = stream.standard_normal();
        }
    }
    SignalBatch::from_rows(z * factor.transpose())
}

/// Second-moment estimate `(1/k)·Σ xᵢxᵢᵀ`; no mean is removed.
pub fn sample_covariance(batch: &SignalBatch) -> DMatrix<f64> {
    let x = batch.data();
    let s = x.tr_mul(x) / batch.k() as f64;
    spectral::symmetrize(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub rate: f64,
    pub sigma2: f64,
    pub steps: u64,
}

impl DiffusionConfig {
    pub fn new(rate: f64, sigma2: f64, steps: u64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::InvalidSpec(format!("diffusion rate must lie in (0, 1), got {rate}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidSpec(format!("initial variance must be positive, got {sigma2}")));
        }
        Ok(Self { rate, sigma2, steps })
    }
}

/// `(I − rL)^t · x₀` by repeated application of one diffusion step.
pub fn simulate_diffusion(l: &CglMatrix, cfg: &DiffusionConfig, x0: &DVector<f64>) -> Result<DVector<f64>> {
    if x0.len() != l.n() {
        return Err(Error::DimensionMismatch { expected: l.n(), got: x0.len() });
    }
    warn_if_unstable(l, cfg.rate)?;
    let mut x = x0.clone();
    for _ in 0..cfg.steps {
        let lx = l.matrix() * &x;
        x -= lx * cfg.rate;
    }
    Ok(x)
}

fn warn_if_unstable(l: &CglMatrix, rate: f64) -> Result<()> {
    let lambda_max = spectral::eig_sym(l.matrix())?.spectral_radius();
    if rate * lambda_max >= 1.0 {
        warn!(
            "diffusion rate {rate} is at or above 1/lambda_max = {}; iterates may diverge",
            1.0 / lambda_max
        );
    }
    Ok(())
}

/// `σ²(I − rL)^{2t}`, evaluated on the spectrum of `L`.
pub fn diffusion_covariance(l: &CglMatrix, cfg: &DiffusionConfig) -> Result<DMatrix<f64>> {
    let d = spectral::eig_sym(l.matrix())?;
    let exponent = 2 * cfg.steps;
    d.matrix_function(|lambda| cfg.sigma2 * power_u64(1.0 - cfg.rate * lambda, exponent))
}

fn power_u64(base: f64, exponent: u64) -> f64 {
    if exponent <= i32::MAX as u64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_cgl, generate_graph, GraphKind, GraphModelSpec};

    #[test]
    fn zero_covariance_gives_zero_samples() {
        let b = sample_signals(&DMatrix::zeros(3, 3), 5, 1).unwrap();
        assert_eq!(b.data(), &DMatrix::zeros(5, 3));
    }

    #[test]
    fn rejects_zero_k_and_indefinite_sigma() {
        assert!(sample_signals(&DMatrix::identity(2, 2), 0, 1).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(sample_signals(&bad, 3, 1), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn identity_covariance_converges() {
        let k = 20_000;
        let b = sample_signals(&DMatrix::identity(4, 4), k, 3).unwrap();
        let s = sample_covariance(&b);
        let tol = 5.0 / (k as f64).sqrt();
        assert!((s - DMatrix::identity(4, 4)).amax() < tol);
    }

    #[test]
    fn covariance_of_copies() {
        let x = [1.0, -2.0, 0.5];
        let rows: Vec<f64> = (0..4).flat_map(|_| x).collect();
        let b = SignalBatch::from_rows(DMatrix::from_row_slice(4, 3, &rows)).unwrap();
        let v = DVector::from_row_slice(&x);
        assert!((sample_covariance(&b) - &v * v.transpose()).amax() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_signals(&DMatrix::identity(3, 3), 4, 8).unwrap();
        let b = sample_signals(&DMatrix::identity(3, 3), 4, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_signal_is_stationary() {
        let g = generate_graph(&GraphModelSpec::new(GraphKind::Grid, 9, 0)).unwrap();
        let l = build_cgl(&g).unwrap();
        let cfg = DiffusionConfig::new(0.05, 1.0, 25).unwrap();
        let ones = DVector::from_element(9, 1.0);
        let out = simulate_diffusion(&l, &cfg, &ones).unwrap();
        assert!((out - ones).amax() < 1e-12);
        let zero_steps = DiffusionConfig::new(0.05, 2.0, 0).unwrap();
        let x0 = DVector::from_fn(9, |i, _| i as f64);
        assert_eq!(simulate_diffusion(&l, &zero_steps, &x0).unwrap(), x0);
        let cov = diffusion_covariance(&l, &zero_steps).unwrap();
        assert!((cov - DMatrix::identity(9, 9) * 2.0).amax() < 1e-12);
    }

    #[test]
    fn diffusion_config_validation() {
        assert!(DiffusionConfig::new(0.0, 1.0, 1).is_err());
        assert!(DiffusionConfig::new(1.0, 1.0, 1).is_err());
        assert!(DiffusionConfig::new(0.5, 0.0, 1).is_err());
    }
}
