//! Recovery metrics, trace normalization and the regularization grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CglMatrix;
use crate::par::Execution;

pub const DEFAULT_EDGE_EPS: f64 = 1e-4;
pub const ALPHA_GRID_STEPS: i32 = 14;
pub const ALPHA_GRID_RATIO: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub re: f64,
    pub fs: f64,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub alpha_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FScore {
    pub fs: f64,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: b.nrows(), got: a.nrows() });
    }
    Ok(())
}

/// `‖L̂ − L*‖_F / ‖L*‖_F`.
pub fn relative_error(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>) -> Result<f64> {
    same_shape(l_hat, l_star)?;
    let denom = l_star.norm();
    if denom == 0.0 {
        return Err(Error::InvalidSpec("reference Laplacian is the zero matrix".into()));
    }
    Ok((l_hat - l_star).norm() / denom)
}

/// Edge-detection F-score. Pair `(i, j)`, `i < j`, is an edge of a matrix
/// when `−entry(i, j) > edge_eps`.
pub fn f_score(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>, edge_eps: f64) -> Result<FScore> {
    same_shape(l_hat, l_star)?;
    if !(edge_eps > 0.0) {
        return Err(Error::InvalidSpec(format!("edge_eps must be positive, got {edge_eps}")));
    }
    let n = l_star.nrows();
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            match (-l_hat[(i, j)] > edge_eps, -l_star[(i, j)] > edge_eps) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fneg;
    let fs = if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 };
    Ok(FScore { fs, tp, fp, r#fn: fneg })
}

/// `(Tr(L*)/Tr(L̂))·L̂`.
pub fn trace_normalize(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    same_shape(l_hat, l_star)?;
    let t = l_hat.trace();
    if !(t > 0.0) {
        return Err(Error::Degenerate(format!("estimate has non-positive trace {t:e}")));
    }
    Ok(l_hat * (l_star.trace() / t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub edge_eps: f64,
    /// Trace-normalize the estimate before scoring.
    pub normalize: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { edge_eps: DEFAULT_EDGE_EPS, normalize: true }
    }
}

/// RE and FS of an estimate, trace-normalized unless disabled.
pub fn evaluate(l_hat: &DMatrix<f64>, l_star: &CglMatrix, opts: &MetricOptions, alpha: f64) -> Result<MetricReport> {
    let scored = if opts.normalize { trace_normalize(l_hat, l_star.matrix())? } else { l_hat.clone() };
    let re = relative_error(&scored, l_star.matrix())?;
    let f = f_score(&scored, l_star.matrix(), opts.edge_eps)?;
    Ok(MetricReport { re, fs: f.fs, tp: f.tp, fp: f.fp, r#fn: f.r#fn, alpha_used: alpha })
}

/// `{0} ∪ {0.75^r·s_max·√(ln n / k) : r = 1..14}` with `s_max` the largest
/// off-diagonal magnitude of `S`; zero first, then decreasing.
pub fn alpha_grid(s: &DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let n = s.nrows();
    if n < 2 || s.ncols() != n {
        return Err(Error::InvalidSpec("covariance must be square with n >= 2".into()));
    }
    if k == 0 {
        return Err(Error::InvalidSpec("alpha grid needs k >= 1 samples".into()));
    }
    let mut s_max = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s_max = s_max.max(s[(i, j)].abs());
            }
        }
    }
    let base = s_max * ((n as f64).ln() / k as f64).sqrt();
    let mut grid = vec![0.0];
    grid.extend((1..=ALPHA_GRID_STEPS).map(|r| ALPHA_GRID_RATIO.powi(r) * base));
    Ok(grid)
}

/// One estimate produced for a given regularization weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub estimate: DMatrix<f64>,
    pub beta_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub metrics: MetricReport,
    pub beta_hat: f64,
    pub estimate: DMatrix<f64>,
}

/// Estimates at every grid point and keeps the one with the smallest RE
/// (first on ties); its FS is reported alongside.
pub fn best_alpha_sweep<F>(alphas: &[f64], l_star: &CglMatrix, opts: &MetricOptions, estimate: F) -> Result<SweepOutcome>
where
    F: Fn(f64) -> Result<Candidate> + Sync + Send,
{
    best_alpha_sweep_with(Execution::default(), alphas, l_star, opts, estimate)
}

pub fn best_alpha_sweep_with<F>(
    exec: Execution,
    alphas: &[f64],
    l_star: &CglMatrix,
    opts: &MetricOptions,
    estimate: F,
) -> Result<SweepOutcome>
where
    F: Fn(f64) -> Result<Candidate> + Sync + Send,
{
    if alphas.is_empty() {
        return Err(Error::InvalidSpec("empty alpha grid".into()));
    }
    let outcomes = exec.map(alphas, |&alpha| -> Result<SweepOutcome> {
        let c = estimate(alpha)?;
        let metrics = evaluate(&c.estimate, l_star, opts, alpha)?;
        Ok(SweepOutcome { metrics, beta_hat: c.beta_hat, estimate: c.estimate })
    });
    let mut best: Option<SweepOutcome> = None;
    for outcome in outcomes {
        let outcome = outcome?;
        if best.as_ref().is_none_or(|b| outcome.metrics.re < b.metrics.re) {
            best = Some(outcome);
        }
    }
    Ok(best.expect("grid is nonempty"))
}
