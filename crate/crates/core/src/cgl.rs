//! Regularized maximum-likelihood estimation of a combinatorial graph
//! Laplacian:
//!
//! ```text
//! minimize  Tr(L·K) − log|L| + ‖L ⊙ H‖₁   over CGL matrices L
//! ```
//!
//! where `|L|` is the pseudo-determinant. The solver works on the edge-weight
//! parameterization `L = Σₑ wₑ bₑbₑᵀ`, `wₑ ≥ 0`, in which the penalty folds
//! into the linear term and `log|L| = log det(L + 11ᵀ/n)`. Each coordinate
//! step minimizes the objective exactly along one edge weight and updates
//! `Θ⁻¹ = (L + 11ᵀ/n)⁻¹` with a rank-one correction; `Θ⁻¹` is recomputed
//! from a Cholesky factor after every sweep.

pub mod reference;

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::CglMatrix;
use crate::spectral;

/// Edges with weight at or below this are treated as absent by the
/// optimality check.
pub const ACTIVE_EDGE_THRESHOLD: f64 = 1e-10;
/// Sweeps without a new best KKT residual before the solver gives up.
const STALL_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
enum Penalty {
    L1 { alpha: f64 },
    Matrix(DMatrix<f64>),
}

/// Input `K` (a covariance or prefiltered covariance) and the ℓ₁ penalty.
#[derive(Debug, Clone)]
pub struct CglProblem {
    k: DMatrix<f64>,
    penalty: Penalty,
}

impl CglProblem {
    /// Standard penalty `H = α(2I − 11ᵀ)`, i.e. `α‖L‖₁`.
    pub fn new(k: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidSpec(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Self::check_input(&k)?;
        Ok(Self { k, penalty: Penalty::L1 { alpha } })
    }

    /// Arbitrary symmetric penalty matrix `H`.
    pub fn with_penalty_matrix(k: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        Self::check_input(&k)?;
        if h.shape() != k.shape() {
            return Err(Error::DimensionMismatch { expected: k.nrows(), got: h.nrows() });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if (&h - h.transpose()).amax() > 1e-9 * h.amax().max(1.0) {
            return Err(Error::InvalidSpec("penalty matrix must be symmetric".into()));
        }
        Ok(Self { k, penalty: Penalty::Matrix(h) })
    }

    fn check_input(k: &DMatrix<f64>) -> Result<()> {
        let n = k.nrows();
        if n < 2 || k.ncols() != n {
            return Err(Error::InvalidSpec("input matrix must be square with n >= 2".into()));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if (k - k.transpose()).amax() > 1e-9 * k.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidSpec("input matrix must be symmetric".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn input(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn penalty_matrix(&self) -> DMatrix<f64> {
        match &self.penalty {
            Penalty::L1 { alpha } => {
                let n = self.n();
                DMatrix::from_fn(n, n, |i, j| if i == j { *alpha } else { -*alpha })
            }
            Penalty::Matrix(h) => h.clone(),
        }
    }

    /// `K + H̃` where `H̃ᵢᵢ = |Hᵢᵢ|` and `H̃ᵢⱼ = −|Hᵢⱼ|`, so that
    /// `Tr(L·H̃) = ‖L ⊙ H‖₁` for every CGL `L`.
    pub fn folded_input(&self) -> DMatrix<f64> {
        let h = self.penalty_matrix();
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let p = h[(i, j)].abs();
            self.k[(i, j)] + if i == j { p } else { -p }
        })
    }

    /// Linear cost of each vertex pair, `bₑᵀ(K + H̃)bₑ`, lexicographic order.
    pub fn pair_costs(&self) -> Vec<f64> {
        let kr = self.folded_input();
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(kr[(i, i)] + kr[(j, j)] - 2.0 * kr[(i, j)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Budget of full coordinate sweeps.
    pub max_iter: usize,
    /// Target for the optimality residual.
    pub tol_kkt: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, tol_kkt: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub connectivity_warning: bool,
}

/// `Tr(L·K) − log|L| + ‖L ⊙ H‖₁` with `log|L| = log det(L + 11ᵀ/n)`.
pub fn objective(l: &CglMatrix, prob: &CglProblem) -> Result<f64> {
    if l.n() != prob.n() {
        return Err(Error::DimensionMismatch { expected: prob.n(), got: l.n() });
    }
    let n = l.n();
    let logdet = log_det_shifted(l.matrix()).ok_or(Error::Disconnected)?;
    let trace = (l.matrix().component_mul(prob.input())).sum();
    let h = prob.penalty_matrix();
    let penalty = l.matrix().component_mul(&h).abs().sum();
    debug_assert_eq!(h.nrows(), n);
    Ok(trace - logdet + penalty)
}

/// `log det(L + 11ᵀ/n)`, or `None` when the shifted matrix is not positive
/// definite (disconnected Laplacian).
pub fn log_det_shifted(l: &DMatrix<f64>) -> Option<f64> {
    let n = l.nrows();
    let theta = l.add_scalar(1.0 / n as f64);
    let chol = theta.cholesky()?;
    let diag = chol.l_dirty().diagonal();
    if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return None;
    }
    Some(2.0 * diag.iter().map(|d| d.ln()).sum::<f64>())
}

/// Largest violation of the optimality conditions in edge-weight
/// coordinates: `|gₑ|` on edges with `−Lᵢⱼ > 1e-10`, `max(0, −gₑ)` elsewhere,
/// where `gₑ = bₑᵀ(K + H̃ − (L + 11ᵀ/n)⁻¹)bₑ`.
pub fn kkt_residual(l: &CglMatrix, prob: &CglProblem) -> Result<f64> {
    let n = l.n();
    let theta = l.matrix().add_scalar(1.0 / n as f64);
    let inv = theta.cholesky().ok_or(Error::Disconnected)?.inverse();
    let costs = prob.pair_costs();
    let mut worst = 0.0f64;
    let mut e = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let g = costs[e] - (inv[(i, i)] + inv[(j, j)] - 2.0 * inv[(i, j)]);
            let v = if -l.matrix()[(i, j)] > ACTIVE_EDGE_THRESHOLD { g.abs() } else { (-g).max(0.0) };
            worst = worst.max(v);
            e += 1;
        }
    }
    Ok(worst)
}

/// Solves the problem from a complete-graph start with default options.
pub fn estimate_cgl(prob: &CglProblem) -> Result<(CglMatrix, SolverReport)> {
    estimate_cgl_with(prob, &SolverOptions::default(), None)
}

/// Solves the problem, optionally warm-started from a connected Laplacian.
pub fn estimate_cgl_with(
    prob: &CglProblem,
    opts: &SolverOptions,
    warm_start: Option<&CglMatrix>,
) -> Result<(CglMatrix, SolverReport)> {
    let mut solver = Solver::new(prob, warm_start)?;
    let report = solver.run(opts)?;
    let l = CglMatrix::from_pair_weights(solver.n, &solver.weights());
    let mut report = report;
    let decomposition = spectral::eig_sym(l.matrix())?;
    let values = decomposition.values();
    if values.len() > 1 && values[1] < 1e-9 * decomposition.spectral_radius() {
        warn!("estimated Laplacian is (numerically) disconnected: lambda_2 = {:e}", values[1]);
        report.connectivity_warning = true;
    }
    Ok((l, report))
}

/// Works in units where the mean pair cost is one: `w' = s·w`, `c' = c/s`.
/// Then `f(w) = f'(w') + (n−1)·ln s` and `gₑ(w) = s·g'ₑ(w')`.
struct Solver {
    n: usize,
    pairs: Vec<(usize, usize)>,
    scale: f64,
    cost: Vec<f64>,
    w: Vec<f64>,
    /// `(L + 11ᵀ/n)⁻¹`, row-major.
    minv: Vec<f64>,
    logdet: f64,
    scratch: Vec<f64>,
}

impl Solver {
    fn new(prob: &CglProblem, warm_start: Option<&CglMatrix>) -> Result<Self> {
        let n = prob.n();
        let cost = prob.pair_costs();
        if let Some((e, c)) = cost.iter().enumerate().find(|(_, c)| !(**c > 0.0)) {
            return Err(Error::Degenerate(format!(
                "pair {e} has non-positive cost {c:e}; the likelihood is unbounded"
            )));
        }
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let scale = cost.iter().sum::<f64>() / cost.len() as f64;
        let cost: Vec<f64> = cost.iter().map(|c| c / scale).collect();
        let w = match warm_start {
            Some(l) if l.n() == n && log_det_shifted(l.matrix()).is_some() => {
                l.pair_weights().iter().map(|w| w * scale).collect()
            }
            _ => {
                // best uniform complete graph: minimizes w·Σc − (n−1)·log(nw)
                let total: f64 = cost.iter().sum();
                vec![(n - 1) as f64 / total; pairs.len()]
            }
        };
        let mut solver = Self {
            n,
            pairs,
            scale,
            cost,
            w,
            minv: vec![0.0; n * n],
            logdet: 0.0,
            scratch: vec![0.0; n],
        };
        if !solver.refresh() {
            return Err(Error::Degenerate("initial Laplacian is not connected".into()));
        }
        Ok(solver)
    }

    fn theta(&self, w: &[f64]) -> DMatrix<f64> {
        CglMatrix::from_pair_weights(self.n, w)
            .into_matrix()
            .add_scalar(1.0 / self.n as f64)
    }

    /// Recomputes `Θ⁻¹` and `log det Θ` from scratch.
    fn refresh(&mut self) -> bool {
        let Some(chol) = self.theta(&self.w).cholesky() else {
            return false;
        };
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        for i in 0..self.n {
            for j in 0..self.n {
                self.minv[i * self.n + j] = inv[(i, j)];
            }
        }
        self.logdet = logdet;
        logdet.is_finite()
    }

    fn weights(&self) -> Vec<f64> {
        self.w.iter().map(|w| w / self.scale).collect()
    }

    fn objective(&self) -> f64 {
        self.w.iter().zip(&self.cost).map(|(w, c)| w * c).sum::<f64>() - self.logdet
            + (self.n - 1) as f64 * self.scale.ln()
    }

    fn resistance(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.minv[i * n + i] + self.minv[j * n + j] - 2.0 * self.minv[i * n + j]
    }

    fn gradient(&self, e: usize) -> f64 {
        let (i, j) = self.pairs[e];
        self.cost[e] - self.resistance(i, j)
    }

    fn kkt(&self) -> f64 {
        let active = ACTIVE_EDGE_THRESHOLD * self.scale;
        (0..self.pairs.len())
            .map(|e| {
                let g = self.gradient(e) * self.scale;
                if self.w[e] > active {
                    g.abs()
                } else {
                    (-g).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Exact minimization along edge `e`; returns the step taken.
    fn coordinate_step(&mut self, e: usize) -> f64 {
        let (i, j) = self.pairs[e];
        let n = self.n;
        let r = self.resistance(i, j);
        let c = self.cost[e];
        let target = (self.w[e] + 1.0 / c - 1.0 / r).max(0.0);
        let t = target - self.w[e];
        if t == 0.0 {
            return 0.0;
        }
        let denom = 1.0 + t * r;
        if !(denom > 0.0) {
            return 0.0;
        }
        for k in 0..n {
            self.scratch[k] = self.minv[k * n + i] - self.minv[k * n + j];
        }
        let coef = t / denom;
        for a in 0..n {
            let sa = coef * self.scratch[a];
            if sa == 0.0 {
                continue;
            }
            let row = &mut self.minv[a * n..(a + 1) * n];
            for (m, &sb) in row.iter_mut().zip(&self.scratch) {
                *m -= sa * sb;
            }
        }
        self.w[e] = target;
        self.logdet += denom.ln();
        t
    }

    fn sweep(&mut self, edges: &[usize]) -> f64 {
        let mut largest = 0.0f64;
        for &e in edges {
            let t = self.coordinate_step(e);
            largest = largest.max(t.abs());
        }
        largest
    }

    fn run(&mut self, opts: &SolverOptions) -> Result<SolverReport> {
        let all: Vec<usize> = (0..self.pairs.len()).collect();
        let mut trace = vec![self.objective()];
        let mut iterations = 0;
        let mut kkt = self.kkt();
        let (mut best_kkt, mut since_best) = (kkt, 0);
        while kkt > opts.tol_kkt && iterations < opts.max_iter {
            self.sweep(&all);
            iterations += 1;
            if !self.refresh() {
                return Err(Error::Degenerate("iterate lost connectivity".into()));
            }
            trace.push(self.objective());
            kkt = self.kkt();
            if kkt < best_kkt {
                best_kkt = kkt;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= STALL_SWEEPS {
                    debug!("KKT residual stalled at {kkt:e}");
                    break;
                }
            }
        }
        Ok(SolverReport {
            objective_trace: trace,
            iterations,
            kkt_residual: kkt,
            converged: kkt <= opts.tol_kkt,
            connectivity_warning: false,
        })
    }
}
