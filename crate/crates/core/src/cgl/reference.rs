//! Slow projected-gradient solver used only to cross-check the production
//! solver on small problems.

use crate::error::{Error, Result};
use crate::graph::CglMatrix;

use super::{log_det_shifted, CglProblem};

pub const MAX_VERTICES: usize = 12;
const GRADIENT_TOL: f64 = 1e-9;
const MAX_ITER: usize = 1_000_000;
const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// Spectral projected gradient on the edge weights (Barzilai–Borwein steps,
/// nonmonotone Armijo search over the last `MEMORY` objective values), run
/// until the projected-gradient norm falls below `1e-9`.
pub fn estimate_cgl_reference(prob: &CglProblem) -> Result<CglMatrix> {
    let n = prob.n();
    if n > MAX_VERTICES {
        return Err(Error::InvalidSpec(format!(
            "reference solver supports n <= {MAX_VERTICES}, got {n}"
        )));
    }
    let cost = prob.pair_costs();
    if cost.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Degenerate("non-positive pair cost".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let total: f64 = cost.iter().sum();
    let mut w = vec![(n - 1) as f64 / total; pairs.len()];

    let value = |w: &[f64]| -> Option<f64> {
        let l = CglMatrix::from_pair_weights(n, w);
        let logdet = log_det_shifted(l.matrix())?;
        Some(w.iter().zip(&cost).map(|(a, b)| a * b).sum::<f64>() - logdet)
    };
    let gradient = |w: &[f64]| -> Vec<f64> {
        let theta = CglMatrix::from_pair_weights(n, w).into_matrix().add_scalar(1.0 / n as f64);
        let inv = theta.cholesky().expect("iterate stays connected").inverse();
        pairs
            .iter()
            .zip(&cost)
            .map(|(&(i, j), c)| c - (inv[(i, i)] + inv[(j, j)] - 2.0 * inv[(i, j)]))
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut f = value(&w).ok_or(Error::Disconnected)?;
    let mut history = vec![f];
    let mut g = gradient(&w);
    let mut spectral_step = 1.0 / g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for _ in 0..MAX_ITER {
        let pg_norm = w
            .iter()
            .zip(&g)
            .map(|(wi, gi)| (wi - (wi - gi).max(0.0)).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg_norm < GRADIENT_TOL {
            break;
        }
        let direction: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| (wi - spectral_step * gi).max(0.0) - wi).collect();
        let slope = dot(&g, &direction);
        let reference = history.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut t = 1.0;
        let trial = loop {
            let trial: Vec<f64> = w.iter().zip(&direction).map(|(wi, di)| wi + t * di).collect();
            match value(&trial) {
                Some(ft) if ft <= reference + ARMIJO * t * slope => break Some((trial, ft)),
                _ => {}
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((next, f_next)) = trial else { break };
        let g_next = gradient(&next);
        let s: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        spectral_step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-30, 1e30) } else { 1e30_f64.min(spectral_step * 2.0) };
        w = next;
        g = g_next;
        f = f_next;
        history.push(f);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    Ok(CglMatrix::from_pair_weights(n, &w))
}
