//! Weighted undirected graphs, their combinatorial Laplacians, and the
//! random graph models used in the synthetic experiments.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tag, Stream};
use crate::spectral;

/// Maximum number of topology redraws before `generate_graph` gives up.
pub const MAX_CONNECTIVITY_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl From<(usize, usize, f64)> for Edge {
    fn from((i, j, weight): (usize, usize, f64)) -> Self {
        Self { i, j, weight }
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.i, e.j, e.weight)
    }
}

/// Simple weighted undirected graph stored as an edge list with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl TryFrom<RawGraph> for WeightedGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        WeightedGraph::new(raw.n, raw.edges)
    }
}

impl From<WeightedGraph> for RawGraph {
    fn from(g: WeightedGraph) -> Self {
        RawGraph { n: g.n, edges: g.edges }
    }
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("vertex count must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) must satisfy 0 <= i < j < {n}",
                    e.i, e.j
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.i, e.j, e.weight
                )));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { weight: e.weight * factor, ..*e })
            .collect();
        Self::new(self.n, edges)
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Combinatorial graph Laplacian `L = D − W` of a connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CglMatrix(DMatrix<f64>);

impl CglMatrix {
    /// Assembles the Laplacian from weights on the `n(n−1)/2` vertex pairs in
    /// lexicographic order. Negative weights are treated as absent.
    /// Off-diagonals are `−w` and each diagonal is the negated sum of its row,
    /// so row sums vanish exactly.
    pub fn from_pair_weights(n: usize, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), n * (n - 1) / 2);
        let mut m = DMatrix::zeros(n, n);
        let mut e = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = weights[e].max(0.0);
                m[(i, j)] = -w;
                m[(j, i)] = -w;
                e += 1;
            }
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            m[(i, i)] = -off;
        }
        Self(m)
    }

    /// Validates a dense matrix against the Laplacian constraints.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::InvalidGraph("Laplacian must be square and non-empty".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let tol = 1e-10 * scale * n as f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::InvalidGraph(format!("not symmetric at ({i}, {j})")));
                }
                if i != j && m[(i, j)] > tol {
                    return Err(Error::InvalidGraph(format!("positive off-diagonal at ({i}, {j})")));
                }
                row += m[(i, j)];
            }
            if row.abs() > tol {
                return Err(Error::InvalidGraph(format!("row {i} sums to {row:e}")));
            }
        }
        let decomposition = spectral::eig_sym(&m)?;
        let min = decomposition.values()[0];
        if min < -1e-10 * scale {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Weights on all vertex pairs in lexicographic order.
    pub fn pair_weights(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((-self.0[(i, j)]).max(0.0));
            }
        }
        out
    }

    /// Edges whose weight `−L_ij` exceeds `threshold`.
    pub fn to_graph(&self, threshold: f64) -> Result<WeightedGraph> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = -self.0[(i, j)];
                if w > threshold {
                    edges.push(Edge { i, j, weight: w });
                }
            }
        }
        WeightedGraph::new(n, edges)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// `L = D − W`; rejects disconnected graphs.
pub fn build_cgl(g: &WeightedGraph) -> Result<CglMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for e in g.edges() {
        m[(e.i, e.j)] -= e.weight;
        m[(e.j, e.i)] -= e.weight;
        m[(e.i, e.i)] += e.weight;
        m[(e.j, e.j)] += e.weight;
    }
    Ok(CglMatrix(m))
}

/// `xᵀLx`.
pub fn quadratic_form(l: &CglMatrix, x: &DVector<f64>) -> Result<f64> {
    if x.len() != l.n() {
        return Err(Error::DimensionMismatch { expected: l.n(), got: x.len() });
    }
    Ok(x.dot(&(l.matrix() * x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Grid,
    ErdosRenyi,
    Modular,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Grid => "grid",
            GraphKind::ErdosRenyi => "erdos_renyi",
            GraphKind::Modular => "modular",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphModelSpec {
    pub kind: GraphKind,
    pub n: usize,
    #[serde(default = "defaults::p")]
    pub p: f64,
    #[serde(default = "defaults::p1")]
    pub p1: f64,
    #[serde(default = "defaults::p2")]
    pub p2: f64,
    #[serde(default = "defaults::module_count")]
    pub module_count: usize,
    #[serde(default = "defaults::weight_low")]
    pub weight_low: f64,
    #[serde(default = "defaults::weight_high")]
    pub weight_high: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn p() -> f64 {
        0.2
    }
    pub fn p1() -> f64 {
        0.1
    }
    pub fn p2() -> f64 {
        0.2
    }
    pub fn module_count() -> usize {
        4
    }
    pub fn weight_low() -> f64 {
        0.1
    }
    pub fn weight_high() -> f64 {
        3.0
    }
}

impl GraphModelSpec {
    /// Experiment defaults: ER `p = 0.2`, modular `p1 = 0.1`, `p2 = 0.2` with
    /// four modules, weights `U(0.1, 3)`.
    pub fn new(kind: GraphKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            p: defaults::p(),
            p1: defaults::p1(),
            p2: defaults::p2(),
            module_count: defaults::module_count(),
            weight_low: defaults::weight_low(),
            weight_high: defaults::weight_high(),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        for (name, p) in [("p", self.p), ("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {name} = {p} outside [0, 1]"));
            }
        }
        if !(self.weight_low > 0.0 && self.weight_high >= self.weight_low && self.weight_high.is_finite()) {
            return bad(format!(
                "weights need 0 < weight_low <= weight_high, got [{}, {}]",
                self.weight_low, self.weight_high
            ));
        }
        match self.kind {
            GraphKind::Grid => {
                let side = grid_side(self.n);
                if side * side != self.n {
                    return bad(format!("grid graphs need n to be a perfect square, got {}", self.n));
                }
            }
            GraphKind::Modular => {
                if self.module_count == 0 || self.module_count > self.n {
                    return bad(format!(
                        "module_count must be in 1..={}, got {}",
                        self.n, self.module_count
                    ));
                }
            }
            GraphKind::ErdosRenyi => {}
        }
        Ok(())
    }
}

fn grid_side(n: usize) -> usize {
    let mut side = (n as f64).sqrt().round() as usize;
    while side * side > n {
        side -= 1;
    }
    side
}

/// Module index of vertex `v`; remainder vertices join the last module.
pub fn module_of(v: usize, n: usize, module_count: usize) -> usize {
    let size = (n / module_count).max(1);
    (v / size).min(module_count - 1)
}

fn topology(spec: &GraphModelSpec, stream: &mut Stream) -> Vec<(usize, usize)> {
    let n = spec.n;
    let mut pairs = Vec::new();
    match spec.kind {
        GraphKind::Grid => {
            let side = grid_side(n);
            for i in 0..n {
                let (r, c) = (i / side, i % side);
                if c + 1 < side {
                    pairs.push((i, i + 1));
                }
                if r + 1 < side {
                    pairs.push((i, i + side));
                }
            }
            pairs.sort_unstable();
        }
        GraphKind::ErdosRenyi => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if stream.bernoulli(spec.p) {
                        pairs.push((i, j));
                    }
                }
            }
        }
        GraphKind::Modular => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let same = module_of(i, n, spec.module_count) == module_of(j, n, spec.module_count);
                    if stream.bernoulli(if same { spec.p2 } else { spec.p1 }) {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    pairs
}

/// Draws a connected graph from the model. Attempt `a` uses the stream
/// `(seed, GRAPH, a, 0)`: topology draws first, one per candidate pair in
/// lexicographic order, then one uniform weight per realized edge.
pub fn generate_graph(spec: &GraphModelSpec) -> Result<WeightedGraph> {
    spec.validate()?;
    for attempt in 0..MAX_CONNECTIVITY_RETRIES {
        let mut stream = Stream::new(spec.seed, tag::GRAPH, attempt as u64, 0);
        let pairs = topology(spec, &mut stream);
        let edges = pairs
            .into_iter()
            .map(|(i, j)| Edge {
                i,
                j,
                weight: stream.uniform_range(spec.weight_low, spec.weight_high),
            })
            .collect();
        let g = WeightedGraph::new(spec.n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityRetries(MAX_CONNECTIVITY_RETRIES))
}
