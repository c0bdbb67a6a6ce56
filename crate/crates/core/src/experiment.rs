//! Monte-Carlo experiment driver: graphs, signals, estimation with every
//! requested method, regularization selection, result rows and summaries.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cgl::SolverOptions;
use crate::error::{Error, Result};
use crate::evaluation::{self, Candidate, MetricOptions, DEFAULT_EDGE_EPS};
use crate::gbf::{self, FilterSpec};
use crate::graph::{build_cgl, generate_graph, CglMatrix, GraphModelSpec};
use crate::gsi::{self, GsiOptions, DEFAULT_HOP_RANGE};
use crate::io;
use crate::par::Execution;
use crate::rng::derive_seed;
use crate::signal::{sample_covariance, sample_signals};

pub const DEFAULT_K_OVER_N: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gsi,
    CglNoprefilter,
    Ipf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gsi, Method::CglNoprefilter, Method::Ipf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gsi => "gsi",
            Method::CglNoprefilter => "cgl_noprefilter",
            Method::Ipf => "ipf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method '{s}' (expected gsi, cgl_noprefilter or ipf)")))
    }
}

/// Regularization: the data-driven grid, or one fixed weight. Written in
/// JSON as `"grid"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum AlphaMode {
    #[default]
    Grid,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<AlphaRepr> for AlphaMode {
    type Error = Error;
    fn try_from(r: AlphaRepr) -> Result<Self> {
        match r {
            AlphaRepr::Name(s) => s.parse(),
            AlphaRepr::Value(v) => AlphaMode::fixed(v),
        }
    }
}

impl From<AlphaMode> for AlphaRepr {
    fn from(m: AlphaMode) -> Self {
        match m {
            AlphaMode::Grid => AlphaRepr::Name("grid".into()),
            AlphaMode::Fixed(v) => AlphaRepr::Value(v),
        }
    }
}

impl AlphaMode {
    pub fn fixed(alpha: f64) -> Result<Self> {
        if alpha >= 0.0 && alpha.is_finite() {
            Ok(AlphaMode::Fixed(alpha))
        } else {
            Err(Error::InvalidSpec(format!("alpha must be finite and >= 0, got {alpha}")))
        }
    }
}

impl FromStr for AlphaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "grid" {
            return Ok(AlphaMode::Grid);
        }
        let v: f64 = s.parse().map_err(|_| Error::Parse(format!("alpha must be 'grid' or a number, got '{s}'")))?;
        AlphaMode::fixed(v)
    }
}

mod defaults {
    pub fn k_over_n() -> Vec<f64> {
        super::DEFAULT_K_OVER_N.to_vec()
    }
    pub fn trials() -> usize {
        10
    }
    pub fn methods() -> Vec<super::Method> {
        super::Method::ALL.to_vec()
    }
    pub fn edge_eps() -> f64 {
        super::DEFAULT_EDGE_EPS
    }
    pub fn yes() -> bool {
        true
    }
    pub fn hop_range() -> (u32, u32) {
        super::DEFAULT_HOP_RANGE
    }
}

/// One sweep: a graph model, a filter, sample sizes, and methods. The root
/// `seed` replaces the seed inside `graph`; trial `t` uses the substream
/// derived from `(seed, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphModelSpec,
    pub filter: FilterSpec,
    #[serde(default = "defaults::k_over_n")]
    pub k_over_n: Vec<f64>,
    /// Use `Σ = h(L*)` itself instead of samples; rows then carry `k = 0`.
    #[serde(default)]
    pub exact_covariance: bool,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
    #[serde(default = "defaults::methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::edge_eps")]
    pub edge_eps: f64,
    /// Trace-normalize estimates before scoring.
    #[serde(default = "defaults::yes")]
    pub normalize: bool,
    /// Fill `wall_ms`; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default = "defaults::hop_range")]
    pub hop_range: (u32, u32),
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: GraphModelSpec, filter: FilterSpec) -> Self {
        Self {
            graph,
            filter,
            k_over_n: defaults::k_over_n(),
            exact_covariance: false,
            trials: defaults::trials(),
            alpha_mode: AlphaMode::Grid,
            methods: defaults::methods(),
            seed: 0,
            edge_eps: DEFAULT_EDGE_EPS,
            normalize: true,
            timing: false,
            hop_range: DEFAULT_HOP_RANGE,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidSpec("trials must be >= 1".into()));
        }
        if !self.exact_covariance {
            if self.k_over_n.is_empty() {
                return Err(Error::InvalidSpec("k_over_n is empty".into()));
            }
            if let Some(r) = self.k_over_n.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
                return Err(Error::InvalidSpec(format!("k_over_n ratios must be positive, got {r}")));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidSpec("no methods selected".into()));
        }
        if !(self.edge_eps > 0.0) {
            return Err(Error::InvalidSpec("edge_eps must be positive".into()));
        }
        let (lo, hi) = self.hop_range;
        if lo < 1 || hi < lo {
            return Err(Error::InvalidSpec(format!("invalid hop range [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Sample counts, `max(1, round(ratio·n))`, or `[0]` for exact covariances.
    pub fn sample_counts(&self) -> Vec<usize> {
        if self.exact_covariance {
            return vec![0];
        }
        self.k_over_n.iter().map(|r| ((r * self.graph.n as f64).round() as usize).max(1)).collect()
    }

    fn metric_options(&self) -> MetricOptions {
        MetricOptions { edge_eps: self.edge_eps, normalize: self.normalize }
    }
}

/// Parses either one config object or an array of them.
pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let configs = match value {
        serde_json::Value::Array(items) => {
            items.into_iter().map(serde_json::from_value).collect::<serde_json::Result<Vec<_>>>()?
        }
        other => vec![serde_json::from_value(other)?],
    };
    if configs.is_empty() {
        return Err(Error::InvalidSpec("config array is empty".into()));
    }
    Ok(configs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub graph_kind: String,
    pub filter_kind: String,
    pub beta_true: f64,
    pub beta_hat: Option<f64>,
    pub n: usize,
    /// Sample count; 0 marks an exact covariance.
    pub k: usize,
    pub trial_seed: u64,
    pub alpha: Option<f64>,
    pub re: Option<f64>,
    pub fs: Option<f64>,
    pub wall_ms: Option<f64>,
    /// Failure message for rows whose estimation failed; not written to CSV.
    pub error: Option<String>,
}

/// Ground truth of one trial.
pub struct Trial {
    pub seed: u64,
    pub l_star: CglMatrix,
    pub sigma: DMatrix<f64>,
}

pub fn make_trial(cfg: &ExperimentConfig, index: usize) -> Result<Trial> {
    let seed = derive_seed(cfg.seed, index as u64);
    let graph = generate_graph(&cfg.graph.with_seed(seed))?;
    let l_star = build_cgl(&graph)?;
    let sigma = gbf::apply_filter(&cfg.filter, &l_star)?;
    Ok(Trial { seed, l_star, sigma })
}

/// Covariance seen by the estimators. Samples for every `k` come from the
/// same stream, so smaller batches are prefixes of larger ones.
pub fn trial_covariance(trial: &Trial, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Ok(trial.sigma.clone());
    }
    Ok(sample_covariance(&sample_signals(&trial.sigma, k, trial.seed)?))
}

struct MethodOutcome {
    alpha: Option<f64>,
    beta_hat: Option<f64>,
    re: f64,
    fs: f64,
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    trial: &Trial,
    s: &DMatrix<f64>,
    k: usize,
    exec: Execution,
) -> Result<MethodOutcome> {
    let metrics = cfg.metric_options();
    if method == Method::Ipf {
        let estimate = gsi::baseline_ipf(s, &cfg.filter)?;
        let m = evaluation::evaluate(&estimate, &trial.l_star, &metrics, 0.0)?;
        return Ok(MethodOutcome { alpha: None, beta_hat: Some(cfg.filter.beta()), re: m.re, fs: m.fs });
    }
    let alphas = match cfg.alpha_mode {
        AlphaMode::Fixed(a) => vec![a],
        AlphaMode::Grid if k == 0 => vec![0.0],
        AlphaMode::Grid => evaluation::alpha_grid(s, k)?,
    };
    let solver = SolverOptions::default();
    let outcome = evaluation::best_alpha_sweep_with(exec, &alphas, &trial.l_star, &metrics, |alpha| match method {
        Method::Gsi => {
            let mut opts = GsiOptions::new(cfg.filter.kind(), alpha);
            opts.beta_search_range = cfg.hop_range;
            let r = gsi::identify(s, &opts)?;
            Ok(Candidate { estimate: r.l_hat.into_matrix(), beta_hat: r.beta_hat })
        }
        _ => {
            let (l, _) = gsi::baseline_cgl(s, alpha, &solver)?;
            Ok(Candidate { estimate: l.into_matrix(), beta_hat: f64::NAN })
        }
    })?;
    Ok(MethodOutcome {
        alpha: Some(outcome.metrics.alpha_used),
        beta_hat: (method == Method::Gsi).then_some(outcome.beta_hat),
        re: outcome.metrics.re,
        fs: outcome.metrics.fs,
    })
}

fn run_cell(cfg: &ExperimentConfig, trial_index: usize, k: usize, exec: Execution) -> Vec<ResultRow> {
    let row = |method: Method, seed: u64| ResultRow {
        method,
        graph_kind: cfg.graph.kind.name().to_string(),
        filter_kind: cfg.filter.kind().name().to_string(),
        beta_true: cfg.filter.beta(),
        beta_hat: None,
        n: cfg.graph.n,
        k,
        trial_seed: seed,
        alpha: None,
        re: None,
        fs: None,
        wall_ms: None,
        error: None,
    };
    let prepared = make_trial(cfg, trial_index).and_then(|t| {
        let s = trial_covariance(&t, k)?;
        Ok((t, s))
    });
    let (trial, s) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let seed = derive_seed(cfg.seed, trial_index as u64);
            warn!("trial {trial_index} (k = {k}) could not be prepared: {e}");
            return cfg
                .methods
                .iter()
                .map(|&m| ResultRow { error: Some(e.to_string()), ..row(m, seed) })
                .collect();
        }
    };
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = run_method(cfg, method, &trial, &s, k, exec);
            let wall_ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            let base = row(method, trial.seed);
            match result {
                Ok(o) => ResultRow {
                    alpha: o.alpha,
                    beta_hat: o.beta_hat,
                    re: Some(o.re),
                    fs: Some(o.fs),
                    wall_ms,
                    ..base
                },
                Err(e) => {
                    warn!("{method} failed on trial seed {} (k = {k}): {e}", trial.seed);
                    ResultRow { wall_ms, error: Some(e.to_string()), ..base }
                }
            }
        })
        .collect()
}

/// Runs every (trial, sample count, method) cell. Rows come back in cell
/// order (trial, then sample count, then method) whatever the execution
/// mode.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_sweep_with(cfg, Execution::default())
}

pub fn run_sweep_with(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let ks = cfg.sample_counts();
    let cells: Vec<(usize, usize)> = (0..cfg.trials).flat_map(|t| ks.iter().map(move |&k| (t, k))).collect();
    // the outer level already saturates the pool
    let inner = Execution::Sequential;
    let rows = exec.map(&cells, |&(t, k)| run_cell(cfg, t, k, inner));
    Ok(rows.into_iter().flatten().collect())
}

pub fn run_sweeps(configs: &[ExperimentConfig], exec: Execution) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for cfg in configs {
        rows.extend(run_sweep_with(cfg, exec)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub graph_kind: String,
    pub filter_kind: String,
    pub beta_true: f64,
    pub n: usize,
    pub k: usize,
    pub count: usize,
    pub failures: usize,
    pub mean_re: f64,
    pub stderr_re: f64,
    pub mean_fs: f64,
    pub stderr_fs: f64,
}

impl SummaryRow {
    pub fn k_over_n(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Mean and standard error of RE and FS per (method, graph kind, filter,
/// β, n, k), in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (Method, String, String, u64, usize, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.method, r.graph_kind.clone(), r.filter_kind.clone(), r.beta_true.to_bits(), r.n, r.k);
        groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
    }
    for r in rows {
        let key = (r.method, r.graph_kind.clone(), r.filter_kind.clone(), r.beta_true.to_bits(), r.n, r.k);
        groups.get_mut(&key).expect("key registered above").push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let re: Vec<f64> = members.iter().filter_map(|r| r.re).collect();
            let fs: Vec<f64> = members.iter().filter_map(|r| r.fs).collect();
            let (mean_re, stderr_re) = mean_stderr(&re);
            let (mean_fs, stderr_fs) = mean_stderr(&fs);
            let (method, graph_kind, filter_kind, beta_bits, n, k) = key;
            SummaryRow {
                method,
                graph_kind,
                filter_kind,
                beta_true: f64::from_bits(beta_bits),
                n,
                k,
                count: re.len(),
                failures: members.len() - re.len(),
                mean_re,
                stderr_re,
                mean_fs,
                stderr_fs,
            }
        })
        .collect()
}

/// Plain-text table of a summary, one line per group.
pub fn render_summary(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<12} {:<20} {:>7} {:>7} {:>6} {:>11} {:>10} {:>8} {:>9}",
        "method", "graph", "filter", "beta", "k/n", "count", "mean_re", "se_re", "mean_fs", "se_fs"
    );
    for s in summary {
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:<20} {:>7} {:>7.2} {:>6} {:>11.4e} {:>10.2e} {:>8.4} {:>9.2e}{}",
            s.method.name(),
            s.graph_kind,
            s.filter_kind,
            s.beta_true,
            s.k_over_n(),
            s.count,
            s.mean_re,
            s.stderr_re,
            s.mean_fs,
            s.stderr_fs,
            if s.failures > 0 { format!("  ({} failed)", s.failures) } else { String::new() }
        );
    }
    out
}

pub const SERIES_HEADER: &str = "method,graph_kind,filter_kind,beta_true,k_over_n,count,mean_re,stderr_re,mean_fs,stderr_fs";

/// `(k/n, mean, stderr)` series per method as CSV text.
pub fn render_series(summary: &[SummaryRow]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.method.name(),
            s.graph_kind,
            s.filter_kind,
            s.beta_true,
            s.k_over_n(),
            s.count,
            s.mean_re,
            s.stderr_re,
            s.mean_fs,
            s.stderr_fs
        );
    }
    out
}

/// Writes `results.csv`, `summary.txt` and `series.csv` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_results_file(&dir.join("results.csv"), rows)?;
    let summary = summarize(rows);
    std::fs::write(dir.join("summary.txt"), render_summary(&summary))?;
    std::fs::write(dir.join("series.csv"), render_series(&summary))?;
    Ok(())
}
