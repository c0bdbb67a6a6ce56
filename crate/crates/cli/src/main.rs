//! `gsi`: generate graphs, sample signals, identify a graph and filter,
//! run Monte-Carlo sweeps and summarize their results.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use graphsys::cgl::SolverOptions;
use graphsys::evaluation::{self, Candidate, MetricOptions, DEFAULT_EDGE_EPS};
use graphsys::experiment::{self, AlphaMode, ExperimentConfig, Method};
use graphsys::gbf::{self, FilterKind, FilterSpec};
use graphsys::graph::{build_cgl, generate_graph, CglMatrix};
use graphsys::gsi::{self, GsiOptions};
use graphsys::io;
use graphsys::par::Execution;
use graphsys::rng::derive_seed;
use graphsys::signal::{sample_covariance, sample_signals, SignalBatch};
use log::info;
use nalgebra::DMatrix;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gsi", version, about = "Graph system identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ground-truth graph of every trial as JSON.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the root seed of every config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw `k` signals from `N(0, h_β(L))` and write them as CSV.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        filter: FilterKind,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving `signals.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a Laplacian (and filter parameter) from signals or a covariance.
    Identify {
        /// Signal CSV, one sample per row.
        #[arg(long, conflicts_with = "covariance", required_unless_present = "covariance")]
        input: Option<PathBuf>,
        /// Dense covariance CSV, used as is.
        #[arg(long)]
        covariance: Option<PathBuf>,
        #[arg(long, default_value = "gsi")]
        method: Method,
        #[arg(long)]
        filter: Option<FilterKind>,
        /// Known parameter for `ipf`; starting parameter for `gsi`.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value = "0")]
        alpha: AlphaMode,
        /// Ground-truth graph JSON; adds metrics and enables `--alpha grid`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory receiving `result.json`; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (trial, sample size, method) cell of one or more configs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the root seed of every config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Summarize a results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Directory receiving `summary.txt` and `series.csv`; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage_error(kind: ErrorKind, message: &str) -> ! {
    Cli::command().error(kind, message).exit()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, seed, out } => generate(&config, seed, &out),
        Command::Sample { graph, filter, beta, k, seed, out } => sample(&graph, filter, beta, k, seed, &out),
        Command::Identify { input, covariance, method, filter, beta, alpha, truth, out } => {
            let filter = match (method, filter) {
                (Method::Gsi | Method::Ipf, None) => {
                    usage_error(ErrorKind::MissingRequiredArgument, &format!("--method {method} requires --filter <kind>"))
                }
                (_, f) => f,
            };
            if method == Method::Ipf && beta.is_none() {
                usage_error(ErrorKind::MissingRequiredArgument, "--method ipf requires --beta <real>");
            }
            if alpha == AlphaMode::Grid && truth.is_none() {
                usage_error(ErrorKind::MissingRequiredArgument, "--alpha grid requires --truth <graph.json>");
            }
            let request = IdentifyRequest { method, filter, beta, alpha, truth };
            let result = identify(input.as_deref(), covariance.as_deref(), &request)?;
            let text = serde_json::to_string_pretty(&result)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("result.json"), text + "\n")?;
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Sweep { config, seed, out, sequential } => sweep(&config, seed, out, sequential),
        Command::Report { input, out } => report(&input, out.as_deref()),
    }
}

fn load_configs(path: &Path, seed: Option<u64>) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut configs = experiment::parse_configs(&text).with_context(|| format!("parsing {}", path.display()))?;
    for cfg in &mut configs {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
    }
    Ok(configs)
}

fn generate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let configs = load_configs(config, seed)?;
    let multiple = configs.len() > 1;
    for (c, cfg) in configs.iter().enumerate() {
        let dir = if multiple { out.join(format!("config_{c:02}")) } else { out.to_path_buf() };
        std::fs::create_dir_all(&dir)?;
        for t in 0..cfg.trials {
            let graph = generate_graph(&cfg.graph.with_seed(derive_seed(cfg.seed, t as u64)))?;
            let path = dir.join(format!("graph_{t:03}.json"));
            io::write_graph(&path, &graph)?;
            info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn sample(graph: &Path, kind: FilterKind, beta: f64, k: usize, seed: u64, out: &Path) -> Result<()> {
    let l = build_cgl(&io::read_graph(graph).with_context(|| format!("reading {}", graph.display()))?)?;
    let sigma = gbf::apply_filter(&FilterSpec::new(kind, beta)?, &l)?;
    let batch = sample_signals(&sigma, k, seed)?;
    std::fs::create_dir_all(out)?;
    io::write_matrix_file(&out.join("signals.csv"), batch.data())?;
    Ok(())
}

struct IdentifyRequest {
    method: Method,
    filter: Option<FilterKind>,
    beta: Option<f64>,
    alpha: AlphaMode,
    truth: Option<PathBuf>,
}

struct Estimate {
    l_hat: DMatrix<f64>,
    beta_hat: Option<f64>,
    converged: bool,
    iterations: usize,
    scale_note: bool,
}

fn estimate(s: &DMatrix<f64>, req: &IdentifyRequest, alpha: f64) -> graphsys::Result<Estimate> {
    Ok(match req.method {
        Method::Gsi => {
            let kind = req.filter.expect("checked during argument validation");
            let mut opts = GsiOptions::new(kind, alpha);
            if let Some(b) = req.beta {
                opts = opts.with_beta(b);
            }
            let r = gsi::identify(s, &opts)?;
            Estimate {
                iterations: r.iterations(),
                beta_hat: Some(r.beta_hat),
                converged: r.converged,
                scale_note: r.scale_note,
                l_hat: r.l_hat.into_matrix(),
            }
        }
        Method::CglNoprefilter => {
            let (l, report) = gsi::baseline_cgl(s, alpha, &SolverOptions::default())?;
            Estimate {
                l_hat: l.into_matrix(),
                beta_hat: None,
                converged: report.converged,
                iterations: report.iterations,
                scale_note: false,
            }
        }
        Method::Ipf => {
            let kind = req.filter.expect("checked during argument validation");
            let beta = req.beta.expect("checked during argument validation");
            let spec = FilterSpec::new(kind, beta)?;
            Estimate {
                l_hat: gsi::baseline_ipf(s, &spec)?,
                beta_hat: Some(beta),
                converged: true,
                iterations: 0,
                scale_note: false,
            }
        }
    })
}

fn identify(input: Option<&Path>, covariance: Option<&Path>, req: &IdentifyRequest) -> Result<Value> {
    let (s, k) = match (input, covariance) {
        (Some(path), _) => {
            let batch = SignalBatch::from_rows(io::read_matrix_file(path).with_context(|| format!("reading {}", path.display()))?)?;
            (sample_covariance(&batch), batch.k())
        }
        (None, Some(path)) => (io::read_matrix_file(path).with_context(|| format!("reading {}", path.display()))?, 0),
        (None, None) => bail!("no input given"),
    };
    let truth = match &req.truth {
        Some(path) => {
            let l = build_cgl(&io::read_graph(path).with_context(|| format!("reading {}", path.display()))?)?;
            if l.n() != s.nrows() {
                bail!("truth graph has {} vertices but the input has {}", l.n(), s.nrows());
            }
            Some(l)
        }
        None => None,
    };
    let metrics = MetricOptions { edge_eps: DEFAULT_EDGE_EPS, normalize: true };
    let (est, report) = match (req.alpha, &truth) {
        (AlphaMode::Fixed(alpha), _) => {
            let est = estimate(&s, req, alpha)?;
            let report = truth.as_ref().map(|l| evaluation::evaluate(&est.l_hat, l, &metrics, alpha)).transpose()?;
            (est, report)
        }
        (AlphaMode::Grid, Some(l_star)) => grid_estimate(&s, k, req, l_star, &metrics)?,
        (AlphaMode::Grid, None) => bail!("--alpha grid requires --truth"),
    };
    let rows: Vec<Vec<f64>> = (0..est.l_hat.nrows()).map(|i| est.l_hat.row(i).iter().copied().collect()).collect();
    let mut out = json!({
        "L_hat": rows,
        "beta_hat": est.beta_hat,
        "converged": est.converged,
        "iterations": est.iterations,
        "scale_note": est.scale_note,
    });
    if let Some(m) = report {
        out["metrics"] = json!({
            "re": m.re,
            "fs": m.fs,
            "tp": m.tp,
            "fp": m.fp,
            "fn": m.r#fn,
            "alpha": m.alpha_used,
        });
    }
    Ok(out)
}

/// Picks α from the data-driven grid by RE against the ground truth; an
/// exact covariance (`k = 0`) uses `α = 0` only.
fn grid_estimate(
    s: &DMatrix<f64>,
    k: usize,
    req: &IdentifyRequest,
    l_star: &CglMatrix,
    metrics: &MetricOptions,
) -> Result<(Estimate, Option<evaluation::MetricReport>)> {
    if req.method == Method::Ipf {
        let est = estimate(s, req, 0.0)?;
        let report = evaluation::evaluate(&est.l_hat, l_star, metrics, 0.0)?;
        return Ok((est, Some(report)));
    }
    let alphas = if k == 0 { vec![0.0] } else { evaluation::alpha_grid(s, k)? };
    let outcome = evaluation::best_alpha_sweep(&alphas, l_star, metrics, |alpha| {
        let est = estimate(s, req, alpha)?;
        Ok(Candidate { estimate: est.l_hat, beta_hat: est.beta_hat.unwrap_or(f64::NAN) })
    })?;
    // rerun at the chosen α to recover the solver diagnostics
    let est = estimate(s, req, outcome.metrics.alpha_used)?;
    Ok((est, Some(outcome.metrics)))
}

fn sweep(config: &Path, seed: Option<u64>, out: Option<PathBuf>, sequential: bool) -> Result<()> {
    let configs = load_configs(config, seed)?;
    let dir = match out.or_else(|| configs[0].output_dir.clone()) {
        Some(d) => d,
        None => usage_error(ErrorKind::MissingRequiredArgument, "sweep needs --out <dir> or output_dir in the config"),
    };
    let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
    let rows = experiment::run_sweeps(&configs, exec)?;
    experiment::write_outputs(&dir, &rows)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        log::warn!("{failures} of {} rows failed", rows.len());
    }
    print!("{}", experiment::render_summary(&experiment::summarize(&rows)));
    Ok(())
}

fn report(input: &Path, out: Option<&Path>) -> Result<()> {
    let rows = io::read_results_file(input).with_context(|| format!("reading {}", input.display()))?;
    let summary = experiment::summarize(&rows);
    let table = experiment::render_summary(&summary);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("summary.txt"), &table)?;
            std::fs::write(dir.join("series.csv"), experiment::render_series(&summary))?;
        }
        None => print!("{table}"),
    }
    Ok(())
}
