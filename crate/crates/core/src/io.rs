//! File formats: graph JSON, dense matrix CSV (covariances and signal
//! batches) and the results table.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::experiment::ResultRow;
use crate::graph::WeightedGraph;

pub const RESULTS_HEADER: [&str; 12] = [
    "method",
    "graph_kind",
    "filter_kind",
    "beta_true",
    "beta_hat",
    "n",
    "k",
    "trial_seed",
    "alpha",
    "re",
    "fs",
    "wall_ms",
];

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_graph(path: &Path, graph: &WeightedGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, graph)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Dense matrix from a header-less CSV, one row per line.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| field.parse::<f64>().map_err(|e| Error::Parse(format!("'{field}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), got: row.len() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    let m = DMatrix::from_row_iterator(r, c, rows.into_iter().flatten());
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(m)
}

pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(File::open(path)?)
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(BufWriter::new(File::create(path)?), m)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.method.name().to_string(),
            r.graph_kind.clone(),
            r.filter_kind.clone(),
            r.beta_true.to_string(),
            opt(r.beta_hat),
            r.n.to_string(),
            r.k.to_string(),
            r.trial_seed.to_string(),
            opt(r.alpha),
            opt(r.re),
            opt(r.fs),
            opt(r.wall_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Parse(format!("unexpected results header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))) };
    let opt_num = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let int = |s: &str| -> Result<u64> { s.parse::<u64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))) };
    let mut rows = Vec::new();
    for record in rdr.records() {
        let f = record?;
        rows.push(ResultRow {
            method: f[0].parse()?,
            graph_kind: f[1].to_string(),
            filter_kind: f[2].to_string(),
            beta_true: num(&f[3])?,
            beta_hat: opt_num(&f[4])?,
            n: int(&f[5])? as usize,
            k: int(&f[6])? as usize,
            trial_seed: int(&f[7])?,
            alpha: opt_num(&f[8])?,
            re: opt_num(&f[9])?,
            fs: opt_num(&f[10])?,
            wall_ms: opt_num(&f[11])?,
            error: None,
        });
    }
    Ok(rows)
}

pub fn read_results_file(path: &Path) -> Result<Vec<ResultRow>> {
    read_results(File::open(path)?)
}

pub fn write_results_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_results(BufWriter::new(File::create(path)?), rows)
}
