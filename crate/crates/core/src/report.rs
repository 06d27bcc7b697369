//! Serialized outputs: run reports (JSON), iteration traces and path scans
//! (CSV), triplet files with a JSON sidecar, and dense matrix CSV.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_bench::{Metrics, Scheme};
use crate::error::{Error, Result};
use crate::lambda_path::PathState;
use crate::obskernel::{Matrix, ObservationSet};
use crate::solver::{IterRecord, SolveReport, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub seed: u64,
    pub re: Option<f64>,
    pub nmae: Option<f64>,
    pub rank_nnzc: usize,
    pub rank_numeric: usize,
    pub iters: usize,
    pub time_s: f64,
    pub termination: Termination,
    pub lambda: f64,
}

impl InstanceResult {
    pub fn new(seed: u64, lambda: f64, report: &SolveReport, metrics: Metrics) -> Self {
        Self {
            seed,
            re: metrics.re,
            nmae: metrics.nmae,
            rank_nnzc: report.diagnostics.rank_nnzc,
            rank_numeric: report.diagnostics.rank_numeric,
            iters: report.iterations(),
            time_s: report.time_s,
            termination: report.termination,
            lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub re: Option<f64>,
    pub nmae: Option<f64>,
    pub rank: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub instances: Vec<InstanceResult>,
    pub mean: MeanResult,
}

fn mean_of(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = vals.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

impl RunReport {
    /// Instances are sorted by seed so the averages do not depend on the
    /// order in which runs finished.
    pub fn new(config: serde_json::Value, mut instances: Vec<InstanceResult>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::EmptyInput);
        }
        instances.sort_by_key(|r| r.seed);
        let mean = MeanResult {
            re: mean_of(instances.iter().filter_map(|r| r.re)),
            nmae: mean_of(instances.iter().filter_map(|r| r.nmae)),
            rank: mean_of(instances.iter().map(|r| r.rank_nnzc as f64)).unwrap_or(0.0),
            time_s: mean_of(instances.iter().map(|r| r.time_s)).unwrap_or(0.0),
        };
        Ok(Self { config, instances, mean })
    }

    pub fn to_json(&self) -> Result<String> {
        for r in &self.instances {
            let opt = [r.re, r.nmae].into_iter().flatten();
            ensure_finite(&opt.chain([r.time_s, r.lambda]).collect::<Vec<_>>(), &format!("instance seed {}", r.seed))?;
        }
        let m = &self.mean;
        ensure_finite(&[m.re, m.nmae].into_iter().flatten().chain([m.rank, m.time_s]).collect::<Vec<_>>(), "mean")?;
        let v = serde_json::to_value(self)?;
        check_finite(&v, "report")?;
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Rejects non-finite numbers in an already built JSON value. Typed data
/// must be checked before conversion, which maps NaN to `null`.
pub fn check_finite(v: &serde_json::Value, at: &str) -> Result<()> {
    match v {
        serde_json::Value::Number(n) if n.as_f64().is_some_and(|x| !x.is_finite()) => Err(Error::NonFinite(at.to_string())),
        serde_json::Value::Array(a) => a.iter().enumerate().try_for_each(|(i, x)| check_finite(x, &format!("{at}[{i}]"))),
        serde_json::Value::Object(o) => o.iter().try_for_each(|(k, x)| check_finite(x, &format!("{at}.{k}"))),
        _ => Ok(()),
    }
}

fn ensure_finite(vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub const TRACE_HEADER: [&str; 22] = [
    "k",
    "f0",
    "f_relaxed",
    "loss",
    "nnzc_x",
    "nnzc_y",
    "active",
    "iota_x",
    "iota_y",
    "backtracks_x",
    "backtracks_y",
    "cap_x",
    "cap_y",
    "c_x",
    "c_y",
    "step_sq",
    "grad_x",
    "grad_y",
    "consistent",
    "bounded_nu",
    "time_s",
    "termination",
];

pub fn write_trace_csv<W: Write>(w: W, report: &SolveReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    let last = report.trace.len().saturating_sub(1);
    for (idx, t) in report.trace.iter().enumerate() {
        let IterRecord {
            k,
            f0,
            f_relaxed,
            loss,
            nnzc_x,
            nnzc_y,
            active,
            iota_x,
            iota_y,
            backtracks_x,
            backtracks_y,
            cap_x,
            cap_y,
            c_x,
            c_y,
            step_sq,
            grad_x,
            grad_y,
            consistent,
            bounded_nu,
            time_s,
        } = t;
        ensure_finite(&[*f0, *f_relaxed, *loss, *iota_x, *iota_y, *step_sq, *grad_x, *grad_y], "trace")?;
        let term = if idx == last {
            match report.termination {
                Termination::Tol => "tol",
                Termination::MaxIter => "max_iter",
            }
        } else {
            ""
        };
        out.write_record([
            k.to_string(),
            f0.to_string(),
            f_relaxed.to_string(),
            loss.to_string(),
            nnzc_x.to_string(),
            nnzc_y.to_string(),
            active.to_string(),
            iota_x.to_string(),
            iota_y.to_string(),
            backtracks_x.to_string(),
            backtracks_y.to_string(),
            cap_x.to_string(),
            cap_y.to_string(),
            c_x.to_string(),
            c_y.to_string(),
            step_sq.to_string(),
            grad_x.to_string(),
            grad_y.to_string(),
            consistent.to_string(),
            bounded_nu.to_string(),
            time_s.to_string(),
            term.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const PATH_HEADER: [&str; 7] = ["i", "lambda", "solved", "loss", "nz", "zeta", "criterion_fired"];

pub fn write_path_csv<W: Write>(w: W, state: &PathState) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PATH_HEADER)?;
    for r in &state.records {
        ensure_finite(&[r.lambda, r.loss, r.nz, r.zeta], "path")?;
        out.write_record([
            r.i.to_string(),
            r.lambda.to_string(),
            r.solved.to_string(),
            r.loss.to_string(),
            r.nz.to_string(),
            r.zeta.to_string(),
            r.criterion.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Metadata written next to a triplet file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSidecar {
    pub m: usize,
    pub n: usize,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub seed: u64,
    pub scheme: Scheme,
    pub sr: f64,
    pub sigma: f64,
    pub rank: Option<usize>,
}

pub fn write_triplets<W: Write>(w: W, obs: &ObservationSet) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "j", "v"])?;
    for (i, j, v) in obs.iter() {
        out.write_record([i.to_string(), j.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_triplets<R: Read>(r: R, m: usize, n: usize) -> Result<ObservationSet> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut trip = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_err = |msg: String| Error::Parse { line: line + 2, msg };
        if rec.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", rec.len())));
        }
        let i: usize = rec[0].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let j: usize = rec[1].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let v: f64 = rec[2].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        trip.push((i, j, v));
    }
    ObservationSet::from_triplets(m, n, &trip)
}

/// Triplet CSV plus `<path>.json` sidecar.
pub fn save_instance(path: &Path, obs: &ObservationSet, sidecar: &TripletSidecar) -> Result<()> {
    write_triplets(std::fs::File::create(path)?, obs)?;
    let v = serde_json::to_value(sidecar)?;
    check_finite(&v, "sidecar")?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<(ObservationSet, TripletSidecar)> {
    let meta: TripletSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let obs = read_triplets(std::fs::File::open(path)?, meta.m, meta.n)?;
    Ok((obs, meta))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Headerless comma-separated rows of numbers.
pub fn read_dense_csv<R: Read>(r: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line: line + 1, msg: format!("{f:?}: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse { line: line + 1, msg: format!("expected {} fields, got {}", first.len(), row.len()) });
            }
        }
        ensure_finite(&row, "matrix entry")?;
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::EmptyInput);
    }
    let (m, n) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(m, n, |i, j| rows[i][j]))
}

pub fn write_dense_csv<W: Write>(w: W, m: &Matrix) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
