//! Serialization: trace CSV, snapshot and manifest JSON, certificate
//! outputs, sampled-profile input files, and gnuplot script emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::CertificateReport;
use crate::flow::{renormalize_c, FlowConfig, FlowTrace};
use crate::geometry::Profile;
use crate::grid::ReducedGrid;

pub const TRACE_COLUMNS: [&str; 14] = [
    "t",
    "nu",
    "F",
    "E1",
    "c",
    "c_norm",
    "b",
    "ubar",
    "f_gap",
    "eps",
    "sup_u",
    "sup_grad_u_sq",
    "sup_lap_u",
    "dt",
];

/// Columns drawn by [`plot_script`].
pub const PLOT_SERIES: [&str; 5] = ["nu", "F", "f_gap", "b", "ubar"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| IoError::Write {
            path: parent.to_owned(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| IoError::Write {
        path: path.to_owned(),
        source,
    })
}

fn malformed(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read(path)?).map_err(|e| malformed(path, e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// 17 significant digits, enough to round-trip every `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trace CSV; `c_norm`, `b`, `ubar` and `sup_u` are in the normalized gauge.
pub fn trace_csv(trace: &FlowTrace) -> String {
    let norm = renormalize_c(trace);
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for (i, r) in trace.records.iter().enumerate() {
        let row = [
            r.t,
            r.nu,
            r.f,
            r.e1,
            r.c,
            norm.c_norm[i],
            norm.b[i],
            norm.ubar[i],
            r.f_gap,
            r.eps,
            norm.sup_u[i],
            r.sup_grad_u_sq,
            r.sup_lap_u,
            r.dt,
        ];
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub t: f64,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Writes `dir/NNNN.json` per snapshot and returns the paths.
pub fn write_snapshots(
    dir: &Path,
    grid: &ReducedGrid,
    trace: &FlowTrace,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Write {
        path: dir.to_owned(),
        source,
    })?;
    trace
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = dir.join(format!("{i:04}.json"));
            let file = SnapshotFile {
                t: s.t,
                sigma: grid.nodes().to_vec(),
                phi: s.phi.clone(),
            };
            write(&path, &to_json(&file)).map(|_| path)
        })
        .collect()
}

/// Sampled profile on `[-1, 1]`, the input format for backgrounds (values
/// are the perturbation ψ of the round potential) and potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub sigma: Vec<f64>,
    pub values: Vec<f64>,
}

/// Largest allowed gap between the sample range and the poles `±1`.
pub const DOMAIN_SLACK: f64 = 0.05;

impl SampledFile {
    pub fn validate(&self) -> Result<(), String> {
        let (s, v) = (&self.sigma, &self.values);
        if s.len() != v.len() {
            return Err(format!("{} sigma values but {} samples", s.len(), v.len()));
        }
        if s.len() < 2 {
            return Err("need at least two samples".into());
        }
        if s.iter().chain(v).any(|x| !x.is_finite()) {
            return Err("non-finite entry".into());
        }
        if s.iter().any(|x| x.abs() > 1.0) {
            return Err("sigma outside [-1, 1]".into());
        }
        if s.windows(2).any(|w| w[0] >= w[1]) {
            return Err("sigma not strictly increasing".into());
        }
        if s[0] > -1.0 + DOMAIN_SLACK || s[s.len() - 1] < 1.0 - DOMAIN_SLACK {
            return Err(format!(
                "samples must reach within {DOMAIN_SLACK} of both poles"
            ));
        }
        Ok(())
    }
}

pub fn read_sampled(path: &Path) -> Result<SampledFile, IoError> {
    let f: SampledFile = parse_json(path)?;
    f.validate().map_err(|m| malformed(path, m))?;
    Ok(f)
}

/// A family file is a JSON array of [`SampledFile`] potentials.
pub fn read_family(path: &Path) -> Result<Vec<SampledFile>, IoError> {
    let members: Vec<SampledFile> = parse_json(path)?;
    if members.is_empty() {
        return Err(malformed(path, "empty family"));
    }
    for (i, m) in members.iter().enumerate() {
        m.validate()
            .map_err(|msg| malformed(path, format!("member {i}: {msg}")))?;
    }
    Ok(members)
}

/// Initial potential recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Zero,
    Bump {
        amplitude: f64,
    },
    /// `random_valid_potential` drawn with the manifest seed.
    Random,
    Sampled {
        sigma: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trace: PathBuf,
    pub snapshots: PathBuf,
    pub manifest: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_owned(),
            trace: dir.join("trace.csv"),
            snapshots: dir.join("snapshots"),
            manifest: dir.join("manifest.json"),
        }
    }
}

/// Everything needed to reproduce a run; file inputs are stored inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub grid: usize,
    pub seed: u64,
    pub config: FlowConfig,
    pub background: Profile,
    /// The `--background` argument as given.
    pub background_source: String,
    pub initial: InitialSpec,
    /// The `--phi0` argument as given.
    pub initial_source: String,
    pub outputs: OutputPaths,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_manifest(manifest: &RunManifest) -> Result<(), IoError> {
    write(&manifest.outputs.manifest, &to_json(manifest))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, IoError> {
    parse_json(path)
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    write(path, contents)
}

pub const CERTIFICATE_COLUMNS: [&str; 14] = [
    "label",
    "valid",
    "converged",
    "termination",
    "t_end",
    "F0",
    "nu0",
    "nu_end",
    "F_end",
    "f_gap_best",
    "min_gap",
    "a1_margin",
    "a3_margin",
    "inequalities_hold",
];

pub fn certificate_json(report: &CertificateReport) -> String {
    to_json(report)
}

pub fn certificate_csv(report: &CertificateReport) -> String {
    let mut out = CERTIFICATE_COLUMNS.join(",");
    out.push('\n');
    for r in &report.rows {
        let termination = serde_json::to_value(r.termination)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.label.replace(',', ";"),
            r.valid,
            r.converged,
            termination,
            [
                r.t_end,
                r.f0,
                r.nu0,
                r.nu_end,
                r.f_end,
                r.f_gap_best,
                r.min_gap,
                r.a1_margin,
                r.a3_margin
            ]
            .iter()
            .map(|&v| num(v))
            .chain(std::iter::once(r.inequalities_hold.to_string()))
            .collect::<Vec<_>>()
            .join(",")
        );
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("trace is empty")]
    Empty,
    #[error("missing columns: {0:?}")]
    MissingColumns(Vec<String>),
    #[error("row {row}: expected {expected} numeric cells")]
    BadRow { row: usize, expected: usize },
    #[error("row {row}: non-finite value in column {column}")]
    NonFinite { row: usize, column: String },
}

/// Validates a trace CSV and returns a gnuplot script drawing ν, F, f_gap,
/// b and ū against t from `data_path`.
pub fn plot_script(csv: &str, data_path: &str) -> Result<String, PlotError> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or(PlotError::Empty)?
        .split(',')
        .map(str::trim)
        .collect();
    let wanted = std::iter::once("t").chain(PLOT_SERIES);
    let missing: Vec<String> = wanted
        .clone()
        .filter(|c| !header.contains(c))
        .map(str::to_owned)
        .collect();
    if !missing.is_empty() {
        return Err(PlotError::MissingColumns(missing));
    }
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(PlotError::BadRow {
                row: i + 1,
                expected: header.len(),
            });
        }
        for (name, cell) in header.iter().zip(&cells) {
            let v: f64 = cell.parse().map_err(|_| PlotError::BadRow {
                row: i + 1,
                expected: header.len(),
            })?;
            if !v.is_finite() {
                return Err(PlotError::NonFinite {
                    row: i + 1,
                    column: name.to_string(),
                });
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(PlotError::Empty);
    }
    let col = |name: &str| header.iter().position(|h| *h == name).expect("checked") + 1;
    let t = col("t");
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set xlabel 't'\n");
    s.push_str("set key outside right\n");
    s.push_str("set grid\n");
    let quoted = data_path.replace('\'', "''");
    let plots: Vec<String> = PLOT_SERIES
        .iter()
        .map(|name| {
            format!(
                "'{quoted}' every ::1 using {t}:{} with lines title '{name}'",
                col(name)
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    Ok(s)
}
