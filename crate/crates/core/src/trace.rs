//! Per-iteration run records and their CSV/JSON serialization.
//!
//! The CSV schema is a stable contract, one row per (iteration, point):
//!
//! ```text
//! iter,point_index,x0,...,x{n-1},value,grad_norm,step_size,status,tight,min_multiplier
//! ```
//!
//! `min_multiplier` is empty when a point's subproblem had no constraints
//! or no solve took place (initial rows, warm-start rows). Floats use
//! Rust's shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey::Survey;

/// Status label carried by each trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    /// Row belongs to the initial survey.
    Init,
    /// Row produced by the warm-start phase.
    Warmstart,
    Solved,
    /// Subproblem infeasible; the payload is the survey index of the
    /// offending constraint.
    Infeasible(usize),
    Failed,
}

impl fmt::Display for TraceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStatus::Init => write!(f, "init"),
            TraceStatus::Warmstart => write!(f, "warmstart"),
            TraceStatus::Solved => write!(f, "solved"),
            TraceStatus::Infeasible(j) => write!(f, "infeasible({j})"),
            TraceStatus::Failed => write!(f, "failed"),
        }
    }
}

impl FromStr for TraceStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(TraceStatus::Init),
            "warmstart" => Ok(TraceStatus::Warmstart),
            "solved" => Ok(TraceStatus::Solved),
            "failed" => Ok(TraceStatus::Failed),
            other => {
                if let Some(j) = other
                    .strip_prefix("infeasible(")
                    .and_then(|r| r.strip_suffix(')'))
                {
                    let j = j
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad status: {other}")))?;
                    Ok(TraceStatus::Infeasible(j))
                } else {
                    Err(Error::InvalidInput(format!("bad status: {other}")))
                }
            }
        }
    }
}

/// One iteration's worth of state: the post-iteration survey plus per-point
/// solve diagnostics. Entry 0 holds the initial survey with `Init` statuses.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub survey: Survey,
    pub step_sizes: Vec<f64>,
    pub statuses: Vec<TraceStatus>,
    /// Per-point multipliers in constraint order; empty when no solve ran.
    pub multipliers: Vec<DVector<f64>>,
    pub all_tight: Vec<bool>,
    pub accepted: Vec<bool>,
}

impl TraceEntry {
    pub fn initial(survey: Survey) -> Self {
        let k = survey.num_points();
        Self {
            survey,
            step_sizes: vec![0.0; k],
            statuses: vec![TraceStatus::Init; k],
            multipliers: vec![DVector::zeros(0); k],
            all_tight: vec![false; k],
            accepted: vec![false; k],
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Converged { displacement: f64 },
    MaxIterations,
    InfeasibleHalt { iteration: usize },
}

/// Full record of a run: surveys and solve diagnostics per iteration.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub entries: Vec<TraceEntry>,
    pub stop_reason: StopReason,
}

impl RunTrace {
    pub fn dim(&self) -> usize {
        self.entries[0].survey.dim()
    }

    pub fn num_points(&self) -> usize {
        self.entries[0].survey.num_points()
    }

    /// Number of completed iterations (the initial survey is not one).
    pub fn num_iterations(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn survey_at(&self, t: usize) -> &Survey {
        &self.entries[t].survey
    }

    pub fn final_survey(&self) -> &Survey {
        &self.entries[self.entries.len() - 1].survey
    }

    /// Smallest objective value in the final survey.
    pub fn final_min_value(&self) -> f64 {
        self.final_survey().values().min()
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for (t, entry) in self.entries.iter().enumerate() {
            for i in 0..entry.survey.num_points() {
                let mult = &entry.multipliers[i];
                rows.push(TraceRow {
                    iter: t,
                    point_index: i,
                    x: entry.survey.point(i).iter().copied().collect(),
                    value: entry.survey.value(i),
                    grad_norm: entry.survey.gradient(i).norm(),
                    step_size: entry.step_sizes[i],
                    status: entry.statuses[i],
                    tight: entry.all_tight[i],
                    min_multiplier: if mult.is_empty() { None } else { Some(mult.min()) },
                });
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_csv_rows(writer, self.dim(), &self.rows())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }
}

/// One CSV row. This is the unit shared by run traces and warm-start
/// traces.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub point_index: usize,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub status: TraceStatus,
    pub tight: bool,
    pub min_multiplier: Option<f64>,
}

pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string(), "point_index".to_string()];
    h.extend((0..n).map(|j| format!("x{j}")));
    h.extend(
        ["value", "grad_norm", "step_size", "status", "tight", "min_multiplier"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Write rows under the documented header. All rows must share dimension `n`.
pub fn write_csv_rows<W: Write>(writer: W, n: usize, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(n))?;
    for row in rows {
        if row.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: row.x.len() });
        }
        let mut record = vec![row.iter.to_string(), row.point_index.to_string()];
        record.extend(row.x.iter().map(|v| v.to_string()));
        record.push(row.value.to_string());
        record.push(row.grad_norm.to_string());
        record.push(row.step_size.to_string());
        record.push(row.status.to_string());
        record.push(row.tight.to_string());
        record.push(match row.min_multiplier {
            Some(v) => v.to_string(),
            None => String::new(),
        });
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// A trace read back from CSV. Gradients are only present as norms, so this
/// is a reduced view; diagnostics that need gradient vectors recompute them
/// from a white-box objective.
#[derive(Debug, Clone)]
pub struct CsvTrace {
    pub dim: usize,
    pub rows: Vec<TraceRow>,
}

impl CsvTrace {
    pub fn read_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        let cols = header.len();
        if cols < 9 {
            return Err(Error::InvalidInput("trace csv has too few columns".into()));
        }
        let n = cols - 8;
        let expected = csv_header(n);
        if header.iter().ne(expected.iter().map(|s| s.as_str())) {
            return Err(Error::InvalidInput(
                "trace csv header does not match schema".into(),
            ));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidInput(format!("bad {what}: {s}")))
        };
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != cols {
                return Err(Error::InvalidInput("ragged trace csv row".into()));
            }
            let x = (0..n)
                .map(|j| parse_f(&record[2 + j], "coordinate"))
                .collect::<Result<Vec<f64>>>()?;
            let min_multiplier = if record[cols - 1].is_empty() {
                None
            } else {
                Some(parse_f(&record[cols - 1], "min_multiplier")?)
            };
            rows.push(TraceRow {
                iter: record[0]
                    .parse()
                    .map_err(|_| Error::InvalidInput("bad iter".into()))?,
                point_index: record[1]
                    .parse()
                    .map_err(|_| Error::InvalidInput("bad point_index".into()))?,
                x,
                value: parse_f(&record[2 + n], "value")?,
                grad_norm: parse_f(&record[3 + n], "grad_norm")?,
                step_size: parse_f(&record[4 + n], "step_size")?,
                status: record[5 + n].parse()?,
                tight: record[6 + n]
                    .parse()
                    .map_err(|_| Error::InvalidInput("bad tight flag".into()))?,
                min_multiplier,
            });
        }
        Ok(Self { dim: n, rows })
    }

    pub fn num_iterations(&self) -> usize {
        self.rows.iter().map(|r| r.iter).max().map_or(0, |m| m + 1)
    }

    pub fn num_points(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.iter == 0)
            .map(|r| r.point_index)
            .max()
            .map_or(0, |m| m + 1)
    }

    fn rows_at(&self, t: usize) -> Vec<&TraceRow> {
        let mut rows: Vec<&TraceRow> = self.rows.iter().filter(|r| r.iter == t).collect();
        rows.sort_by_key(|r| r.point_index);
        rows
    }

    /// Points of iteration `t` as an `n x k` matrix.
    pub fn points_at(&self, t: usize) -> DMatrix<f64> {
        let rows = self.rows_at(t);
        let mut m = DMatrix::zeros(self.dim, rows.len());
        for (i, row) in rows.iter().enumerate() {
            m.column_mut(i)
                .copy_from(&DVector::from_vec(row.x.clone()));
        }
        m
    }

    pub fn values_at(&self, t: usize) -> DVector<f64> {
        let rows = self.rows_at(t);
        DVector::from_iterator(rows.len(), rows.iter().map(|r| r.value))
    }

    pub fn statuses_at(&self, t: usize) -> Vec<TraceStatus> {
        self.rows_at(t).iter().map(|r| r.status).collect()
    }

    pub fn tight_at(&self, t: usize) -> Vec<bool> {
        self.rows_at(t).iter().map(|r| r.tight).collect()
    }

    pub fn min_multipliers_at(&self, t: usize) -> Vec<Option<f64>> {
        self.rows_at(t).iter().map(|r| r.min_multiplier).collect()
    }
}
