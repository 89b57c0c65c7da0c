//! Report rows, CSV output and the plain-text field format.
//!
//! Field files look like
//!
//! ```text
//! # dualmink field
//! # grid n=3 resolution=4 hash=<sha256>
//! # eps 1.0000000000000001e-5
//! 0 2.7121920500000000e0
//! 1 ...
//! ```
//!
//! with one `index value` line per node and values printed with 17 significant digits.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convex::{dual_integral_identity, SupportFn};
use crate::equation::ProblemParams;
use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, GridSpec, ScalarField};
use crate::solver::{solution_metrics, SolveReport};

/// CSV header; the column order is fixed.
pub const CSV_COLUMNS: [&str; 14] = [
    "eps",
    "plain_sup",
    "plain_l2",
    "log_sup",
    "log_l2",
    "min_h",
    "c0_lower_bound",
    "max_h",
    "max_grad",
    "max_H",
    "psd_margin",
    "dual_rel_gap",
    "iterations",
    "wall_time_s",
];

/// One line of the CSV report: a converged solve at one eps (eps = 0 for plain solves).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub eps: f64,
    pub plain_sup: f64,
    pub plain_l2: f64,
    pub log_sup: f64,
    pub log_l2: f64,
    pub min_h: f64,
    pub c0_lower_bound: f64,
    pub max_h: f64,
    pub max_grad: f64,
    pub max_trace_b: f64,
    pub psd_margin: f64,
    pub dual_rel_gap: f64,
    pub iterations: usize,
    /// Zero unless timing was requested, so reports stay byte-reproducible.
    pub wall_time_s: f64,
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl ReportRow {
    /// Row for a solve of `f + eps`; `f_eps` is the density actually solved for.
    pub fn from_solve(
        eps: f64,
        report: &SolveReport,
        f_eps: &ScalarField,
        params: &ProblemParams,
        record_timing: bool,
    ) -> Result<Self> {
        let dual = dual_integral_identity(&report.h, f_eps, params)?;
        Ok(Self {
            eps,
            plain_sup: report.plain_sup,
            plain_l2: report.plain_l2,
            log_sup: report.log_sup,
            log_l2: report.log_l2,
            min_h: report.min_h,
            c0_lower_bound: report.apriori.c0_lower_bound,
            max_h: report.max_h,
            max_grad: report.max_grad,
            max_trace_b: report.max_trace_b,
            psd_margin: report.psd_margin,
            dual_rel_gap: dual.rel_gap,
            iterations: report.iterations,
            wall_time_s: if record_timing {
                report.wall_time.as_secs_f64()
            } else {
                0.0
            },
        })
    }

    /// Recomputes every derived column from a stored support function.
    pub fn recompute(
        eps: f64,
        h: &SupportFn,
        f_eps: &ScalarField,
        params: &ProblemParams,
        iterations: usize,
    ) -> Result<Self> {
        let m = solution_metrics(h, f_eps, params)?;
        let dual = dual_integral_identity(h, f_eps, params)?;
        Ok(Self {
            eps,
            plain_sup: m.plain_sup,
            plain_l2: m.plain_l2,
            log_sup: m.log_sup,
            log_l2: m.log_l2,
            min_h: m.min_h,
            c0_lower_bound: f_eps.max().powf(params.constant_exponent()?),
            max_h: m.max_h,
            max_grad: m.max_grad,
            max_trace_b: m.max_trace_b,
            psd_margin: m.psd_margin,
            dual_rel_gap: dual.rel_gap,
            iterations,
            wall_time_s: 0.0,
        })
    }

    pub fn csv_line(&self) -> String {
        let floats = [
            self.eps,
            self.plain_sup,
            self.plain_l2,
            self.log_sup,
            self.log_l2,
            self.min_h,
            self.c0_lower_bound,
            self.max_h,
            self.max_grad,
            self.max_trace_b,
            self.psd_margin,
            self.dual_rel_gap,
        ];
        let mut cols: Vec<String> = floats.iter().map(|&v| fmt_f64(v)).collect();
        cols.push(self.iterations.to_string());
        cols.push(fmt_f64(self.wall_time_s));
        cols.join(",")
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != CSV_COLUMNS.len() {
            return Err(Error::InvalidParams(format!(
                "expected {} CSV columns, found {}",
                CSV_COLUMNS.len(),
                cols.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k].parse().map_err(|_| {
                Error::InvalidParams(format!("bad number {:?} in column {}", cols[k], CSV_COLUMNS[k]))
            })
        };
        Ok(Self {
            eps: num(0)?,
            plain_sup: num(1)?,
            plain_l2: num(2)?,
            log_sup: num(3)?,
            log_l2: num(4)?,
            min_h: num(5)?,
            c0_lower_bound: num(6)?,
            max_h: num(7)?,
            max_grad: num(8)?,
            max_trace_b: num(9)?,
            psd_margin: num(10)?,
            dual_rel_gap: num(11)?,
            iterations: cols[12].parse().map_err(|_| {
                Error::InvalidParams(format!("bad iteration count {:?}", cols[12]))
            })?,
            wall_time_s: num(13)?,
        })
    }
}

pub fn csv_report(rows: &[ReportRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// A support function or density read back from a field file.
#[derive(Clone, Debug)]
pub struct StoredField {
    pub spec: GridSpec,
    pub hash: String,
    pub eps: f64,
    pub field: ScalarField,
}

pub fn write_field(field: &ScalarField, eps: f64) -> String {
    let grid = field.grid();
    let spec = grid.spec();
    let mut out = String::new();
    out.push_str("# dualmink field\n");
    let _ = writeln!(
        out,
        "# grid n={} resolution={} hash={}",
        spec.n,
        spec.resolution,
        grid.hash()
    );
    let _ = writeln!(out, "# eps {}", fmt_f64(eps));
    for (i, v) in field.values().iter().enumerate() {
        let _ = writeln!(out, "{i} {}", fmt_f64(*v));
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParams(format!("field file: {}", msg.into()))
}

/// Parses a field file, rebuilding its grid (or reusing `grid` when the hashes agree).
pub fn read_field(text: &str, grid: Option<&Arc<Grid>>) -> Result<StoredField> {
    let mut spec = None;
    let mut hash = None;
    let mut eps = 0.0;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(g) = rest.strip_prefix("grid ") {
                let mut n = None;
                let mut res = None;
                for kv in g.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("n", v)) => n = v.parse().ok(),
                        Some(("resolution", v)) => res = v.parse().ok(),
                        Some(("hash", v)) => hash = Some(v.to_string()),
                        _ => {}
                    }
                }
                match (n, res) {
                    (Some(n), Some(resolution)) => spec = Some(GridSpec { n, resolution }),
                    _ => return Err(bad("malformed grid header")),
                }
            } else if let Some(e) = rest.strip_prefix("eps ") {
                eps = e.trim().parse().map_err(|_| bad("malformed eps header"))?;
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad(format!("expected `index value`, got {line:?}")));
        };
        let i: usize = i.parse().map_err(|_| bad(format!("bad index {i:?}")))?;
        let v: f64 = v.parse().map_err(|_| bad(format!("bad value {v:?}")))?;
        values.push((i, v));
    }
    let spec = spec.ok_or_else(|| bad("missing grid header"))?;
    let hash = hash.ok_or_else(|| bad("missing grid hash"))?;
    let grid = match grid {
        Some(g) if g.spec() == spec => Arc::clone(g),
        _ => build_grid(spec.n, spec.resolution)?,
    };
    if grid.hash() != hash {
        return Err(Error::GridMismatch);
    }
    if values.len() != grid.len() || values.iter().enumerate().any(|(k, (i, _))| *i != k) {
        return Err(bad(format!(
            "expected indices 0..{} in order, found {} entries",
            grid.len(),
            values.len()
        )));
    }
    let field = ScalarField::new(&grid, values.into_iter().map(|(_, v)| v).collect())?;
    Ok(StoredField {
        spec,
        hash,
        eps,
        field,
    })
}
