//! Text formats: whitespace-separated cost files and key-value result
//! documents.
//!
//! Cost file: one matrix row per line, entries separated by whitespace.
//! Blank lines and lines starting with `#` are ignored.
//!
//! Result document:
//!
//! ```text
//! format = pgdmatch-result/1
//! rows = 2
//! cols = 2
//! n_grad = 400
//! ...
//! wall_time_s = 0.0123
//! assignment = [
//! 1 0
//! 0 1
//! ]
//! ```
//!
//! Scalars are `key = value`; blocks open with `key = [`, hold one row per
//! line and close with `]`. Reals use the shortest representation that
//! parses back to the same `f64`.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{MatchError, Result};
use crate::matcher::{SolveReport, SolverConfig};
use crate::matrix::CostMatrix;
use crate::polytope::ResidualSummary;

pub const RESULT_FORMAT: &str = "pgdmatch-result/1";

/// Keys whose values vary between otherwise identical runs.
pub const TIMING_KEYS: &[&str] = &["wall_time_s"];

fn parse_real(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| MatchError::Parse {
        line,
        msg: format!("not a number: {token:?}"),
    })?;
    if !v.is_finite() {
        return Err(MatchError::Parse {
            line,
            msg: format!("non-finite value {token:?}"),
        });
    }
    Ok(v)
}

pub fn parse_cost_matrix(text: &str) -> Result<CostMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| parse_real(t, idx + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MatchError::Parse {
                    line: idx + 1,
                    msg: format!("expected {} entries, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MatchError::Parse {
            line: 0,
            msg: "no matrix rows".into(),
        });
    }
    CostMatrix::from_rows(&rows)
}

pub fn format_matrix(x: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Everything `solve` writes to disk, and what it parses back.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultDocument {
    pub config: SolverConfig,
    pub objective: f64,
    pub wall_time_s: f64,
    pub assignment: Array2<f64>,
    pub masked_assignment: Array2<f64>,
    pub objective_trace: Vec<f64>,
    pub feasibility_trace: Vec<ResidualSummary>,
}

impl ResultDocument {
    pub fn from_report(cost: &CostMatrix, config: &SolverConfig, report: &SolveReport) -> Self {
        Self {
            config: config.clone(),
            objective: report.objective(cost),
            wall_time_s: report.wall_time,
            assignment: report.assignment.clone(),
            masked_assignment: report.masked_assignment.clone(),
            objective_trace: report.objective_trace.clone(),
            feasibility_trace: report.feasibility_trace.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (n, m) = self.assignment.dim();
        let c = &self.config;
        // Writing to a String cannot fail.
        let _ = writeln!(s, "format = {RESULT_FORMAT}");
        let _ = writeln!(s, "rows = {n}");
        let _ = writeln!(s, "cols = {m}");
        let _ = writeln!(s, "n_grad = {}", c.n_grad);
        let _ = writeln!(s, "n_proj = {}", c.n_proj);
        let _ = writeln!(s, "learning_rate = {}", c.learning_rate);
        let _ = writeln!(s, "init = {}", c.init);
        let _ = writeln!(s, "average = {}", c.average_mode);
        let _ = writeln!(s, "seed = {}", c.seed);
        let _ = writeln!(s, "objective = {}", self.objective);
        let _ = writeln!(s, "wall_time_s = {}", self.wall_time_s);
        let _ = write!(s, "assignment = [\n{}]\n", format_matrix(&self.assignment));
        let _ = write!(
            s,
            "masked_assignment = [\n{}]\n",
            format_matrix(&self.masked_assignment)
        );
        s.push_str("objective_trace = [\n");
        for v in &self.objective_trace {
            let _ = writeln!(s, "{v}");
        }
        s.push_str("]\n");
        s.push_str("feasibility_trace = [\n");
        for f in &self.feasibility_trace {
            let _ = writeln!(s, "{} {} {}", f.row_residual, f.col_violation, f.negativity);
        }
        s.push_str("]\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut scalars: Vec<(String, String, usize)> = Vec::new();
        let mut blocks: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
        let mut open: Option<(String, Vec<Vec<f64>>)> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if let Some((key, rows)) = open.as_mut() {
                if line == "]" {
                    blocks.push((std::mem::take(key), std::mem::take(rows)));
                    open = None;
                } else if !line.is_empty() {
                    rows.push(
                        line.split_whitespace()
                            .map(|t| parse_real(t, lineno))
                            .collect::<Result<_>>()?,
                    );
                }
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| MatchError::Parse {
                line: lineno,
                msg: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim().to_string(), value.trim());
            if value == "[" {
                open = Some((key, Vec::new()));
            } else {
                scalars.push((key, value.to_string(), lineno));
            }
        }
        if open.is_some() {
            return Err(MatchError::Parse {
                line: text.lines().count(),
                msg: "unterminated block".into(),
            });
        }

        let scalar = |key: &str| -> Result<(&str, usize)> {
            scalars
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, l)| (v.as_str(), *l))
                .ok_or_else(|| MatchError::Parse {
                    line: 0,
                    msg: format!("missing key {key:?}"),
                })
        };
        let parse_usize = |key: &str| -> Result<usize> {
            let (v, line) = scalar(key)?;
            v.parse().map_err(|_| MatchError::Parse {
                line,
                msg: format!("{key}: not an integer: {v:?}"),
            })
        };
        let parse_f = |key: &str| -> Result<f64> {
            let (v, line) = scalar(key)?;
            parse_real(v, line)
        };
        let block = |key: &str| -> Result<&Vec<Vec<f64>>> {
            blocks
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, rows)| rows)
                .ok_or_else(|| MatchError::Parse {
                    line: 0,
                    msg: format!("missing block {key:?}"),
                })
        };

        let (format, _) = scalar("format")?;
        if format != RESULT_FORMAT {
            return Err(MatchError::Parse {
                line: 1,
                msg: format!("unsupported format {format:?}"),
            });
        }
        let (n, m) = (parse_usize("rows")?, parse_usize("cols")?);
        let matrix = |key: &str| -> Result<Array2<f64>> {
            let rows = block(key)?;
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(MatchError::Parse {
                    line: 0,
                    msg: format!("{key}: expected a {n}x{m} block"),
                });
            }
            Ok(Array2::from_shape_vec((n, m), rows.concat()).expect("checked shape"))
        };
        let parse_enum = |key: &str| -> Result<String> { Ok(scalar(key)?.0.to_string()) };

        let config = SolverConfig {
            n_grad: parse_usize("n_grad")?,
            n_proj: parse_usize("n_proj")?,
            learning_rate: parse_f("learning_rate")?,
            init: parse_enum("init")?.parse()?,
            average_mode: parse_enum("average")?.parse()?,
            seed: {
                let (v, line) = scalar("seed")?;
                v.parse().map_err(|_| MatchError::Parse {
                    line,
                    msg: format!("seed: not an integer: {v:?}"),
                })?
            },
        };
        let objective_trace = block("objective_trace")?
            .iter()
            .map(|r| match r.as_slice() {
                [v] => Ok(*v),
                _ => Err(MatchError::Parse {
                    line: 0,
                    msg: "objective_trace: one value per line".into(),
                }),
            })
            .collect::<Result<_>>()?;
        let feasibility_trace = block("feasibility_trace")?
            .iter()
            .map(|r| match r.as_slice() {
                [a, b, c] => Ok(ResidualSummary {
                    row_residual: *a,
                    col_violation: *b,
                    negativity: *c,
                }),
                _ => Err(MatchError::Parse {
                    line: 0,
                    msg: "feasibility_trace: three values per line".into(),
                }),
            })
            .collect::<Result<_>>()?;

        Ok(Self {
            config,
            objective: parse_f("objective")?,
            wall_time_s: parse_f("wall_time_s")?,
            assignment: matrix("assignment")?,
            masked_assignment: matrix("masked_assignment")?,
            objective_trace,
            feasibility_trace,
        })
    }
}

/// Drops timing lines so two documents can be compared byte for byte.
pub fn strip_timing(text: &str) -> String {
    text.lines()
        .filter(|l| {
            !TIMING_KEYS
                .iter()
                .any(|k| l.split_once('=').is_some_and(|(key, _)| key.trim() == *k))
        })
        .map(|l| format!("{l}\n"))
        .collect()
}
