//! Plain-text formats: vectors (one value per line), matrices (row-major CSV) and traces.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Trace, TraceRecord};
use crate::rules::RuleId;

pub const TRACE_HEADER: &str = "iter,fval,gap,optimality,rule,support_size,i,j,delta,elapsed_ns";

/// Round-trip representation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse { line, message: format!("{:?}: {e}", s.trim()) })
}

pub fn write_vector<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{}", format_float(*x))?;
    }
    Ok(())
}

/// Reads one value per line; blank lines are skipped.
pub fn read_vector<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_float(&line, k + 1)?);
    }
    Ok(out)
}

pub fn write_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|c| parse_float(c, k + 1)).collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse { line: k + 1, message: format!("expected {c} columns, found {}", row.len()) })
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse { line: 0, message: "empty matrix".into() })?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes the trace CSV; `with_interior` appends an `interior` column.
pub fn write_trace<W: Write>(mut w: W, trace: &Trace, with_interior: bool) -> Result<()> {
    if with_interior {
        writeln!(w, "{TRACE_HEADER},interior")?;
    } else {
        writeln!(w, "{TRACE_HEADER}")?;
    }
    for r in &trace.records {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            format_float(r.fval),
            opt_cell(r.gap.map(format_float)),
            format_float(r.optimality),
            r.rule,
            r.support_size,
            opt_cell(r.pair.map(|p| p.0)),
            opt_cell(r.pair.map(|p| p.1)),
            opt_cell(r.delta.map(format_float)),
            r.elapsed_ns,
        )?;
        if with_interior {
            write!(w, ",{}", r.interior)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses a trace CSV back into records. Without an `interior` column that field is 0.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h?,
        None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
    };
    let with_interior = if header == TRACE_HEADER {
        false
    } else if header == format!("{TRACE_HEADER},interior") {
        true
    } else {
        return Err(Error::Parse { line: 1, message: format!("unexpected header {header:?}") });
    };
    let width = if with_interior { 11 } else { 10 };

    let mut out = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let lineno = k + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Parse { line: lineno, message: format!("expected {width} cells, found {}", cells.len()) });
        }
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>().map_err(|e| Error::Parse { line: lineno, message: format!("{s:?}: {e}") })
        };
        let opt_f = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_float(s, lineno).map(Some)
            }
        };
        let opt_i = |s: &str| -> Result<Option<usize>> {
            if s.is_empty() {
                Ok(None)
            } else {
                int(s).map(|v| Some(v as usize))
            }
        };
        let rule: RuleId = cells[4].parse()?;
        let pair = match (opt_i(cells[6])?, opt_i(cells[7])?) {
            (Some(i), Some(j)) => Some((i, j)),
            (None, None) => None,
            _ => return Err(Error::Parse { line: lineno, message: "pair needs both i and j".into() }),
        };
        out.push(TraceRecord {
            iter: int(cells[0])? as usize,
            fval: parse_float(cells[1], lineno)?,
            gap: opt_f(cells[2])?,
            optimality: parse_float(cells[3], lineno)?,
            rule,
            support_size: int(cells[5])? as usize,
            pair,
            delta: opt_f(cells[8])?,
            elapsed_ns: int(cells[9])?,
            interior: if with_interior { int(cells[10])? as usize } else { 0 },
        });
    }
    Ok(out)
}
