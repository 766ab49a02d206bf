//! LIBSVM parsing and trace CSV files.
//!
//! Trace files look like
//!
//! ```text
//! # algo=ncpdhg
//! # gamma_x=2.4e-2
//! iteration,prox_evals,kkt,elapsed_seconds
//! 0,0,1.0000000000000000e0,0.0000000000000000e0
//! 10,740,3.2000000000000001e-1,1.2000000000000000e-4
//! # status=Converged
//! ```
//!
//! Floats carry 17 significant digits, so reading a file back reproduces the
//! trace bit for bit.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::experiments::{Dataset, DatasetError};
use crate::linalg::DenseMatrix;
use crate::solvers::{Status, Trace, TraceRecord};

pub const TRACE_HEADER: &str = "iteration,prox_evals,kkt,elapsed_seconds";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: malformed token '{token}'")]
    Malformed { line: usize, token: String },
    #[error("line {line}: feature index {index} does not increase")]
    NonIncreasing { line: usize, index: usize },
    #[error("line {line}: feature index must be at least 1")]
    ZeroIndex { line: usize },
    #[error("line {line}: feature index {index} exceeds the expected width {width}")]
    TooWide { line: usize, index: usize, width: usize },
    #[error("no rows")]
    NoRows,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error("line {line}: expected header '{TRACE_HEADER}', found '{found}'")]
    Header { line: usize, found: String },
    #[error("line {line}: expected 4 fields, found {found}")]
    Arity { line: usize, found: usize },
    #[error("line {line}: bad value '{value}'")]
    Value { line: usize, value: String },
    #[error("missing status line")]
    MissingStatus,
    #[error("line {line}: unexpected content after the status line")]
    TrailingContent { line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses LIBSVM text `label idx:val idx:val ...` into a dense dataset.
///
/// Indices are 1-based and strictly increasing within a line; absent
/// features are zero. Blank lines and lines starting with `#` are skipped,
/// as is anything after a `#` inside a line. The width is the largest index
/// seen unless `expected_width` is given.
pub fn parse_libsvm<R: BufRead>(reader: R, expected_width: Option<usize>) -> Result<Dataset, ParseError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label = parse_finite(label_tok).ok_or_else(|| ParseError::Malformed {
            line: line_no,
            token: label_tok.to_string(),
        })?;
        let mut row = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let malformed = || ParseError::Malformed {
                line: line_no,
                token: tok.to_string(),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val = parse_finite(val).ok_or_else(malformed)?;
            if idx == 0 {
                return Err(ParseError::ZeroIndex { line: line_no });
            }
            if idx <= last {
                return Err(ParseError::NonIncreasing { line: line_no, index: idx });
            }
            if let Some(w) = expected_width {
                if idx > w {
                    return Err(ParseError::TooWide {
                        line: line_no,
                        index: idx,
                        width: w,
                    });
                }
            }
            last = idx;
            row.push((idx - 1, val));
        }
        width = width.max(last);
        labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ParseError::NoRows);
    }
    let n = expected_width.unwrap_or(width);
    let mut values = vec![0.0; rows.len() * n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            values[i * n + j] = v;
        }
    }
    let features = DenseMatrix::new(rows.len(), n, values).map_err(|_| DatasetError::Empty)?;
    Ok(Dataset::new(features, labels)?)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Writes `t` as CSV: metadata comments, header, rows and a status line.
pub fn write_trace_csv<W: Write>(t: &Trace, mut sink: W) -> io::Result<()> {
    for (k, v) in &t.metadata {
        writeln!(sink, "# {}={}", k, v.replace('\n', " "))?;
    }
    writeln!(sink, "{TRACE_HEADER}")?;
    for r in &t.records {
        writeln!(
            sink,
            "{},{},{:.16e},{:.16e}",
            r.iteration, r.prox_evals, r.kkt, r.elapsed_seconds
        )?;
    }
    writeln!(sink, "# status={}", t.status.as_str())?;
    sink.flush()
}

/// Inverse of [`write_trace_csv`].
pub fn read_trace_csv<R: BufRead>(source: R) -> Result<Trace, TraceCsvError> {
    let mut metadata = Vec::new();
    let mut records = Vec::new();
    let mut header_seen = false;
    let mut status = None;
    for (k, line) in source.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if status.is_some() {
            if line.trim().is_empty() {
                continue;
            }
            return Err(TraceCsvError::TrailingContent { line: line_no });
        }
        if let Some(comment) = line.strip_prefix("# ") {
            let (key, value) = comment.split_once('=').unwrap_or((comment, ""));
            if header_seen && key == "status" {
                status = Some(value.parse::<Status>().map_err(|_| TraceCsvError::Value {
                    line: line_no,
                    value: value.to_string(),
                })?);
            } else {
                metadata.push((key.to_string(), value.to_string()));
            }
            continue;
        }
        if !header_seen {
            if line != TRACE_HEADER {
                return Err(TraceCsvError::Header {
                    line: line_no,
                    found: line,
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(TraceCsvError::Arity {
                line: line_no,
                found: fields.len(),
            });
        }
        let bad = |v: &str| TraceCsvError::Value {
            line: line_no,
            value: v.to_string(),
        };
        records.push(TraceRecord {
            iteration: fields[0].parse().map_err(|_| bad(fields[0]))?,
            prox_evals: fields[1].parse().map_err(|_| bad(fields[1]))?,
            kkt: fields[2].parse().map_err(|_| bad(fields[2]))?,
            elapsed_seconds: fields[3].parse().map_err(|_| bad(fields[3]))?,
        });
    }
    if !header_seen {
        return Err(TraceCsvError::Header {
            line: 1,
            found: String::new(),
        });
    }
    let status = status.ok_or(TraceCsvError::MissingStatus)?;
    Ok(Trace {
        records,
        status,
        metadata,
    })
}
