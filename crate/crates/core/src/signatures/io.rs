//! Plain-text matrix files: a `m n` header line followed by `m` rows of `n`
//! whitespace-separated decimals. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::SignatureMatrix;
use crate::error::{Error, Result};

pub fn load_matrix(path: impl AsRef<Path>) -> Result<SignatureMatrix> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

pub fn save_matrix(s: &SignatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_matrix(s))?;
    Ok(())
}

/// Formats with shortest round-trip decimals.
pub fn write_matrix(s: &SignatureMatrix) -> String {
    let mut out = format!("{} {}\n", s.chips(), s.users());
    for row in s.matrix().row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<SignatureMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: hline, msg: format!("bad header: {e}") })?;
    let [m, n] = dims[..] else {
        return Err(Error::Parse { line: hline, msg: "header must be `m n`".into() });
    };
    if m == 0 || n == 0 {
        return Err(Error::Parse { line: hline, msg: "dimensions must be positive".into() });
    }

    let mut data = Vec::with_capacity(m * n);
    let mut rows = 0;
    for (line, text) in lines {
        let row: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if row.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: expected {n} columns, found {}",
                row.len()
            )));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != m {
        return Err(Error::DimensionMismatch(format!("expected {m} rows, found {rows}")));
    }
    SignatureMatrix::new(DMatrix::from_row_slice(m, n, &data))
}
