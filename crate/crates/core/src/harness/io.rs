//! Plain-text matrix and vector files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::LinearMap;

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

/// First line `m n`, then `m` lines of `n` whitespace-separated reals.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!("line {ln}: expected `m n`")));
    }
    let parse_dim = |t: &str| {
        t.parse::<usize>()
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::Parse(format!("line {ln}: bad dimension `{t}`")))
    };
    let (m, n) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let mut data = DMatrix::zeros(m, n);
    for i in 0..m {
        let (ln, row) = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {m} rows, found {i}")))?;
        let vals: Vec<&str> = row.split_whitespace().collect();
        if vals.len() != n {
            return Err(Error::Parse(format!(
                "line {ln}: expected {n} entries, found {}",
                vals.len()
            )));
        }
        for (j, tok) in vals.iter().enumerate() {
            data[(i, j)] = parse_f64(tok, ln)?;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse(format!(
            "line {ln}: trailing data after {m} rows"
        )));
    }
    Ok(data)
}

pub fn read_matrix(path: &Path) -> Result<LinearMap> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    LinearMap::new(parse_matrix(&text)?)
}

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut s = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = a.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// One decimal per line; blank lines are ignored.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if !t.is_empty() {
            vals.push(parse_f64(t, i + 1)?);
        }
    }
    if vals.is_empty() {
        return Err(Error::Parse("empty vector file".into()));
    }
    Ok(DVector::from_vec(vals))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_vector(&text)
}

pub fn format_vector(x: &DVector<f64>) -> String {
    x.iter().map(|v| format!("{v:.17e}\n")).collect()
}
