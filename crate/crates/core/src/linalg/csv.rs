//! Plain matrix CSV: comma-separated reals, one row per line, no header.
//! Lines starting with `#` carry provenance comments and are skipped.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub fn parse_matrix_csv(text: &str, source: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    format!("{source}:{}:{}", lineno + 1, col + 1),
                    format!("not a number: {cell:?}"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("{source}:{}:{}", lineno + 1, col + 1),
                    "non-finite value",
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("{source}:{}", lineno + 1),
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::input(format!("{source}: no matrix rows")));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text, &path.display().to_string())
}

/// Writes `m` with shortest round-trip decimal formatting, preceded by
/// `# `-prefixed comment lines.
pub fn write_matrix_csv<W: Write>(mut out: W, m: &DenseMatrix, comments: &[String]) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scientific_and_comments() {
        let m = parse_matrix_csv("# seed=1\n1,2.5e-1\n-3E2, 4\n\n", "t").unwrap();
        assert_eq!(m, DenseMatrix::from_rows(&[[1.0, 0.25], [-300.0, 4.0]]).unwrap());
    }

    #[test]
    fn reports_location() {
        let err = parse_matrix_csv("1,2\n3,x\n", "t").unwrap_err();
        assert!(err.to_string().contains("t:2:2"), "{err}");
        assert!(parse_matrix_csv("1,2\n3\n", "t").is_err());
        assert!(parse_matrix_csv("", "t").is_err());
        assert!(parse_matrix_csv("1,inf\n", "t").is_err());
    }

    #[test]
    fn round_trips_exactly() {
        let m = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-7);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m, &["seed=3".into()]).unwrap();
        let back = parse_matrix_csv(std::str::from_utf8(&buf).unwrap(), "buf").unwrap();
        assert_eq!(back, m);
    }
}
