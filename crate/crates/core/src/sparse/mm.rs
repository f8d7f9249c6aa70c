//! Matrix Market coordinate I/O for debugging and oracle comparison.
//!
//! Writes the general coordinate format; reading accepts both `general` and
//! `symmetric` headers, expanding lower-triangular symmetric storage on load.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub fn write_matrix_market(path: &Path, a: &SparseMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(f, "{} {} {}", a.n_rows, a.n_cols, a.nnz())?;
    for i in 0..a.n_rows {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(f, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines().enumerate();
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?
        .1
        .map(|h| (1usize, h))
        .map_err(Error::Io)?;
    let _ = line_no;
    let header = header.to_lowercase();
    if !header.starts_with("%%matrixmarket matrix coordinate real") {
        return Err(parse_err(1, "unsupported MatrixMarket header"));
    }
    let symmetric = header.contains("symmetric");
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(Error::Io)?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if dims.is_none() {
            if fields.len() != 3 {
                return Err(parse_err(line_no, "expected `rows cols nnz`"));
            }
            dims = Some((
                parse_field(fields[0], line_no)?,
                parse_field(fields[1], line_no)?,
                parse_field(fields[2], line_no)?,
            ));
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(line_no, "expected `row col value`"));
        }
        let i: usize = parse_field(fields[0], line_no)?;
        let j: usize = parse_field(fields[1], line_no)?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, "bad value"))?;
        if i == 0 || j == 0 {
            return Err(parse_err(line_no, "indices are 1-based"));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (n_rows, n_cols, _) = dims.ok_or_else(|| parse_err(0, "missing size line"))?;
    Ok(SparseMatrix::from_triplets(n_rows, n_cols, &triplets))
}

fn parse_field(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| parse_err(line, "bad integer"))
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_general() {
        let a = SparseMatrix::from_triplets(3, 2, &[(0, 1, 1.5), (2, 0, -2.25)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        write_matrix_market(&path, &a).unwrap();
        let b = read_matrix_market(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_lower_triangle_expands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 2.0\n2 1 1.0\n3 3 4.0\n",
        )
        .unwrap();
        let a = read_matrix_market(&path).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(1, 0), 1.0);
        assert_eq!(a.get(2, 2), 4.0);
        assert_eq!(a.nnz(), 4);
    }
}
