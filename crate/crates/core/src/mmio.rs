//! Matrix Market coordinate I/O for real symmetric matrices.
//!
//! Files may store only one triangle (the usual convention) or both; the
//! result always holds the full symmetric pattern.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_matrix_market(reader, path)
}

pub fn read_matrix_market(reader: impl BufRead, path: &Path) -> Result<SparseMatrix> {
    let err = |line: usize, msg: String| Error::MatrixMarket {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lno, header) = match lines.next() {
        Some((lno, l)) => (lno, l?),
        None => return Err(err(1, "empty file".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(lno, format!("malformed header {header:?}")));
    }
    if tokens[2] != "coordinate" {
        return Err(err(lno, format!("unsupported format {:?}", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(err(lno, format!("unsupported field {:?}", tokens[3])));
    }
    if tokens[4] != "symmetric" {
        return Err(err(
            lno,
            format!("expected symmetric storage, found {:?}", tokens[4]),
        ));
    }

    let mut size: Option<(usize, usize)> = None;
    // (row >= col) key, value, whether the file entry was in the upper triangle
    let mut entries: Vec<(usize, usize, f64, bool)> = Vec::new();
    let mut n = 0;
    for (lno, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = |what: &str| {
            it.next()
                .ok_or_else(|| err(lno, format!("missing {what}")))
        };
        match size {
            None => {
                let rows: usize = field("rows")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad row count: {e}")))?;
                let cols: usize = field("cols")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad column count: {e}")))?;
                let nnz: usize = field("nnz")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad entry count: {e}")))?;
                if rows != cols {
                    return Err(err(lno, format!("symmetric matrix must be square, got {rows}x{cols}")));
                }
                n = rows;
                size = Some((rows, nnz));
                entries.reserve(nnz);
            }
            Some(_) => {
                let i: usize = field("row index")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad row index: {e}")))?;
                let j: usize = field("column index")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad column index: {e}")))?;
                let v: f64 = field("value")?
                    .parse()
                    .map_err(|e| err(lno, format!("bad value: {e}")))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(err(lno, format!("index ({i}, {j}) out of range")));
                }
                if !v.is_finite() {
                    return Err(err(lno, "non-finite value".into()));
                }
                let (r, c) = (i.max(j) - 1, i.min(j) - 1);
                entries.push((r, c, v, i < j));
            }
        }
    }
    let Some((_, nnz)) = size else {
        return Err(err(1, "missing size line".into()));
    };
    if entries.len() != nnz {
        return Err(err(
            0,
            format!("size line announces {nnz} entries, found {}", entries.len()),
        ));
    }

    // Full storage lists each off-diagonal pair twice, once per triangle.
    entries.sort_by(|a, b| (a.0, a.1, a.3).cmp(&(b.0, b.1, b.3)));
    let mut triplets = Vec::with_capacity(2 * entries.len());
    let mut k = 0;
    while k < entries.len() {
        let (r, c, v, upper) = entries[k];
        let mut next = k + 1;
        if next < entries.len() && (entries[next].0, entries[next].1) == (r, c) {
            let (_, _, w, other_upper) = entries[next];
            if upper == other_upper || r == c {
                return Err(err(0, format!("duplicate entry ({}, {})", r + 1, c + 1)));
            }
            if (v - w).abs() > 1e-12 * v.abs().max(1.0) {
                return Err(err(
                    0,
                    format!("entries ({}, {}) and ({}, {}) differ", r + 1, c + 1, c + 1, r + 1),
                ));
            }
            next += 1;
        }
        triplets.push((r, c, v));
        if r != c {
            triplets.push((c, r, v));
        }
        k = next;
    }

    let a = SparseMatrix::from_triplets(n, &triplets)?;
    if let Err(e) = a.check_positive_diagonal() {
        warn!("{}: {e}; matrix is not SPD", path.display());
    }
    Ok(a)
}

/// Writes the lower triangle in `coordinate real symmetric` form. Values
/// use the shortest representation that parses back to the same f64.
pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(a, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to(a: &SparseMatrix, w: &mut impl Write) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.lower_nnz())?;
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals).take_while(|(&j, _)| j <= i) {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}
