//! Matrix Market (coordinate, real) and dense CSV import/export.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
}

/// Writes `a` in coordinate format. With `Symmetric` only the lower triangle
/// is written; `comments` become `%` lines after the banner.
pub fn write_matrix_market<W: Write>(
    w: &mut W,
    a: &SparseMatrix,
    symmetry: MmSymmetry,
    comments: &[String],
) -> Result<()> {
    let sym = match symmetry {
        MmSymmetry::General => "general",
        MmSymmetry::Symmetric => "symmetric",
    };
    writeln!(w, "%%MatrixMarket matrix coordinate real {sym}")?;
    for c in comments {
        writeln!(w, "% {c}")?;
    }
    let mut entries = Vec::new();
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if symmetry == MmSymmetry::General || *c <= i {
                entries.push((i, *c, *v));
            }
        }
    }
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseMatrix> {
    let mut lines = r.lines();
    let banner = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market input".into()))??;
    let lower = banner.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse(format!("bad banner: {banner}")));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::Parse("only coordinate format is supported".into()));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field {}", tokens[3])));
    }
    let symmetric = match tokens[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {t}")));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
                size = Some((p(parts[0])?, p(parts[1])?, p(parts[2])?));
            }
            Some((nr, nc, _)) => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {t}")));
                }
                let i: usize = parts[0].parse().map_err(|_| Error::Parse(t.into()))?;
                let j: usize = parts[1].parse().map_err(|_| Error::Parse(t.into()))?;
                let v: f64 = parts[2].parse().map_err(|_| Error::Parse(t.into()))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(Error::Parse(format!("entry out of range: {t}")));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let stored = if symmetric {
        trip.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        trip.len()
    };
    if stored != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {stored}")));
    }
    SparseMatrix::from_triplets(nr, nc, &trip)
}

/// Dense matrix as CSV, one matrix row per line.
pub fn write_dense_csv<W: Write>(w: W, a: &DMatrix<f64>) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e}", a[(i, j)])).collect();
        wr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dense_csv<R: std::io::Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse("ragged CSV rows".into()));
            }
        }
        rows.push(row);
    }
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}
