//! MatrixMarket coordinate format, symmetric real matrices only.

use std::io::{BufRead, Write};

use super::SparseSymmetric;
use crate::error::{Error, Result};

pub fn write_matrix_market<W: Write>(a: &SparseSymmetric, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{} {} {}", a.dim(), a.dim(), a.nnz())?;
    for (i, j, v) in a.iter() {
        writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(input: R) -> Result<SparseSymmetric> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Load {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header?.to_ascii_lowercase();
    if !header.starts_with("%%matrixmarket matrix coordinate real symmetric") {
        return Err(Error::Load {
            line: 1,
            message: "expected a real symmetric coordinate MatrixMarket header".into(),
        });
    }
    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let bad = |m: &str| Error::Load {
            line: no + 1,
            message: m.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(bad("expected 'rows cols nnz'"));
                }
                let r: usize = fields[0].parse().map_err(|_| bad("bad row count"))?;
                let c: usize = fields[1].parse().map_err(|_| bad("bad column count"))?;
                let z: usize = fields[2].parse().map_err(|_| bad("bad entry count"))?;
                if r != c {
                    return Err(bad("matrix is not square"));
                }
                size = Some((r, z));
            }
            Some((n, _)) => {
                if fields.len() != 3 {
                    return Err(bad("expected 'row col value'"));
                }
                let i: usize = fields[0].parse().map_err(|_| bad("bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| bad("bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| bad("bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(bad("index out of range"));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (n, nnz) = size.ok_or(Error::Load {
        line: 1,
        message: "missing size line".into(),
    })?;
    if triplets.len() != nnz {
        return Err(Error::Load {
            line: 0,
            message: format!("expected {nnz} entries, found {}", triplets.len()),
        });
    }
    SparseSymmetric::from_triplets(n, &triplets)
}
