//! Matrix Market coordinate files (`real symmetric` and `real general`).
//!
//! Indices are 1-based on disk and 0-based in memory.

use std::fmt::Write as _;

use super::{SparseError, SparseMatrix, Storage};

const SYMMETRIC_HEADER: &str = "%%MatrixMarket matrix coordinate real symmetric";
const GENERAL_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Writes `a` in coordinate form. Lower-only matrices are written as `symmetric`.
pub fn write(a: &SparseMatrix) -> String {
    let mut out = String::new();
    let header = match a.storage() {
        Storage::Lower => SYMMETRIC_HEADER,
        Storage::Full => GENERAL_HEADER,
    };
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{} {} {}", a.n(), a.n(), a.nnz());
    for (i, j, v) in a.entries() {
        let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
    }
    out
}

/// Parses a square coordinate file. `symmetric` files load as lower-only.
pub fn read(text: &str) -> Result<SparseMatrix, SparseError> {
    let err = |line: usize, msg: &str| SparseError::Format(format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let lower = header.to_ascii_lowercase();
    let fields: Vec<&str> = lower.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(err(1, "expected a coordinate Matrix Market header"));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(err(1, "only real matrices are supported"));
    }
    let storage = match fields[4] {
        "symmetric" => Storage::Lower,
        "general" => Storage::Full,
        other => return Err(err(1, &format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(err(lineno, "expected 'rows cols nnz'"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, "bad size field"));
                let (r, c, nnz) = (parse(toks[0])?, parse(toks[1])?, parse(toks[2])?);
                if r != c {
                    return Err(err(lineno, "matrix must be square"));
                }
                triplets.reserve(nnz);
                size = Some((r, nnz));
            }
            Some((n, _)) => {
                if toks.len() != 3 {
                    return Err(err(lineno, "expected 'row col value'"));
                }
                let i: usize = toks[0].parse().map_err(|_| err(lineno, "bad row index"))?;
                let j: usize = toks[1].parse().map_err(|_| err(lineno, "bad column index"))?;
                let v: f64 = toks[2].parse().map_err(|_| err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(err(lineno, "index out of range"));
                }
                if storage == Storage::Lower && i < j {
                    return Err(err(lineno, "symmetric files must list the lower triangle"));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| err(1, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(SparseError::Format(format!(
            "declared {nnz} entries, found {}",
            triplets.len()
        )));
    }
    SparseMatrix::from_triplets(&triplets, n, storage)
}
