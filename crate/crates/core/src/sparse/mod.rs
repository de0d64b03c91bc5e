//! Compressed sparse column storage for symmetric systems.
//!
//! Symmetric matrices are normally kept lower-triangle-only; every consumer
//! in this crate expands the missing upper triangle on the fly.

mod dense;
pub mod market;
mod perm;

pub use dense::{DenseLu, DenseMatrix};
pub use perm::Permutation;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) is outside a {n}x{n} matrix")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index set must be strictly increasing (violation at position {0})")]
    UnsortedIndices(usize),
    #[error("index {index} out of range for dimension {n}")]
    IndexSetOutOfRange { index: usize, n: usize },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("matrix is singular (pivot {pivot} in column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("matrix market: {0}")]
    Format(String),
}

/// How the stored entries of a [`SparseMatrix`] are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Storage {
    /// Every nonzero is stored explicitly; no symmetric expansion.
    Full,
    /// Only entries with `row >= col` are stored; the upper triangle is implied.
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    storage: Storage,
}

impl SparseMatrix {
    /// Assembles a matrix from `(row, col, value)` triplets.
    ///
    /// Duplicates are summed. In [`Storage::Lower`] mode an entry above the
    /// diagonal is folded onto its mirror below it, so each off-diagonal
    /// pair should be supplied once.
    pub fn from_triplets(
        entries: &[(usize, usize, f64)],
        n: usize,
        storage: Storage,
    ) -> Result<Self, SparseError> {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, v) in entries {
            if r >= n || c >= n {
                return Err(SparseError::IndexOutOfRange { row: r, col: c, n });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row: r, col: c });
            }
            let (_, c) = fold(r, c, storage);
            counts[c + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            let (r, c) = fold(r, c, storage);
            let slot = next[c];
            rows[slot] = r;
            vals[slot] = v;
            next[c] += 1;
        }

        // Sort each column and merge duplicates.
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            scratch.clear();
            scratch.extend((counts[j]..counts[j + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|&(r, _)| r);
            for &(r, v) in &scratch {
                if row_idx.len() > *col_ptr.last().unwrap() && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseMatrix {
            n,
            col_ptr,
            row_idx,
            values,
            storage,
        })
    }

    /// Builds a matrix from raw CSC arrays, checking every invariant.
    pub fn from_csc(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
        storage: Storage,
    ) -> Result<Self, SparseError> {
        let bad = |msg: &str| SparseError::Format(msg.to_string());
        if col_ptr.len() != n + 1 || col_ptr[0] != 0 || col_ptr[n] != row_idx.len() {
            return Err(bad("column pointer array is inconsistent"));
        }
        if row_idx.len() != values.len() {
            return Err(bad("row index and value arrays differ in length"));
        }
        for j in 0..n {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(bad("column pointers decrease"));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            for (t, &r) in rows.iter().enumerate() {
                if r >= n {
                    return Err(SparseError::IndexOutOfRange { row: r, col: j, n });
                }
                if t > 0 && rows[t - 1] >= r {
                    return Err(bad("row indices not strictly increasing within a column"));
                }
                if storage == Storage::Lower && r < j {
                    return Err(bad("upper-triangle entry in lower-only storage"));
                }
                if !values[col_ptr[j] + t].is_finite() {
                    return Err(SparseError::NonFinite { row: r, col: j });
                }
            }
        }
        Ok(SparseMatrix {
            n,
            col_ptr,
            row_idx,
            values,
            storage,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
            storage: Storage::Lower,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices and values stored in column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    /// Iterates every stored entry as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    /// Iterates the entries of the symmetric expansion (both triangles).
    pub fn symmetric_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let lower = self.storage == Storage::Lower;
        self.entries().flat_map(move |(i, j, v)| {
            let mirror = (lower && i != j).then_some((j, i, v));
            std::iter::once((i, j, v)).chain(mirror)
        })
    }

    /// Value at `(i, j)`, honouring the storage mode.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = match self.storage {
            Storage::Lower if i < j => (j, i),
            _ => (i, j),
        };
        let (rows, vals) = self.column(j);
        rows.binary_search(&i).map_or(0.0, |p| vals[p])
    }

    /// `y = A x`, expanding the upper triangle in lower-only mode.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            let xj = x[j];
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
                if self.storage == Storage::Lower && i != j {
                    y[j] += v * x[i];
                }
            }
        }
        Ok(y)
    }

    /// Returns `P^T A P` in the same storage mode.
    pub fn permute_symmetric(&self, p: &Permutation) -> Result<SparseMatrix, SparseError> {
        if p.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                expected: self.n,
                got: p.len(),
            });
        }
        let inv = p.inverse_map();
        let triplets: Vec<_> = self
            .entries()
            .map(|(i, j, v)| (inv[i], inv[j], v))
            .collect();
        SparseMatrix::from_triplets(&triplets, self.n, self.storage)
    }

    /// Dense `H^T A H` for the sorted index set `indices`.
    pub fn extract_principal_submatrix(&self, indices: &[usize]) -> Result<DenseMatrix, SparseError> {
        check_index_set(indices, self.n)?;
        let m = indices.len();
        let mut out = DenseMatrix::zeros(m, m);
        for (b, &j) in indices.iter().enumerate() {
            for (a, &i) in indices.iter().enumerate() {
                out[(a, b)] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Expands to a dense matrix. Intended for small instances.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.symmetric_entries() {
            out[(i, j)] += v;
        }
        out
    }

    /// Frobenius norm of the (expanded) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.symmetric_entries()
            .map(|(_, _, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute diagonal entry.
    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|j| self.get(j, j).abs()).fold(0.0, f64::max)
    }
}

fn fold(r: usize, c: usize, storage: Storage) -> (usize, usize) {
    match storage {
        Storage::Lower if r < c => (c, r),
        _ => (r, c),
    }
}

/// Checks that `indices` is strictly increasing and within `0..n`.
pub fn check_index_set(indices: &[usize], n: usize) -> Result<(), SparseError> {
    for (t, &i) in indices.iter().enumerate() {
        if i >= n {
            return Err(SparseError::IndexSetOutOfRange { index: i, n });
        }
        if t > 0 && indices[t - 1] >= i {
            return Err(SparseError::UnsortedIndices(t));
        }
    }
    Ok(())
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn a3() -> SparseMatrix {
        SparseMatrix::from_triplets(
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 2, 2.0)],
            3,
            Storage::Lower,
        )
        .unwrap()
    }

    #[test]
    fn triplets_fold_into_lower_triangle() {
        let a = a3();
        assert_eq!(a.col_ptr(), &[0, 2, 4, 5]);
        assert_eq!(a.row_idx(), &[0, 1, 1, 2, 2]);
        let dense = a.to_dense();
        let expect = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dense[(i, j)], expect[i][j]);
            }
        }
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(&[(0, 0, 2.0), (0, 0, 2.0)], 1, Storage::Lower).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.values(), &[4.0]);
    }

    #[test]
    fn out_of_range_and_nonfinite_rejected() {
        let err = SparseMatrix::from_triplets(&[(3, 0, 1.0)], 3, Storage::Lower).unwrap_err();
        assert_eq!(err, SparseError::IndexOutOfRange { row: 3, col: 0, n: 3 });
        let err = SparseMatrix::from_triplets(&[(0, 0, f64::NAN)], 3, Storage::Lower).unwrap_err();
        assert!(matches!(err, SparseError::NonFinite { .. }));
    }

    #[test]
    fn matvec_examples() {
        let a = a3();
        assert_eq!(a.matvec(&[1.0, 0.0, 0.0]).unwrap(), vec![4.0, 1.0, 0.0]);
        let y = a.matvec(&[2.0 / 9.0, 1.0 / 9.0, 13.0 / 9.0]).unwrap();
        for (got, want) in y.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let x = [0.3, -1.0, 7.0];
        assert_eq!(SparseMatrix::identity(3).matvec(&x).unwrap(), x.to_vec());
        assert!(matches!(
            a.matvec(&[1.0]),
            Err(SparseError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn full_storage_matches_lower() {
        let full = SparseMatrix::from_triplets(
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 2, 2.0),
            ],
            3,
            Storage::Full,
        )
        .unwrap();
        let x = [1.5, -2.0, 0.25];
        assert_eq!(full.matvec(&x).unwrap(), a3().matvec(&x).unwrap());
        assert_eq!(full.to_dense(), a3().to_dense());
    }

    #[test]
    fn permutation_examples() {
        let a = a3();
        let id = a.permute_symmetric(&Permutation::identity(3)).unwrap();
        assert_eq!(id, a);
        let rev = Permutation::reversal(3);
        let once = a.permute_symmetric(&rev).unwrap();
        assert_eq!(once.get(0, 0), 2.0);
        assert_eq!(once.get(2, 2), 4.0);
        assert_eq!(once.permute_symmetric(&rev).unwrap(), a);
    }

    #[test]
    fn principal_submatrix_examples() {
        let a = a3();
        assert_eq!(a.extract_principal_submatrix(&[0]).unwrap().data(), &[4.0]);
        assert_eq!(
            a.extract_principal_submatrix(&[0, 2]).unwrap().data(),
            &[4.0, 0.0, 0.0, 2.0]
        );
        assert_eq!(
            a.extract_principal_submatrix(&[1, 2]).unwrap().data(),
            &[3.0, 1.0, 1.0, 2.0]
        );
        assert!(matches!(
            a.extract_principal_submatrix(&[2, 1]),
            Err(SparseError::UnsortedIndices(1))
        ));
        assert!(matches!(
            a.extract_principal_submatrix(&[1, 1]),
            Err(SparseError::UnsortedIndices(1))
        ));
    }

    #[test]
    fn from_csc_validates() {
        assert!(SparseMatrix::from_csc(2, vec![0, 1, 2], vec![1, 1], vec![1.0, 1.0], Storage::Lower).is_ok());
        assert!(SparseMatrix::from_csc(2, vec![0, 1, 2], vec![0, 0], vec![1.0, 1.0], Storage::Lower).is_err());
        assert!(SparseMatrix::from_csc(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0], Storage::Full).is_err());
    }
}
