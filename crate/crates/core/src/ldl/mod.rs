//! Sparse `P^T A P = L D L^T` with static 1x1 pivots.
//!
//! The numeric phase is the up-looking row algorithm: row `k` of `L` is the
//! solution of a sparse triangular system whose pattern is the row subtree of
//! `k` in the elimination tree. `L` is stored by columns with the unit
//! diagonal implied.

mod order;
mod partial;

pub use order::fill_reducing_order;
pub use partial::{ClosureSet, SparseColumn, Workspace};

use std::fmt::Write as _;

use thiserror::Error;

use crate::sparse::{Permutation, SparseError, SparseMatrix, Storage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("zero pivot at column {col} (|d| = {value:e} <= {tol:e})")]
    ZeroPivot { col: usize, value: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("closure requires a nonempty seed set")]
    EmptySeedSet,
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("right-hand side touches row {row}, which lies outside the closure")]
    SupportViolation { row: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Relative pivot threshold: `|d_j| <= PIVOT_RTOL * max|diag(A)|` is a zero pivot.
pub const PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EliminationTree {
    parent: Vec<Option<usize>>,
    postorder: Vec<usize>,
}

impl EliminationTree {
    fn new(parent: Vec<Option<usize>>) -> Self {
        let n = parent.len();
        let mut head = vec![usize::MAX; n];
        let mut next = vec![usize::MAX; n];
        // Children are linked in increasing order by pushing in reverse.
        for j in (0..n).rev() {
            if let Some(p) = parent[j] {
                next[j] = head[p];
                head[p] = j;
            }
        }
        let mut postorder = Vec::with_capacity(n);
        let mut stack = Vec::new();
        for root in (0..n).filter(|&j| parent[j].is_none()) {
            stack.push(root);
            while let Some(&top) = stack.last() {
                let child = head[top];
                if child == usize::MAX {
                    stack.pop();
                    postorder.push(top);
                } else {
                    head[top] = next[child];
                    stack.push(child);
                }
            }
        }
        EliminationTree { parent, postorder }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parent[j]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn postorder(&self) -> &[usize] {
        &self.postorder
    }

    pub fn is_root(&self, j: usize) -> bool {
        self.parent[j].is_none()
    }

    /// Nodes on the path from `j` up to its root, `j` first.
    pub fn path_to_root(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(Some(j), move |&k| self.parent[k])
    }
}

#[derive(Debug, Clone)]
pub struct SymbolicAnalysis {
    pub etree: EliminationTree,
    /// Off-diagonal nonzero count of each column of `L`.
    pub col_counts: Vec<usize>,
}

impl SymbolicAnalysis {
    pub fn nnz_l(&self) -> usize {
        self.col_counts.iter().sum()
    }
}

/// Upper triangle of `P^T A P`, by columns, with row indices sorted.
struct PermutedUpper {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn permuted_upper(a: &SparseMatrix, p: &Permutation) -> PermutedUpper {
    let n = a.n();
    let inv = p.inverse_map();
    let keep = |i: usize, j: usize| match a.storage() {
        Storage::Lower => true,
        Storage::Full => inv[i] <= inv[j],
    };
    let mut counts = vec![0usize; n + 1];
    for (i, j, _) in a.entries() {
        if keep(i, j) {
            let c = inv[i].max(inv[j]);
            counts[c + 1] += 1;
        }
    }
    for j in 0..n {
        counts[j + 1] += counts[j];
    }
    let nnz = counts[n];
    let mut next = counts.clone();
    let mut row_idx = vec![0; nnz];
    let mut values = vec![0.0; nnz];
    for (i, j, v) in a.entries() {
        if keep(i, j) {
            let (r, c) = (inv[i].min(inv[j]), inv[i].max(inv[j]));
            row_idx[next[c]] = r;
            values[next[c]] = v;
            next[c] += 1;
        }
    }
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let range = counts[j]..counts[j + 1];
        pairs.clear();
        pairs.extend(range.clone().map(|t| (row_idx[t], values[t])));
        pairs.sort_by_key(|&(r, _)| r);
        for (t, &(r, v)) in range.zip(&pairs) {
            row_idx[t] = r;
            values[t] = v;
        }
    }
    PermutedUpper {
        col_ptr: counts,
        row_idx,
        values,
    }
}

fn symbolic_from_upper(n: usize, upper: &PermutedUpper) -> SymbolicAnalysis {
    let mut parent = vec![None; n];
    let mut flag = vec![usize::MAX; n];
    let mut counts = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for &row in &upper.row_idx[upper.col_ptr[k]..upper.col_ptr[k + 1]] {
            let mut i = row;
            // Walk the row subtree of k up to the first node already flagged.
            while i < k && flag[i] != k {
                if parent[i].is_none() {
                    parent[i] = Some(k);
                }
                counts[i] += 1;
                flag[i] = k;
                i = parent[i].expect("set above");
            }
        }
    }
    SymbolicAnalysis {
        etree: EliminationTree::new(parent),
        col_counts: counts,
    }
}

/// Elimination tree and column counts of `L` for `P^T A P`.
pub fn symbolic_analyze(a: &SparseMatrix, p: &Permutation) -> Result<SymbolicAnalysis, FactorError> {
    check_perm(a, p)?;
    Ok(symbolic_from_upper(a.n(), &permuted_upper(a, p)))
}

fn check_perm(a: &SparseMatrix, p: &Permutation) -> Result<(), FactorError> {
    if p.len() != a.n() {
        return Err(FactorError::DimensionMismatch {
            expected: a.n(),
            got: p.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LdlFactorization {
    perm: Permutation,
    l: SparseMatrix,
    d: Vec<f64>,
    etree: EliminationTree,
}

/// Factors `P^T A P = L D L^T` in the given order.
pub fn factorize(a: &SparseMatrix, p: &Permutation) -> Result<LdlFactorization, FactorError> {
    check_perm(a, p)?;
    let n = a.n();
    let upper = permuted_upper(a, p);
    let symbolic = symbolic_from_upper(n, &upper);
    let tol = PIVOT_RTOL * a.max_abs_diag();

    let mut lp = vec![0usize; n + 1];
    for j in 0..n {
        lp[j + 1] = lp[j] + symbolic.col_counts[j];
    }
    let nnz = lp[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![0.0; nnz];
    let mut lnz = vec![0usize; n];
    let mut d = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut pattern = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    let parent = symbolic.etree.parents();

    for k in 0..n {
        y[k] = 0.0;
        let mut top = n;
        flag[k] = k;
        for t in upper.col_ptr[k]..upper.col_ptr[k + 1] {
            let mut i = upper.row_idx[t];
            y[i] += upper.values[t];
            let mut len = 0;
            while flag[i] != k {
                pattern[len] = i;
                len += 1;
                flag[i] = k;
                i = parent[i].expect("row subtree stays below k");
            }
            while len > 0 {
                top -= 1;
                len -= 1;
                pattern[top] = pattern[len];
            }
        }
        d[k] = y[k];
        y[k] = 0.0;
        for &i in &pattern[top..n] {
            let yi = y[i];
            y[i] = 0.0;
            let end = lp[i] + lnz[i];
            for t in lp[i]..end {
                y[li[t]] -= lx[t] * yi;
            }
            let l_ki = yi / d[i];
            d[k] -= l_ki * yi;
            li[end] = k;
            lx[end] = l_ki;
            lnz[i] += 1;
        }
        if !(d[k].abs() > tol) {
            return Err(FactorError::ZeroPivot {
                col: k,
                value: d[k],
                tol,
            });
        }
    }

    let l = SparseMatrix::from_csc(n, lp, li, lx, Storage::Full)?;
    Ok(LdlFactorization {
        perm: p.clone(),
        l,
        d,
        etree: symbolic.etree,
    })
}

impl LdlFactorization {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    /// Strictly lower part of `L`; the unit diagonal is implied.
    pub fn l(&self) -> &SparseMatrix {
        &self.l
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn etree(&self) -> &EliminationTree {
        &self.etree
    }

    /// Stored off-diagonal entries of `L`.
    pub fn nnz_l(&self) -> usize {
        self.l.nnz()
    }

    /// `|L_{*k}|` counting the unit diagonal.
    pub fn column_size(&self, k: usize) -> usize {
        self.l.col_ptr()[k + 1] - self.l.col_ptr()[k] + 1
    }

    /// In-place `L z = r` over the whole factor (permuted frame).
    pub fn forward_in_place(&self, z: &mut [f64]) {
        for k in 0..self.n() {
            let zk = z[k];
            if zk != 0.0 {
                let (rows, vals) = self.l.column(k);
                for (&i, &v) in rows.iter().zip(vals) {
                    z[i] -= v * zk;
                }
            }
        }
    }

    /// In-place `L^T z = r` over the whole factor (permuted frame).
    pub fn backward_in_place(&self, z: &mut [f64]) {
        for k in (0..self.n()).rev() {
            let (rows, vals) = self.l.column(k);
            let s: f64 = rows.iter().zip(vals).map(|(&i, &v)| v * z[i]).sum();
            z[k] -= s;
        }
    }

    /// Solves `A x = b` in the original numbering.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, FactorError> {
        if b.len() != self.n() {
            return Err(FactorError::DimensionMismatch {
                expected: self.n(),
                got: b.len(),
            });
        }
        let mut z = self.perm.apply_transpose(b);
        self.forward_in_place(&mut z);
        for (zi, di) in z.iter_mut().zip(&self.d) {
            *zi /= di;
        }
        self.backward_in_place(&mut z);
        Ok(self.perm.apply(&z))
    }

    /// Text dump, one line per column: `col parent d nnz row:value ...`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# n={} nnz_l={}", self.n(), self.nnz_l());
        for k in 0..self.n() {
            let parent = self
                .etree
                .parent(k)
                .map_or_else(|| "root".to_string(), |p| p.to_string());
            let (rows, vals) = self.l.column(k);
            let _ = write!(out, "{k} {parent} {:.17e} {}", self.d[k], rows.len());
            for (i, v) in rows.iter().zip(vals) {
                let _ = write!(out, " {i}:{v:.17e}");
            }
            out.push('\n');
        }
        out
    }
}
