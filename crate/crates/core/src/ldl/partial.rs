//! Triangular solves restricted to elimination-tree closures.
//!
//! For a Cholesky-structured `L`, the rows that `L^{-1} b` can touch are the
//! union of the etree paths from `struct(b)` to the root. Walking those paths
//! gives the closure in topological (ascending) order without a general
//! graph search.

use super::{FactorError, LdlFactorization};

/// Caller-owned scratch for partial solves; sized once per factor.
#[derive(Debug, Clone)]
pub struct Workspace {
    x: Vec<f64>,
    mark: Vec<u32>,
    stamp: u32,
    nodes: Vec<usize>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Workspace {
            x: vec![0.0; n],
            mark: vec![0; n],
            stamp: 0,
            nodes: Vec::new(),
        }
    }

    pub fn for_factor(f: &LdlFactorization) -> Self {
        Self::new(f.n())
    }

    fn ensure(&mut self, n: usize) {
        if self.x.len() != n {
            *self = Workspace::new(n);
        }
    }

    fn next_stamp(&mut self) -> u32 {
        if self.stamp == u32::MAX {
            self.mark.fill(0);
            self.stamp = 0;
        }
        self.stamp += 1;
        self.stamp
    }
}

/// A sparse column in factor ordering, indices strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseColumn {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseColumn {
    /// Builds a column from unsorted pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut col = SparseColumn::default();
        for (i, v) in pairs {
            if col.idx.last() == Some(&i) {
                *col.val.last_mut().unwrap() += v;
            } else {
                col.idx.push(i);
                col.val.push(v);
            }
        }
        col
    }

    pub fn unit(i: usize) -> Self {
        SparseColumn {
            idx: vec![i],
            val: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i] = v;
        }
        out
    }
}

/// Union of etree paths from a seed set, in factor ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureSet {
    /// Closure nodes, ascending (a topological order for `L`).
    pub nodes: Vec<usize>,
    /// Seeds in factor ordering, in the order they were supplied.
    pub seeds: Vec<usize>,
    /// `sum over nodes of |L_{*k}|`, unit diagonal included.
    pub rho: usize,
}

impl ClosureSet {
    pub fn contains(&self, k: usize) -> bool {
        self.nodes.binary_search(&k).is_ok()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl LdlFactorization {
    /// Closure of `indices` (original numbering) in `G(L)`.
    pub fn closure(&self, indices: &[usize]) -> Result<ClosureSet, FactorError> {
        let mut ws = Workspace::for_factor(self);
        self.closure_with(indices, &mut ws)
    }

    pub fn closure_with(&self, indices: &[usize], ws: &mut Workspace) -> Result<ClosureSet, FactorError> {
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(FactorError::IndexOutOfRange { index: bad, n });
        }
        let seeds: Vec<usize> = indices.iter().map(|&i| self.perm.new_of(i)).collect();
        self.closure_of_permuted(seeds, ws)
    }

    /// Closure of seeds already expressed in factor ordering.
    pub fn closure_of_permuted(&self, seeds: Vec<usize>, ws: &mut Workspace) -> Result<ClosureSet, FactorError> {
        if seeds.is_empty() {
            return Err(FactorError::EmptySeedSet);
        }
        ws.ensure(self.n());
        self.reach(&seeds, ws);
        let nodes = std::mem::take(&mut ws.nodes);
        let rho = nodes.iter().map(|&k| self.column_size(k)).sum();
        Ok(ClosureSet { nodes, seeds, rho })
    }

    /// Fills `ws.nodes` with the sorted etree-path union of `seeds`.
    fn reach(&self, seeds: &[usize], ws: &mut Workspace) {
        let stamp = ws.next_stamp();
        ws.nodes.clear();
        for &s in seeds {
            let mut k = s;
            loop {
                if ws.mark[k] == stamp {
                    break;
                }
                ws.mark[k] = stamp;
                ws.nodes.push(k);
                match self.etree.parent(k) {
                    Some(p) => k = p,
                    None => break,
                }
            }
        }
        ws.nodes.sort_unstable();
    }

    /// Solves `L X = rhs` for sparse columns supported inside `closure`.
    ///
    /// Each output column is supported on the reach of its own right-hand
    /// side (a subset of `closure.nodes`); no row outside that reach is read
    /// or written.
    pub fn partial_forward_solve(
        &self,
        rhs: &[SparseColumn],
        closure: &ClosureSet,
        ws: &mut Workspace,
    ) -> Result<Vec<SparseColumn>, FactorError> {
        ws.ensure(self.n());
        let mut out = Vec::with_capacity(rhs.len());
        for col in rhs {
            if let Some(&row) = col.idx.iter().find(|&&i| !closure.contains(i)) {
                return Err(FactorError::SupportViolation { row });
            }
            if col.is_empty() {
                out.push(SparseColumn::default());
                continue;
            }
            self.reach(&col.idx, ws);
            let nodes = std::mem::take(&mut ws.nodes);
            let val = self.forward_over(&nodes, col, ws);
            out.push(SparseColumn { idx: nodes, val });
        }
        Ok(out)
    }

    /// Forward substitution over a closed node list; returns values aligned to `nodes`.
    pub(crate) fn forward_over(&self, nodes: &[usize], rhs: &SparseColumn, ws: &mut Workspace) -> Vec<f64> {
        for (&i, &v) in rhs.idx.iter().zip(&rhs.val) {
            ws.x[i] += v;
        }
        for &k in nodes {
            let xk = ws.x[k];
            if xk != 0.0 {
                let (rows, vals) = self.l.column(k);
                for (&i, &l) in rows.iter().zip(vals) {
                    ws.x[i] -= l * xk;
                }
            }
        }
        nodes
            .iter()
            .map(|&k| std::mem::take(&mut ws.x[k]))
            .collect()
    }

    /// Components at `wanted` (original numbering) of `L^T y = rhs`.
    ///
    /// Only nodes of `closure` are visited, in descending order; `rhs` must be
    /// supported on the closure and `closure` must contain every wanted index.
    pub fn partial_backward_solve(
        &self,
        rhs: &SparseColumn,
        closure: &ClosureSet,
        wanted: &[usize],
        ws: &mut Workspace,
    ) -> Result<Vec<f64>, FactorError> {
        ws.ensure(self.n());
        let n = self.n();
        let mut targets = Vec::with_capacity(wanted.len());
        for &w in wanted {
            if w >= n {
                return Err(FactorError::IndexOutOfRange { index: w, n });
            }
            let k = self.perm.new_of(w);
            if !closure.contains(k) {
                return Err(FactorError::SupportViolation { row: k });
            }
            targets.push(k);
        }
        if let Some(&row) = rhs.idx.iter().find(|&&i| !closure.contains(i)) {
            return Err(FactorError::SupportViolation { row });
        }
        let values = self.backward_over(&closure.nodes, rhs, ws);
        Ok(targets
            .iter()
            .map(|k| values[closure.nodes.binary_search(k).expect("checked above")])
            .collect())
    }

    /// Backward substitution over a closed node list; returns values aligned to `nodes`.
    pub(crate) fn backward_over(&self, nodes: &[usize], rhs: &SparseColumn, ws: &mut Workspace) -> Vec<f64> {
        for (&i, &v) in rhs.idx.iter().zip(&rhs.val) {
            ws.x[i] += v;
        }
        for &k in nodes.iter().rev() {
            let (rows, vals) = self.l.column(k);
            let s: f64 = rows.iter().zip(vals).map(|(&i, &l)| l * ws.x[i]).sum();
            ws.x[k] -= s;
        }
        nodes
            .iter()
            .map(|&k| std::mem::take(&mut ws.x[k]))
            .collect()
    }

    /// `H^T A^{-1} H v` for the closure's seeds, touching only closure nodes.
    pub fn principal_inverse_apply(&self, closure: &ClosureSet, v: &[f64], ws: &mut Workspace) -> Vec<f64> {
        assert_eq!(v.len(), closure.seeds.len(), "one value per seed");
        ws.ensure(self.n());
        let rhs = SparseColumn {
            idx: closure.seeds.clone(),
            val: v.to_vec(),
        };
        let mut z = self.forward_over(&closure.nodes, &rhs, ws);
        for (zk, &k) in z.iter_mut().zip(&closure.nodes) {
            *zk /= self.d[k];
        }
        let scaled = SparseColumn {
            idx: closure.nodes.clone(),
            val: z,
        };
        let y = self.backward_over(&closure.nodes, &scaled, ws);
        closure
            .seeds
            .iter()
            .map(|s| y[closure.nodes.binary_search(s).expect("seed lies in its closure")])
            .collect()
    }
}
