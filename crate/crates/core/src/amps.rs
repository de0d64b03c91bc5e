//! Solution updates for `Â = A - H E H^T` from a factorization of `A`.
//!
//! With `A = L D L^T` as a block pivot, the augmented system
//!
//! ```text
//! [ A     AH  H ] [x1]   [ b      ]
//! [ H^T A C   0 ] [x2] = [ H^T b̂ ]
//! [ H^T   0   0 ] [x3]   [ 0      ]
//! ```
//!
//! reduces to the symmetric `S1 = [[E, I], [I, H^T A^{-1} H]]` (solved here
//! with GMRES) or, pivoting on the off-diagonal identity block, to
//! `S2 = E H^T A^{-1} H - I` (factored densely). Either way only `x3` is
//! needed: `x̂ = A^{-1} b - A^{-1} H x3`.

use std::cell::Cell;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmres::{gmres, GmresError, GmresOptions, LinearOperator};
use crate::ldl::{ClosureSet, FactorError, LdlFactorization, SparseColumn, Workspace};
use crate::sparse::{check_index_set, norm2, DenseLu, DenseMatrix, SparseError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmpsError {
    #[error("Schur complement S2 is singular (pivot {pivot:e} at column {col}); the updated matrix is singular")]
    SingularSchur { col: usize, pivot: f64 },
    #[error("GMRES did not converge in {max_it} iterations (relative residual {residual:e})")]
    NoConvergence {
        max_it: usize,
        residual: f64,
        /// Solution recovered from the best Krylov iterate.
        best: Vec<f64>,
    },
    #[error("S1 operator is singular (Krylov breakdown after {iterations} iterations)")]
    SingularOperator { iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("update is invalid: {0}")]
    InvalidUpdate(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Principal-submatrix update: a sorted index set and a symmetric `m x m` block.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSpec {
    indices: Vec<usize>,
    e: DenseMatrix,
}

impl UpdateSpec {
    /// `e` is symmetrized as `(E + E^T) / 2`.
    pub fn new(indices: Vec<usize>, e: DenseMatrix) -> Result<Self, AmpsError> {
        let m = indices.len();
        if m == 0 {
            return Err(AmpsError::InvalidUpdate("index set is empty".into()));
        }
        if e.rows() != m || e.cols() != m {
            return Err(AmpsError::InvalidUpdate(format!(
                "E is {}x{} but the index set has {m} entries",
                e.rows(),
                e.cols()
            )));
        }
        check_index_set(&indices, usize::MAX)?;
        if e.data().iter().any(|v| !v.is_finite()) {
            return Err(AmpsError::InvalidUpdate("E has non-finite entries".into()));
        }
        Ok(UpdateSpec {
            indices,
            e: e.symmetrized(),
        })
    }

    /// The zero update on `indices`.
    pub fn zero(indices: Vec<usize>) -> Result<Self, AmpsError> {
        let m = indices.len();
        Self::new(indices, DenseMatrix::zeros(m, m))
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn e(&self) -> &DenseMatrix {
        &self.e
    }

    /// `C = H^T A H - E`, the new principal block.
    pub fn updated_block(&self, a: &SparseMatrix) -> Result<DenseMatrix, AmpsError> {
        Ok(a.extract_principal_submatrix(&self.indices)?.sub(&self.e))
    }

    /// `Â = A - H E H^T` as a new sparse matrix in the storage mode of `a`.
    pub fn apply_to(&self, a: &SparseMatrix) -> Result<SparseMatrix, AmpsError> {
        self.check_dim(a.n())?;
        let mut t: Vec<(usize, usize, f64)> = a.entries().collect();
        let lower = a.storage() == crate::sparse::Storage::Lower;
        for (r, &i) in self.indices.iter().enumerate() {
            for (c, &j) in self.indices.iter().enumerate() {
                let v = self.e[(r, c)];
                if v != 0.0 && (!lower || i >= j) {
                    t.push((i, j, -v));
                }
            }
        }
        Ok(SparseMatrix::from_triplets(&t, a.n(), a.storage())?)
    }

    fn check_dim(&self, n: usize) -> Result<(), AmpsError> {
        if let Some(&last) = self.indices.last() {
            if last >= n {
                return Err(AmpsError::InvalidUpdate(format!(
                    "index {last} out of range for dimension {n}"
                )));
            }
        }
        if self.m() == n {
            log::warn!("update touches all {n} rows; refactoring would be cheaper");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: SolveMethod,
    /// GMRES iterations; 0 for the direct path.
    pub iterations: usize,
    pub rho: usize,
    /// Relative residual of the reduced (S1 or S2) system.
    pub reduced_residual: f64,
    #[serde(with = "micros")]
    pub wall_time: Duration,
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e6)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let us = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(us.max(0.0) / 1e6))
    }
}

/// `W = E H^T A^{-1} H`, `S2 = W - I` and the partial-solve data used to build them.
#[derive(Debug, Clone)]
pub struct SchurSystem {
    pub closure: ClosureSet,
    /// `X = L^{-1} H E`, one sparse column per update index.
    pub x: Vec<SparseColumn>,
    /// `Y = L^{-1} H`.
    pub y: Vec<SparseColumn>,
    pub w: DenseMatrix,
    pub s2: DenseMatrix,
    lu: DenseLu,
}

/// Relative threshold on the pivots of `S2`, scaled by `||W||_inf + 1`.
pub const SCHUR_PIVOT_RTOL: f64 = 1e-12;

pub fn build_schur(f: &LdlFactorization, u: &UpdateSpec) -> Result<SchurSystem, AmpsError> {
    build_schur_with(f, u, &mut Workspace::for_factor(f))
}

pub fn build_schur_with(f: &LdlFactorization, u: &UpdateSpec, ws: &mut Workspace) -> Result<SchurSystem, AmpsError> {
    u.check_dim(f.n())?;
    let m = u.m();
    let closure = f.closure_with(u.indices(), ws)?;
    let seeds = &closure.seeds;

    // Ẽ = H E: column c carries E[., c] on the seed rows.
    let e_tilde: Vec<SparseColumn> = (0..m)
        .map(|c| {
            SparseColumn::from_pairs(
                (0..m)
                    .filter(|&r| u.e()[(r, c)] != 0.0)
                    .map(|r| (seeds[r], u.e()[(r, c)]))
                    .collect(),
            )
        })
        .collect();
    let h_cols: Vec<SparseColumn> = seeds.iter().map(|&s| SparseColumn::unit(s)).collect();
    let x = f.partial_forward_solve(&e_tilde, &closure, ws)?;
    let y = f.partial_forward_solve(&h_cols, &closure, ws)?;

    // W^T = Y^T D^{-1} X.
    let d = f.d();
    let mut w = DenseMatrix::zeros(m, m);
    for (i, yi) in y.iter().enumerate() {
        for (j, xj) in x.iter().enumerate() {
            w[(j, i)] = scaled_dot(yi, xj, d);
        }
    }
    let s2 = w.sub(&DenseMatrix::identity(m));
    let tol = SCHUR_PIVOT_RTOL * (w.norm_inf() + 1.0);
    let lu = s2.lu(tol).map_err(|e| match e {
        SparseError::Singular { col, pivot } => AmpsError::SingularSchur { col, pivot },
        other => AmpsError::Sparse(other),
    })?;
    Ok(SchurSystem {
        closure,
        x,
        y,
        w,
        s2,
        lu,
    })
}

/// `sum_k a_k b_k / d_k` over the common support of two sorted columns.
fn scaled_dot(a: &SparseColumn, b: &SparseColumn, d: &[f64]) -> f64 {
    let (mut p, mut q, mut s) = (0, 0, 0.0);
    while p < a.idx.len() && q < b.idx.len() {
        match a.idx[p].cmp(&b.idx[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                s += a.val[p] * b.val[q] / d[a.idx[p]];
                p += 1;
                q += 1;
            }
        }
    }
    s
}

/// The base solution and right-hand side the reduced systems are formed against.
///
/// The reduced right-hand sides only see `H^T (b - b̂)`. When `b̂` also differs
/// from `b` outside the update indices, the base is re-solved for `b̂`.
struct Base {
    x: Vec<f64>,
    /// `H^T x` on the update indices.
    x_s: Vec<f64>,
    /// `H^T (b - b̂)`.
    db_s: Vec<f64>,
}

fn base_for(
    f: &LdlFactorization,
    x_orig: &[f64],
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
) -> Result<Base, AmpsError> {
    let n = f.n();
    for v in [x_orig, b, b_hat] {
        if v.len() != n {
            return Err(AmpsError::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    let idx = u.indices();
    let mut outside = false;
    let mut pos = 0;
    for i in 0..n {
        if pos < idx.len() && idx[pos] == i {
            pos += 1;
        } else if b[i] != b_hat[i] {
            outside = true;
            break;
        }
    }
    if outside {
        let x = f.solve(b_hat)?;
        let x_s = idx.iter().map(|&i| x[i]).collect();
        Ok(Base {
            x,
            x_s,
            db_s: vec![0.0; idx.len()],
        })
    } else {
        Ok(Base {
            x: x_orig.to_vec(),
            x_s: idx.iter().map(|&i| x_orig[i]).collect(),
            db_s: idx.iter().map(|&i| b[i] - b_hat[i]).collect(),
        })
    }
}

impl SchurSystem {
    /// Solves `S2 x3 = E H^T x - H^T (b - b̂)` and recovers `x̂`.
    pub fn solve(
        &self,
        f: &LdlFactorization,
        x_orig: &[f64],
        u: &UpdateSpec,
        b: &[f64],
        b_hat: &[f64],
        ws: &mut Workspace,
    ) -> Result<(Vec<f64>, f64), AmpsError> {
        let base = base_for(f, x_orig, u, b, b_hat)?;
        let ex = u.e().matvec(&base.x_s);
        let rhs: Vec<f64> = ex.iter().zip(&base.db_s).map(|(a, d)| a - d).collect();
        let x3 = self.lu.solve(&rhs);
        let s2x3 = self.s2.matvec(&x3);
        let rhs_norm = norm2(&rhs);
        let residual = if rhs_norm == 0.0 {
            norm2(&s2x3)
        } else {
            norm2(&s2x3.iter().zip(&rhs).map(|(a, r)| a - r).collect::<Vec<_>>()) / rhs_norm
        };
        let xhat = recover_with(f, &base.x, &x3, &self.closure, ws);
        Ok((xhat, residual))
    }
}

/// AMPS direct path: build `S2` by partial solves, factor it, recover `x̂`.
pub fn solve_direct(
    f: &LdlFactorization,
    x_orig: &[f64],
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
) -> Result<(Vec<f64>, SolveReport), AmpsError> {
    solve_direct_with(f, x_orig, u, b, b_hat, &mut Workspace::for_factor(f))
}

pub fn solve_direct_with(
    f: &LdlFactorization,
    x_orig: &[f64],
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
    ws: &mut Workspace,
) -> Result<(Vec<f64>, SolveReport), AmpsError> {
    let start = Instant::now();
    let schur = build_schur_with(f, u, ws)?;
    let (xhat, residual) = schur.solve(f, x_orig, u, b, b_hat, ws)?;
    let report = SolveReport {
        method: SolveMethod::Direct,
        iterations: 0,
        rho: schur.closure.rho,
        reduced_residual: residual,
        wall_time: start.elapsed(),
    };
    Ok((xhat, report))
}

/// `S1 = [[E, I], [I, H^T A^{-1} H]]` applied matrix-free.
pub struct S1Operator<'a> {
    f: &'a LdlFactorization,
    e: &'a DenseMatrix,
    closure: ClosureSet,
    ws: &'a mut Workspace,
}

impl<'a> S1Operator<'a> {
    pub fn new(f: &'a LdlFactorization, u: &'a UpdateSpec, ws: &'a mut Workspace) -> Result<Self, AmpsError> {
        u.check_dim(f.n())?;
        let closure = f.closure_with(u.indices(), ws)?;
        Ok(S1Operator {
            f,
            e: u.e(),
            closure,
            ws,
        })
    }

    pub fn closure(&self) -> &ClosureSet {
        &self.closure
    }
}

impl LinearOperator for S1Operator<'_> {
    fn dim(&self) -> usize {
        2 * self.e.rows()
    }

    fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let m = self.e.rows();
        let (v2, v3) = v.split_at(m);
        let ev2 = self.e.matvec(v2);
        let gv3 = self.f.principal_inverse_apply(&self.closure, v3, self.ws);
        for i in 0..m {
            out[i] = ev2[i] + v3[i];
            out[m + i] = v2[i] + gv3[i];
        }
    }
}

/// Applies `S1` to a length-`2m` vector `[v2; v3]`.
pub fn s1_apply(f: &LdlFactorization, u: &UpdateSpec, v: &[f64]) -> Result<Vec<f64>, AmpsError> {
    let mut ws = Workspace::for_factor(f);
    let mut op = S1Operator::new(f, u, &mut ws)?;
    if v.len() != op.dim() {
        return Err(AmpsError::DimensionMismatch {
            expected: op.dim(),
            got: v.len(),
        });
    }
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out);
    Ok(out)
}

pub const DEFAULT_GMRES_TOL: f64 = 1e-12;

/// Default iteration cap, `4m`.
pub fn default_max_it(m: usize) -> usize {
    4 * m
}

/// AMPS hybrid path: GMRES on `S1 [x2; x3] = [H^T (b - b̂); H^T x]`, then recovery.
pub fn solve_iterative(
    f: &LdlFactorization,
    x_orig: &[f64],
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
    tol: f64,
    max_it: usize,
) -> Result<(Vec<f64>, SolveReport), AmpsError> {
    solve_iterative_with(f, x_orig, u, b, b_hat, tol, max_it, &mut Workspace::for_factor(f))
}

#[allow(clippy::too_many_arguments)]
pub fn solve_iterative_with(
    f: &LdlFactorization,
    x_orig: &[f64],
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
    tol: f64,
    max_it: usize,
    ws: &mut Workspace,
) -> Result<(Vec<f64>, SolveReport), AmpsError> {
    if !(tol > 0.0) {
        return Err(AmpsError::InvalidUpdate(format!("GMRES tolerance must be positive, got {tol}")));
    }
    let start = Instant::now();
    let base = base_for(f, x_orig, u, b, b_hat)?;
    let m = u.m();
    let rhs: Vec<f64> = base.db_s.iter().chain(&base.x_s).copied().collect();
    let mut op = S1Operator::new(f, u, ws)?;
    let outcome = gmres(&mut op, &rhs, GmresOptions { tol, max_iter: max_it });
    let closure = op.closure.clone();
    match outcome {
        Ok(out) => {
            let xhat = recover_with(f, &base.x, &out.x[m..], &closure, ws);
            let report = SolveReport {
                method: SolveMethod::Iterative,
                iterations: out.iterations,
                rho: closure.rho,
                reduced_residual: out.residual,
                wall_time: start.elapsed(),
            };
            Ok((xhat, report))
        }
        Err(GmresError::NoConvergence { residual, best, .. }) => {
            let best = recover_with(f, &base.x, &best[m..], &closure, ws);
            Err(AmpsError::NoConvergence { max_it, residual, best })
        }
        Err(GmresError::Breakdown { iterations }) => Err(AmpsError::SingularOperator { iterations }),
        Err(GmresError::DimensionMismatch { expected, got }) => {
            Err(AmpsError::DimensionMismatch { expected, got })
        }
    }
}

/// `x̂ = x - A^{-1} H x3`: partial forward solve, diagonal scale, full back substitution.
pub fn recover_solution(
    f: &LdlFactorization,
    x_orig: &[f64],
    x3: &[f64],
    indices: &[usize],
) -> Result<Vec<f64>, AmpsError> {
    let n = f.n();
    if x_orig.len() != n {
        return Err(AmpsError::DimensionMismatch {
            expected: n,
            got: x_orig.len(),
        });
    }
    if x3.len() != indices.len() {
        return Err(AmpsError::DimensionMismatch {
            expected: indices.len(),
            got: x3.len(),
        });
    }
    let mut ws = Workspace::for_factor(f);
    let closure = f.closure_with(indices, &mut ws)?;
    Ok(recover_with(f, x_orig, x3, &closure, &mut ws))
}

thread_local! {
    static FLIP_RECOVERY_SIGN: Cell<bool> = const { Cell::new(false) };
}

/// Runs `body` with the recovery correction sign flipped on this thread.
/// Used by the self-test to prove that its agreement suite catches a broken engine.
pub(crate) fn with_recovery_fault<R>(body: impl FnOnce() -> R) -> R {
    struct Reset;
    impl Drop for Reset {
        fn drop(&mut self) {
            FLIP_RECOVERY_SIGN.with(|c| c.set(false));
        }
    }
    FLIP_RECOVERY_SIGN.with(|c| c.set(true));
    let _reset = Reset;
    body()
}

fn recover_with(
    f: &LdlFactorization,
    x_orig: &[f64],
    x3: &[f64],
    closure: &ClosureSet,
    ws: &mut Workspace,
) -> Vec<f64> {
    let rhs = SparseColumn {
        idx: closure.seeds.clone(),
        val: x3.to_vec(),
    };
    let z = f.forward_over(&closure.nodes, &rhs, ws);
    let mut y = vec![0.0; f.n()];
    for (&k, zk) in closure.nodes.iter().zip(z) {
        y[k] = zk / f.d()[k];
    }
    f.backward_in_place(&mut y);
    let sign = if FLIP_RECOVERY_SIGN.with(Cell::get) { 1.0 } else { -1.0 };
    let perm = f.perm();
    let mut xhat = x_orig.to_vec();
    for (k, yk) in y.into_iter().enumerate() {
        xhat[perm.old(k)] += sign * yk;
    }
    xhat
}
