//! Dense reference computations for checking the sparse update engine.
//!
//! Everything here is `O(n^3)` and intended for small systems only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amps::{AmpsError, S1Operator, UpdateSpec};
use crate::gmres::LinearOperator;
use crate::ldl::{LdlFactorization, Workspace};
use crate::sparse::{DenseMatrix, SparseError, SparseMatrix};

fn singular(e: SparseError) -> AmpsError {
    match e {
        SparseError::Singular { col, pivot } => AmpsError::SingularSchur { col, pivot },
        other => AmpsError::Sparse(other),
    }
}

fn check_lengths(n: usize, u: &UpdateSpec, vs: &[&[f64]]) -> Result<(), AmpsError> {
    if let Some(&last) = u.indices().last() {
        if last >= n {
            return Err(AmpsError::InvalidUpdate(format!("index {last} out of range for dimension {n}")));
        }
    }
    for v in vs {
        if v.len() != n {
            return Err(AmpsError::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Returns `b` unless `b̂` differs from it outside the update indices, in which case `b̂`.
fn effective_b<'a>(u: &UpdateSpec, b: &'a [f64], b_hat: &'a [f64]) -> &'a [f64] {
    let idx = u.indices();
    let outside = (0..b.len()).any(|i| idx.binary_search(&i).is_err() && b[i] != b_hat[i]);
    if outside {
        b_hat
    } else {
        b
    }
}

/// Sherman-Morrison-Woodbury:
/// `x̂ = A^{-1} b - A^{-1} H (E H^T A^{-1} H - I)^{-1} [E H^T A^{-1} b - H^T (b - b̂)]`.
pub fn smw_solve(a: &DenseMatrix, u: &UpdateSpec, b: &[f64], b_hat: &[f64]) -> Result<Vec<f64>, AmpsError> {
    let n = a.rows();
    check_lengths(n, u, &[b, b_hat])?;
    let b = effective_b(u, b, b_hat);
    let idx = u.indices();
    let m = idx.len();
    let x = a.solve(b).map_err(singular)?;
    // A^{-1} H, column by column.
    let mut ainv_h = DenseMatrix::zeros(n, m);
    for (c, &s) in idx.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[s] = 1.0;
        let col = a.solve(&e).map_err(singular)?;
        for (r, v) in col.into_iter().enumerate() {
            ainv_h[(r, c)] = v;
        }
    }
    let mut g = DenseMatrix::zeros(m, m);
    for (r, &s) in idx.iter().enumerate() {
        for c in 0..m {
            g[(r, c)] = ainv_h[(s, c)];
        }
    }
    let inner = u.e().matmul(&g).sub(&DenseMatrix::identity(m));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ex = u.e().matvec(&xs);
    let rhs: Vec<f64> = ex.iter().zip(idx).map(|(v, &i)| v - (b[i] - b_hat[i])).collect();
    let t = inner.solve(&rhs).map_err(singular)?;
    let corr = ainv_h.matvec(&t);
    Ok(x.iter().zip(corr).map(|(xi, ci)| xi - ci).collect())
}

/// Which block to place in the rows of `J` selected by the update indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum J1Choice {
    /// `J1 = A11`, so that `J = AH`.
    A11,
    Zero,
    /// Uniform entries in `[-1, 1]` from the given seed.
    Random(u64),
}

/// Dense `[A J H; J^T C 0; H^T 0 0]` with its right-hand side.
#[derive(Debug, Clone)]
pub struct AugmentedOracle {
    pub n: usize,
    pub m: usize,
    pub j1: DenseMatrix,
    pub assembled: DenseMatrix,
    pub rhs: Vec<f64>,
    indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSolution {
    /// Vanishes on the update indices.
    pub x1: Vec<f64>,
    /// The updated solution on the update indices.
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    /// `x1 + H x2`.
    pub x_hat: Vec<f64>,
}

pub fn assemble_augmented(
    a: &DenseMatrix,
    u: &UpdateSpec,
    b: &[f64],
    b_hat: &[f64],
    j1_choice: J1Choice,
) -> Result<AugmentedOracle, AmpsError> {
    let n = a.rows();
    check_lengths(n, u, &[b, b_hat])?;
    let b = effective_b(u, b, b_hat);
    let idx = u.indices();
    let m = idx.len();
    let j1 = match j1_choice {
        J1Choice::A11 => {
            let mut j1 = DenseMatrix::zeros(m, m);
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    j1[(r, c)] = a[(i, j)];
                }
            }
            j1
        }
        J1Choice::Zero => DenseMatrix::zeros(m, m),
        J1Choice::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..m * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            DenseMatrix::from_row_major(m, m, data)?
        }
    };
    let mut c = DenseMatrix::zeros(m, m);
    for (r, &i) in idx.iter().enumerate() {
        for (cc, &j) in idx.iter().enumerate() {
            c[(r, cc)] = a[(i, j)] - u.e()[(r, cc)];
        }
    }

    let big = n + 2 * m;
    let mut aug = DenseMatrix::zeros(big, big);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)];
        }
    }
    for col in 0..m {
        for i in 0..n {
            let v = match idx.binary_search(&i) {
                Ok(r) => j1[(r, col)],
                Err(_) => a[(i, idx[col])],
            };
            aug[(i, n + col)] = v;
            aug[(n + col, i)] = v;
        }
        aug[(idx[col], n + m + col)] = 1.0;
        aug[(n + m + col, idx[col])] = 1.0;
        for r in 0..m {
            aug[(n + r, n + col)] = c[(r, col)];
        }
    }

    let mut rhs = vec![0.0; big];
    for i in 0..n {
        rhs[i] = if idx.binary_search(&i).is_ok() { b[i] } else { b_hat[i] };
    }
    for (r, &i) in idx.iter().enumerate() {
        rhs[n + r] = b_hat[i];
    }
    Ok(AugmentedOracle {
        n,
        m,
        j1,
        assembled: aug,
        rhs,
        indices: idx.to_vec(),
    })
}

impl AugmentedOracle {
    pub fn solve(&self) -> Result<AugmentedSolution, AmpsError> {
        let z = self.assembled.solve(&self.rhs).map_err(singular)?;
        let (n, m) = (self.n, self.m);
        let x1 = z[..n].to_vec();
        let x2 = z[n..n + m].to_vec();
        let x3 = z[n + m..].to_vec();
        let mut x_hat = x1.clone();
        for (&i, v) in self.indices.iter().zip(&x2) {
            x_hat[i] += v;
        }
        Ok(AugmentedSolution { x1, x2, x3, x_hat })
    }
}

/// Relative Frobenius error of the block `L̂ D̂ L̂^T` factorization of the augmented
/// matrix with `J = AH`, assembled in the factorization's permuted frame.
///
/// `S1` is taken from the engine's matrix-free operator, so this checks the partial
/// solves as well as the algebra.
pub fn block_factor_check(a: &SparseMatrix, f: &LdlFactorization, u: &UpdateSpec) -> Result<f64, AmpsError> {
    let n = f.n();
    if a.n() != n {
        return Err(AmpsError::DimensionMismatch { expected: n, got: a.n() });
    }
    let m = u.m();
    let perm = f.perm();
    let ap = a.permute_symmetric(perm)?.to_dense();
    let seeds: Vec<usize> = u.indices().iter().map(|&i| perm.new_of(i)).collect();

    let mut l = DenseMatrix::identity(n);
    for (i, j, v) in f.l().entries() {
        l[(i, j)] = v;
    }

    let mut ws = Workspace::for_factor(f);
    let mut s1 = DenseMatrix::zeros(2 * m, 2 * m);
    {
        let mut op = S1Operator::new(f, u, &mut ws)?;
        let mut e = vec![0.0; 2 * m];
        let mut col = vec![0.0; 2 * m];
        for c in 0..2 * m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            op.apply(&e, &mut col);
            for r in 0..2 * m {
                s1[(r, c)] = col[r];
            }
        }
    }

    let big = n + 2 * m;
    let mut lhat = DenseMatrix::identity(big);
    for i in 0..n {
        for j in 0..=i {
            lhat[(i, j)] = l[(i, j)];
        }
    }
    for (r, &s) in seeds.iter().enumerate() {
        for j in 0..n {
            lhat[(n + r, j)] = l[(s, j)];
        }
        let mut z = vec![0.0; n];
        z[s] = 1.0;
        f.forward_in_place(&mut z);
        for (j, zj) in z.into_iter().enumerate() {
            lhat[(n + m + r, j)] = zj / f.d()[j];
        }
    }
    let mut dhat = DenseMatrix::zeros(big, big);
    for (k, &dk) in f.d().iter().enumerate() {
        dhat[(k, k)] = dk;
    }
    for r in 0..2 * m {
        for c in 0..2 * m {
            dhat[(n + r, n + c)] = -s1[(r, c)];
        }
    }
    let rebuilt = lhat.matmul(&dhat).matmul(&lhat.transpose());

    let mut aug = DenseMatrix::zeros(big, big);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = ap[(i, j)];
        }
    }
    for (c, &s) in seeds.iter().enumerate() {
        for i in 0..n {
            aug[(i, n + c)] = ap[(i, s)];
            aug[(n + c, i)] = ap[(i, s)];
        }
        aug[(s, n + m + c)] = 1.0;
        aug[(n + m + c, s)] = 1.0;
        for (r, &t) in seeds.iter().enumerate() {
            aug[(n + r, n + c)] = ap[(t, s)] - u.e()[(r, c)];
        }
    }
    let denom = aug.frobenius_norm();
    Ok(rebuilt.sub(&aug).frobenius_norm() / denom)
}
