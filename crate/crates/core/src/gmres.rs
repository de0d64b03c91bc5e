//! Full (unrestarted) GMRES for small operators.
//!
//! Arnoldi with modified Gram-Schmidt; the Hessenberg least-squares problem
//! is kept triangular with Givens rotations so the residual norm is known
//! at every step.

use thiserror::Error;

use crate::sparse::norm2;

/// A square operator applied through a mutable receiver so it may reuse scratch.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&mut self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Stop once `||b - A x|| / ||b|| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmresError {
    #[error("GMRES did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("Krylov breakdown with a singular Hessenberg factor after {iterations} iterations")]
    Breakdown { iterations: usize },
    #[error("right-hand side has length {got}, operator dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub fn gmres<A: LinearOperator>(op: &mut A, b: &[f64], opts: GmresOptions) -> Result<GmresOutcome, GmresError> {
    let n = op.dim();
    if b.len() != n {
        return Err(GmresError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let beta = norm2(b);
    if beta == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }

    let max_iter = opts.max_iter;
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    // Column j of the rotated Hessenberg factor R, length j + 1.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        let j = iterations;
        op.apply(&basis[j], &mut w);
        let w_norm0 = norm2(&w);
        let mut h = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = crate::sparse::dot(&w, v);
            h[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let h_next = norm2(&w);
        h[j + 1] = h_next;

        for i in 0..j {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = cs[i] * a + sn[i] * bb;
            h[i + 1] = -sn[i] * a + cs[i] * bb;
        }
        let denom = h[j].hypot(h[j + 1]);
        let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
        h[j] = denom;
        h.truncate(j + 1);
        cs.push(c);
        sn.push(s);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        r_cols.push(h);
        iterations += 1;

        let breakdown = h_next <= 1e-14 * w_norm0.max(f64::MIN_POSITIVE);
        if breakdown && denom <= 1e-14 * w_norm0.max(f64::MIN_POSITIVE) {
            return Err(GmresError::Breakdown { iterations });
        }
        if g[j + 1].abs() / beta <= opts.tol {
            converged = true;
            break;
        }
        if breakdown {
            // Invariant subspace found; the least-squares solution is exact.
            converged = true;
            break;
        }
        basis.push(w.iter().map(|v| v / h_next).collect());
    }

    let x = assemble(&basis, &r_cols, &g, iterations, n);
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let residual = norm2(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / beta;
    if converged {
        Ok(GmresOutcome {
            x,
            iterations,
            residual,
        })
    } else {
        Err(GmresError::NoConvergence {
            iterations,
            residual,
            best: x,
        })
    }
}

fn assemble(basis: &[Vec<f64>], r_cols: &[Vec<f64>], g: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        let mut s = y[i];
        for (jj, col) in r_cols.iter().enumerate().take(k).skip(i + 1) {
            s -= col[i] * y[jj];
        }
        y[i] = s / r_cols[i][i];
    }
    let mut x = vec![0.0; n];
    for (yi, v) in y.iter().zip(basis) {
        for (xk, vk) in x.iter_mut().zip(v) {
            *xk += yi * vk;
        }
    }
    x
}
