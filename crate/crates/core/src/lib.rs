//! Solution updates for sparse symmetric systems under principal-submatrix
//! modifications `Â = A - H E H^T`, and their use in N-k DC contingency
//! screening.
//!
//! The base matrix is factored once as `P^T A P = L D L^T`. Each update is
//! then answered through a small augmented system: either the unsymmetric
//! `m x m` Schur complement `S2 = E H^T A^{-1} H - I` is formed by partial
//! triangular solves and factored densely ([`amps::solve_direct`]), or the
//! symmetric `2m x 2m` complement `S1` is solved by GMRES
//! ([`amps::solve_iterative`]). Both paths only touch the etree closure of
//! the modified indices, apart from the final `O(|L|)` back substitution.

pub mod amps;
pub mod grid;
pub mod gmres;
pub mod ldl;
pub mod oracle;
pub mod selftest;
pub mod sparse;
pub mod sweep;
