//! Seeded property suites over random instances, runnable from the command line.
//!
//! Each suite draws `cases` instances from independent seeds. A failing case is
//! shrunk by retrying its seed at smaller sizes; the smallest failing size is
//! reported with the seed so it can be replayed.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amps::{solve_direct, solve_iterative, with_recovery_fault, UpdateSpec};
use crate::grid::{build_dc, contingency_update, synthetic_grid, Contingency, SynthParams};
use crate::ldl::{factorize, fill_reducing_order, LdlFactorization};
use crate::oracle::{assemble_augmented, block_factor_check, smw_solve, J1Choice};
use crate::sparse::{norm2, DenseMatrix, SparseMatrix, Storage};

/// Random sparse SPD matrix: symmetric off-diagonal pattern of the given density with
/// entries in `[-1, 1]`, made strictly diagonally dominant.
pub fn random_spd(rng: &mut impl Rng, n: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    let mut rowsum = vec![0.0; n];
    for j in 0..n {
        for i in j + 1..n {
            if rng.gen_bool(density.clamp(0.0, 1.0)) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for (i, s) in rowsum.into_iter().enumerate() {
        t.push((i, i, s + rng.gen_range(0.1..1.0)));
    }
    SparseMatrix::from_triplets(&t, n, Storage::Lower).expect("generated indices are valid")
}

/// Inf-norm condition number of a dense matrix, or infinity when singular.
pub fn dense_condition(a: &DenseMatrix) -> f64 {
    match a.inverse() {
        Ok(inv) => a.norm_inf() * inv.norm_inf(),
        Err(_) => f64::INFINITY,
    }
}

/// Random update on `m` indices with `cond(Â) <= max_cond`; `None` after repeated rejection.
pub fn random_update(
    rng: &mut impl Rng,
    a: &SparseMatrix,
    m: usize,
    max_cond: f64,
) -> Option<UpdateSpec> {
    let n = a.n();
    let scale = a.max_abs_diag();
    for _ in 0..20 {
        let mut idx = sample(rng, n, m.min(n)).into_vec();
        idx.sort_unstable();
        let mag = scale * rng.gen_range(0.05..1.5);
        let mut e = DenseMatrix::zeros(m, m);
        for r in 0..m {
            for c in 0..=r {
                let v = mag * rng.gen_range(-1.0..1.0);
                e[(r, c)] = v;
                e[(c, r)] = v;
            }
        }
        let u = UpdateSpec::new(idx, e).ok()?;
        let ahat = u.apply_to(a).ok()?.to_dense();
        if dense_condition(&ahat) <= max_cond {
            return Some(u);
        }
    }
    None
}

/// `b` and a `b̂` that differs from it on the update rows, or everywhere when `full` is set.
pub fn random_rhs(rng: &mut impl Rng, u: &UpdateSpec, n: usize, full: bool) -> (Vec<f64>, Vec<f64>) {
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut b_hat = b.clone();
    if full {
        for v in &mut b_hat {
            *v += rng.gen_range(-0.5..0.5);
        }
    } else {
        for &i in u.indices() {
            b_hat[i] += rng.gen_range(-0.5..0.5);
        }
    }
    (b, b_hat)
}

fn max_rel_componentwise(x: &[f64], y: &[f64]) -> f64 {
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    x.iter().zip(y).map(|(p, q)| (p - q).abs() / scale).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Agreement,
    Residual,
    J1Independence,
    BlockFactor,
    Closure,
    Reconstruction,
    Laplacian,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Agreement,
        Suite::Residual,
        Suite::J1Independence,
        Suite::BlockFactor,
        Suite::Closure,
        Suite::Reconstruction,
        Suite::Laplacian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Agreement => "agreement",
            Suite::Residual => "residual",
            Suite::J1Independence => "j1_independence",
            Suite::BlockFactor => "block_factor",
            Suite::Closure => "closure",
            Suite::Reconstruction => "reconstruction",
            Suite::Laplacian => "laplacian",
        }
    }

    fn salt(self) -> u64 {
        (self as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }

    /// Largest size this suite draws, given the global cap.
    fn n_cap(self, n_max: usize) -> usize {
        match self {
            Suite::J1Independence => n_max.min(60),
            Suite::BlockFactor => n_max.min(50),
            Suite::Laplacian => n_max.min(500),
            _ => n_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    pub n_max: usize,
    pub cases: usize,
    pub seed: u64,
    /// Runs every engine call with the recovery correction negated.
    pub inject_fault: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            n_max: 200,
            cases: 50,
            seed: 1,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub n: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub passed: usize,
    pub skipped: usize,
    pub failure: Option<Failure>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

enum Outcome {
    Pass,
    Skip,
    Fail(String),
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn engine<R>(fault: bool, body: impl FnOnce() -> R) -> R {
    if fault {
        with_recovery_fault(body)
    } else {
        body()
    }
}

struct Instance {
    a: SparseMatrix,
    f: LdlFactorization,
    u: UpdateSpec,
    b: Vec<f64>,
    b_hat: Vec<f64>,
    x: Vec<f64>,
}

fn instance(rng: &mut ChaCha8Rng, n: usize, max_m: usize) -> Option<Instance> {
    let density = rng.gen_range(0.02..0.3);
    let a = random_spd(rng, n, density);
    let f = factorize(&a, &fill_reducing_order(&a)).ok()?;
    let m = rng.gen_range(1..=max_m.min(n));
    let u = random_update(rng, &a, m, 1e8)?;
    let full = rng.gen_ratio(1, 4);
    let (b, b_hat) = random_rhs(rng, &u, n, full);
    let x = f.solve(&b).ok()?;
    Some(Instance { a, f, u, b, b_hat, x })
}

fn run_case(suite: Suite, seed: u64, n: usize, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match suite {
        Suite::Agreement => case_agreement(&mut rng, n, fault),
        Suite::Residual => case_residual(&mut rng, n, fault),
        Suite::J1Independence => case_j1_independence(&mut rng, n),
        Suite::BlockFactor => case_block_factor(&mut rng, n),
        Suite::Closure => case_closure(&mut rng, n),
        Suite::Reconstruction => case_reconstruction(&mut rng, n),
        Suite::Laplacian => case_laplacian(&mut rng, n),
    };
    match result {
        Ok(true) => Outcome::Pass,
        Ok(false) => Outcome::Skip,
        Err(msg) => Outcome::Fail(msg),
    }
}

fn case_agreement(rng: &mut ChaCha8Rng, n: usize, fault: bool) -> Result<bool, String> {
    let Some(inst) = instance(rng, n, 8) else {
        return Ok(false);
    };
    let Instance { a, f, u, b, b_hat, x } = &inst;
    let dense = u.apply_to(a).map_err(|e| e.to_string())?.to_dense();
    let reference = dense.solve(b_hat).map_err(|e| e.to_string())?;
    let (xd, _) = engine(fault, || solve_direct(f, x, u, b, b_hat)).map_err(|e| format!("direct: {e}"))?;
    let (xi, _) = engine(fault, || solve_iterative(f, x, u, b, b_hat, 1e-12, 8 * u.m()))
        .map_err(|e| format!("gmres: {e}"))?;
    let xs = smw_solve(&a.to_dense(), u, b, b_hat).map_err(|e| format!("smw: {e}"))?;
    let xa = assemble_augmented(&a.to_dense(), u, b, b_hat, J1Choice::A11)
        .and_then(|o| o.solve())
        .map_err(|e| format!("augmented: {e}"))?
        .x_hat;
    for (name, v) in [("direct", &xd), ("gmres", &xi), ("smw", &xs), ("augmented", &xa)] {
        let d = max_rel_componentwise(v, &reference);
        check(d <= 1e-8, || format!("{name} differs from the dense solve by {d:e}"))?;
    }
    Ok(true)
}

fn case_residual(rng: &mut ChaCha8Rng, n: usize, fault: bool) -> Result<bool, String> {
    let Some(inst) = instance(rng, n, 8) else {
        return Ok(false);
    };
    let Instance { a, f, u, b, b_hat, x } = &inst;
    let ahat = u.apply_to(a).map_err(|e| e.to_string())?;
    let (xd, _) = engine(fault, || solve_direct(f, x, u, b, b_hat)).map_err(|e| e.to_string())?;
    let r: Vec<f64> = ahat.matvec(&xd).unwrap().iter().zip(b_hat).map(|(p, q)| p - q).collect();
    let rel = norm2(&r) / norm2(b_hat);
    check(rel <= 1e-9, || format!("relative residual {rel:e}"))?;
    if u.e().data().iter().all(|&v| v == 0.0) && b == b_hat {
        check(&xd == x, || "zero update changed the solution".into())?;
    }
    Ok(true)
}

fn case_j1_independence(rng: &mut ChaCha8Rng, n: usize) -> Result<bool, String> {
    let Some(inst) = instance(rng, n, 8) else {
        return Ok(false);
    };
    let ad = inst.a.to_dense();
    let solve = |c| {
        assemble_augmented(&ad, &inst.u, &inst.b, &inst.b_hat, c)
            .and_then(|o| o.solve())
            .map_err(|e| e.to_string())
    };
    let base = solve(J1Choice::A11)?;
    for choice in [J1Choice::Zero, J1Choice::Random(rng.gen())] {
        let other = solve(choice)?;
        let d2 = max_rel_componentwise(&other.x2, &base.x2);
        let d1 = max_rel_componentwise(&other.x1, &base.x1);
        check(d1.max(d2) <= 1e-10, || format!("{choice:?} moves the solution by {:e}", d1.max(d2)))?;
    }
    Ok(true)
}

fn case_block_factor(rng: &mut ChaCha8Rng, n: usize) -> Result<bool, String> {
    let density = rng.gen_range(0.05..0.3);
    let a = random_spd(rng, n, density);
    let f = factorize(&a, &fill_reducing_order(&a)).map_err(|e| e.to_string())?;
    let m = rng.gen_range(1..=5.min(n));
    let Some(u) = random_update(rng, &a, m, 1e8) else {
        return Ok(false);
    };
    let err = block_factor_check(&a, &f, &u).map_err(|e| e.to_string())?;
    check(err <= 1e-11, || format!("block factorization error {err:e}"))?;
    Ok(true)
}

/// Columns reachable from `seeds` along `j -> i` for every nonzero `L[i, j]`.
fn brute_reach(f: &LdlFactorization, seeds: &[usize]) -> Vec<usize> {
    let n = f.n();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = seeds.to_vec();
    while let Some(j) = stack.pop() {
        if std::mem::replace(&mut seen[j], true) {
            continue;
        }
        let (rows, _) = f.l().column(j);
        stack.extend(rows.iter().copied().filter(|&i| !seen[i]));
    }
    (0..n).filter(|&i| seen[i]).collect()
}

fn case_closure(rng: &mut ChaCha8Rng, n: usize) -> Result<bool, String> {
    let density = rng.gen_range(0.01..0.2);
    let a = random_spd(rng, n, density);
    let f = factorize(&a, &fill_reducing_order(&a)).map_err(|e| e.to_string())?;
    let m = rng.gen_range(1..=8.min(n));
    let mut idx = sample(rng, n, m).into_vec();
    idx.sort_unstable();
    let closure = f.closure(&idx).map_err(|e| e.to_string())?;
    let seeds: Vec<usize> = idx.iter().map(|&i| f.perm().new_of(i)).collect();
    let brute = brute_reach(&f, &seeds);
    check(closure.nodes == brute, || format!("closure {:?} != reach {:?}", closure.nodes, brute))?;
    let rho: usize = closure.nodes.iter().map(|&k| f.column_size(k)).sum();
    check(closure.rho == rho, || format!("rho {} != {rho}", closure.rho))?;
    check(rho <= f.nnz_l() + f.n(), || "rho exceeds nnz(L) + n".into())?;

    for _ in 0..10 {
        let support = rng.gen_range(1..=m);
        let mut z = vec![0.0; n];
        let mut perm_seeds = Vec::new();
        for i in sample(rng, n, support) {
            z[i] = rng.gen_range(-1.0..1.0);
            perm_seeds.push(i);
        }
        perm_seeds.sort_unstable();
        let orig: Vec<usize> = perm_seeds.iter().map(|&k| f.perm().old(k)).collect();
        let mut sorted_orig = orig.clone();
        sorted_orig.sort_unstable();
        let cl = f.closure(&sorted_orig).map_err(|e| e.to_string())?;
        f.forward_in_place(&mut z);
        for (k, v) in z.iter().enumerate() {
            check(*v == 0.0 || cl.contains(k), || format!("L^-1 b has entry {k} outside its closure"))?;
        }
    }
    Ok(true)
}

fn case_reconstruction(rng: &mut ChaCha8Rng, n: usize) -> Result<bool, String> {
    let density = rng.gen_range(0.01..0.3);
    let a = random_spd(rng, n, density);
    let f = factorize(&a, &fill_reducing_order(&a)).map_err(|e| e.to_string())?;
    let mut l = DenseMatrix::identity(n);
    for (i, j, v) in f.l().entries() {
        l[(i, j)] = v;
    }
    let mut ld = l.clone();
    for i in 0..n {
        for j in 0..n {
            ld[(i, j)] *= f.d()[j];
        }
    }
    let rebuilt = ld.matmul(&l.transpose());
    let ap = a.permute_symmetric(f.perm()).map_err(|e| e.to_string())?.to_dense();
    let err = rebuilt.sub(&ap).frobenius_norm() / ap.frobenius_norm();
    check(err <= 1e-12, || format!("reconstruction error {err:e}"))?;
    Ok(true)
}

fn case_laplacian(rng: &mut ChaCha8Rng, n: usize) -> Result<bool, String> {
    let n = n.max(10);
    let deg = rng.gen_range(2.4..3.6);
    let case = synthetic_grid(&SynthParams::new(n, deg, rng.gen())).map_err(|e| e.to_string())?;
    let model = build_dc(&case).map_err(|e| e.to_string())?;
    let nbr = case.branches.len();
    let k = rng.gen_range(1..=20.min(nbr));
    let mut picked = None;
    for _ in 0..100 {
        let mut br = sample(rng, nbr, k).into_vec();
        br.sort_unstable();
        let c = Contingency::branches(br);
        if model.check_connectivity(&c).is_connected() {
            picked = Some(c);
            break;
        }
    }
    let Some(c) = picked else {
        return Ok(false);
    };
    let u = contingency_update(&model, &c).map_err(|e| e.to_string())?;
    let updated = u.apply_to(&model.b_reduced).map_err(|e| e.to_string())?.to_dense();
    let rebuilt_sparse = crate::grid::outage_matrix(&model, &c).map_err(|e| e.to_string())?;
    let rebuilt = rebuilt_sparse.to_dense();
    let scale = model.b_reduced.to_dense().data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = updated.sub(&rebuilt).data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    check(diff <= 1e-14 * scale, || format!("update and rebuild differ by {diff:e}"))?;
    let f = factorize(&rebuilt_sparse, &fill_reducing_order(&rebuilt_sparse)).map_err(|e| e.to_string())?;
    check(f.d().iter().all(|&d| d > 0.0), || "post-outage matrix is not positive definite".into())?;
    Ok(true)
}

fn draw_n(seed: u64, cap: usize) -> usize {
    let lo = 10.min(cap);
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).gen_range(lo..=cap)
}

fn shrink(suite: Suite, seed: u64, n: usize, fault: bool, detail: String) -> Failure {
    let mut best = Failure { seed, n, detail };
    let mut candidates: Vec<usize> = Vec::new();
    let mut size = n / 2;
    while size >= 2 {
        candidates.push(size);
        size /= 2;
    }
    candidates.extend((2..n.min(12)).rev());
    candidates.sort_unstable();
    candidates.dedup();
    for size in candidates {
        if size >= best.n {
            break;
        }
        if let Outcome::Fail(detail) = run_case(suite, seed, size, fault) {
            best = Failure { seed, n: size, detail };
            break;
        }
    }
    best
}

pub fn run_suite(suite: Suite, opts: &SelftestOptions) -> SuiteReport {
    let cap = suite.n_cap(opts.n_max.max(2));
    let mut passed = 0;
    let mut skipped = 0;
    let mut failure = None;
    for i in 0..opts.cases {
        let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add(i as u64) ^ suite.salt();
        let n = draw_n(seed, cap);
        match run_case(suite, seed, n, opts.inject_fault) {
            Outcome::Pass => passed += 1,
            Outcome::Skip => skipped += 1,
            Outcome::Fail(detail) => {
                failure = Some(shrink(suite, seed, n, opts.inject_fault, detail));
                break;
            }
        }
    }
    SuiteReport {
        suite,
        cases: opts.cases,
        passed,
        skipped,
        failure,
    }
}

/// Replays one case, for reproducing a reported failure.
pub fn replay(suite: Suite, seed: u64, n: usize, inject_fault: bool) -> Result<(), String> {
    match run_case(suite, seed, n, inject_fault) {
        Outcome::Fail(msg) => Err(msg),
        _ => Ok(()),
    }
}

pub fn run_all(opts: &SelftestOptions) -> Vec<SuiteReport> {
    Suite::ALL.iter().map(|&s| run_suite(s, opts)).collect()
}
