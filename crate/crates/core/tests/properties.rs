use std::collections::BTreeSet;

use amps_core::amps::{
    default_max_it, solve_direct, solve_iterative, AmpsError, UpdateSpec, DEFAULT_GMRES_TOL,
};
use amps_core::grid::{
    build_dc, contingency_update, find_bridges, parse_matpower, synthetic_grid, write_matpower, Contingency,
    DcModel, GridCase, SynthParams,
};
use amps_core::ldl::{factorize, fill_reducing_order, LdlFactorization, SparseColumn, Workspace};
use amps_core::oracle::{assemble_augmented, block_factor_check, smw_solve, J1Choice};
use amps_core::selftest::{random_rhs, random_spd, random_update};
use amps_core::sparse::{market, Permutation, SparseMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &SparseMatrix) -> DMatrix<f64> {
    let n = a.n();
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in a.symmetric_entries() {
        m[(i, j)] = v;
    }
    m
}

fn rel_err(x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let s: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / s.max(f64::MIN_POSITIVE)
}

struct Case {
    a: SparseMatrix,
    f: LdlFactorization,
    u: UpdateSpec,
    b: Vec<f64>,
    b_hat: Vec<f64>,
    x: Vec<f64>,
}

fn updated_case(seed: u64, n: usize, m: usize, full: bool) -> Option<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.gen_range(0.02..0.2);
    let a = random_spd(&mut rng, n, density);
    let f = factorize(&a, &fill_reducing_order(&a)).unwrap();
    let u = random_update(&mut rng, &a, m, 1e8)?;
    let (b, b_hat) = random_rhs(&mut rng, &u, n, full);
    let x = f.solve(&b).unwrap();
    Some(Case { a, f, u, b, b_hat, x })
}

/// Dense Cholesky solve of the updated system, independent of the library's solvers.
fn reference_solution(c: &Case) -> Vec<f64> {
    let ahat = to_na(&c.u.apply_to(&c.a).unwrap());
    let lu = ahat.lu();
    lu.solve(&DVector::from_column_slice(&c.b_hat)).unwrap().as_slice().to_vec()
}

/// Nodes reachable from `seeds` along `j -> i` for every stored `L[i, j]`.
fn brute_reach(f: &LdlFactorization, seeds: &[usize]) -> BTreeSet<usize> {
    let l = f.l();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = seeds.to_vec();
    while let Some(j) = stack.pop() {
        if seen.insert(j) {
            stack.extend(l.column(j).0.iter().copied().filter(|i| !seen.contains(i)));
        }
    }
    seen
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn permutation_round_trip(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map: Vec<usize> = (0..n).collect();
        map.shuffle(&mut rng);
        let p = Permutation::new(map).unwrap();
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        prop_assert_eq!(p.apply(&p.apply_transpose(&v)), v.clone());
        for i in 0..n {
            prop_assert_eq!(p.new_of(p.old(i)), i);
            prop_assert_eq!(p.inverse().old(i), p.new_of(i));
        }
    }

    #[test]
    fn ldl_reconstructs_permuted_matrix(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.1);
        let f = factorize(&a, &fill_reducing_order(&a)).unwrap();
        let mut l = DMatrix::identity(n, n);
        for (i, j, v) in f.l().entries() {
            l[(i, j)] = v;
        }
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(f.d()));
        let dense = to_na(&a);
        let pap = DMatrix::from_fn(n, n, |i, j| dense[(f.perm().old(i), f.perm().old(j))]);
        let diff = (&l * d * l.transpose() - &pap).amax();
        prop_assert!(diff <= 1e-12 * pap.amax(), "diff {diff}");
    }

    #[test]
    fn ldl_solve_matches_dense(seed in any::<u64>(), n in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.08);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = factorize(&a, &fill_reducing_order(&a)).unwrap();
        let x = f.solve(&b).unwrap();
        let want = to_na(&a).cholesky().unwrap().solve(&DVector::from_column_slice(&b));
        prop_assert!(rel_err(&x, want.as_slice()) <= 1e-12);
    }

    #[test]
    fn closure_equals_graph_reach(seed in any::<u64>(), n in 2usize..80, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.06);
        let f = factorize(&a, &fill_reducing_order(&a)).unwrap();
        let idx = rand::seq::index::sample(&mut rng, n, m.min(n)).into_vec();
        let cl = f.closure(&idx).unwrap();
        let seeds: Vec<usize> = idx.iter().map(|&i| f.perm().new_of(i)).collect();
        let want: Vec<usize> = brute_reach(&f, &seeds).into_iter().collect();
        prop_assert_eq!(&cl.nodes, &want);
        let rho: usize = want.iter().map(|&k| f.l().column(k).0.len() + 1).sum();
        prop_assert_eq!(cl.rho, rho);
    }

    #[test]
    fn partial_forward_stays_in_reach(seed in any::<u64>(), n in 2usize..80, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.06);
        let f = factorize(&a, &fill_reducing_order(&a)).unwrap();
        let idx = rand::seq::index::sample(&mut rng, n, m.min(n)).into_vec();
        let cl = f.closure(&idx).unwrap();
        let seeds: Vec<usize> = idx.iter().map(|&i| f.perm().new_of(i)).collect();
        let rhs = SparseColumn::from_pairs(seeds.iter().map(|&s| (s, rng.gen_range(-1.0..1.0))).collect());
        let mut ws = Workspace::for_factor(&f);
        let out = f.partial_forward_solve(std::slice::from_ref(&rhs), &cl, &mut ws).unwrap();
        let mut full = rhs.to_dense(n);
        f.forward_in_place(&mut full);
        let got = out[0].to_dense(n);
        for k in 0..n {
            prop_assert!(got[k] == 0.0 || cl.contains(k));
            prop_assert!((got[k] - full[k]).abs() <= 1e-14 * (1.0 + full[k].abs()));
        }
    }

    #[test]
    fn direct_iterative_and_dense_agree(seed in any::<u64>(), n in 4usize..120, m in 1usize..8) {
        let m = m.min(n - 1);
        let Some(c) = updated_case(seed, n, m, false) else { return Ok(()) };
        let want = reference_solution(&c);
        let (xd, _) = solve_direct(&c.f, &c.x, &c.u, &c.b, &c.b_hat).unwrap();
        let (xi, rep) = solve_iterative(
            &c.f, &c.x, &c.u, &c.b, &c.b_hat, DEFAULT_GMRES_TOL, default_max_it(m),
        ).unwrap();
        prop_assert!(rel_err(&xd, &want) <= 1e-8);
        prop_assert!(rel_err(&xi, &want) <= 1e-8);
        prop_assert!(rel_err(&xd, &xi) <= 1e-8);
        prop_assert!(rep.rho > 0);
        let smw = smw_solve(&c.a.to_dense(), &c.u, &c.b, &c.b_hat).unwrap();
        prop_assert!(rel_err(&smw, &want) <= 1e-8);
    }

    #[test]
    fn rhs_differing_off_support_still_solves(seed in any::<u64>(), n in 4usize..60, m in 1usize..5) {
        let m = m.min(n - 1);
        let Some(c) = updated_case(seed, n, m, true) else { return Ok(()) };
        let want = reference_solution(&c);
        let (xd, _) = solve_direct(&c.f, &c.x, &c.u, &c.b, &c.b_hat).unwrap();
        prop_assert!(rel_err(&xd, &want) <= 1e-8);
    }

    #[test]
    fn augmented_system_recovers_solution(seed in any::<u64>(), n in 4usize..50, m in 1usize..5, j1 in 0u8..3) {
        let m = m.min(n - 1);
        let Some(c) = updated_case(seed, n, m, false) else { return Ok(()) };
        let choice = match j1 {
            0 => J1Choice::A11,
            1 => J1Choice::Zero,
            _ => J1Choice::Random(seed ^ 0x5eed),
        };
        let sol = assemble_augmented(&c.a.to_dense(), &c.u, &c.b, &c.b_hat, choice).unwrap().solve().unwrap();
        let want = reference_solution(&c);
        prop_assert!(rel_err(&sol.x_hat, &want) <= 1e-8);
    }

    #[test]
    fn block_factorization_matches_augmented(seed in any::<u64>(), n in 4usize..40, m in 1usize..5) {
        let m = m.min(n - 1);
        let Some(c) = updated_case(seed, n, m, false) else { return Ok(()) };
        let err = block_factor_check(&c.a, &c.f, &c.u).unwrap();
        prop_assert!(err <= 1e-11, "err {err}");
    }

    #[test]
    fn matrix_market_round_trip(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.2);
        let back = market::read(&market::write(&a)).unwrap();
        prop_assert_eq!(back.n(), a.n());
        prop_assert_eq!(back.entries().collect::<Vec<_>>(), a.entries().collect::<Vec<_>>());
    }
}

fn dense_reduced_laplacian(model: &DcModel, removed: &[usize]) -> DMatrix<f64> {
    let n = model.n();
    let mut out = DMatrix::zeros(n, n);
    let pos = model.case.bus_positions();
    for (id, br) in model.case.branches.iter().enumerate() {
        if !br.in_service || removed.contains(&id) || br.from == br.to {
            continue;
        }
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        let y = 1.0 / (br.x * tap);
        let i = model.reduced_of_bus[pos[&br.from]];
        let j = model.reduced_of_bus[pos[&br.to]];
        if let Some(i) = i {
            out[(i, i)] += y;
        }
        if let Some(j) = j {
            out[(j, j)] += y;
        }
        if let (Some(i), Some(j)) = (i, j) {
            out[(i, j)] -= y;
            out[(j, i)] -= y;
        }
    }
    out
}

fn grid(seed: u64, n: usize) -> GridCase {
    synthetic_grid(&SynthParams::new(n, 2.8, seed)).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn laplacian_update_matches_rebuild(seed in any::<u64>(), n in 6usize..120, k in 1usize..6) {
        let case = grid(seed, n);
        let model = build_dc(&case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = case.in_service_branches().collect();
        let removed: Vec<usize> = ids.choose_multiple(&mut rng, k.min(ids.len())).copied().collect();
        let u = contingency_update(&model, &Contingency::branches(removed.clone())).unwrap();
        let updated = to_na(&u.apply_to(&model.b_reduced).unwrap());
        let want = dense_reduced_laplacian(&model, &removed);
        prop_assert!((updated - &want).amax() <= 1e-14 * want.amax());
        prop_assert!((to_na(&model.b_reduced) - dense_reduced_laplacian(&model, &[])).amax() == 0.0);
    }

    #[test]
    fn only_bridges_island_single_outages(seed in any::<u64>(), n in 3usize..80) {
        let case = grid(seed, n);
        let model = build_dc(&case).unwrap();
        let bridges: BTreeSet<usize> = find_bridges(&case).into_iter().collect();
        for id in case.in_service_branches() {
            let conn = model.check_connectivity(&Contingency::branches(vec![id]));
            prop_assert_eq!(!conn.is_connected(), bridges.contains(&id), "branch {}", id);
        }
    }

    #[test]
    fn non_islanding_contingencies_solve(seed in any::<u64>(), n in 10usize..150, k in 1usize..8) {
        let case = grid(seed, n);
        let model = build_dc(&case).unwrap();
        let f = factorize(&model.b_reduced, &fill_reducing_order(&model.b_reduced)).unwrap();
        let x = f.solve(&model.p_reduced).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = case.in_service_branches().collect();
        let c = Contingency::branches(ids.choose_multiple(&mut rng, k.min(ids.len())).copied().collect());
        let u = contingency_update(&model, &c).unwrap();
        let result = solve_direct(&f, &x, &u, &model.p_reduced, &model.p_reduced);
        if model.check_connectivity(&c).is_connected() {
            let (xd, _) = result.unwrap();
            let dense = dense_reduced_laplacian(&model, &c.branches);
            let want = dense.cholesky().unwrap().solve(&DVector::from_column_slice(&model.p_reduced));
            prop_assert!(rel_err(&xd, want.as_slice()) <= 1e-8);
        } else {
            let ok = match result {
                Err(AmpsError::SingularSchur { .. }) => true,
                Ok((xd, _)) => {
                    let r = to_na(&u.apply_to(&model.b_reduced).unwrap()) * DVector::from_column_slice(&xd)
                        - DVector::from_column_slice(&model.p_reduced);
                    r.norm() > 1e-6 * DVector::from_column_slice(&model.p_reduced).norm()
                }
                Err(_) => false,
            };
            prop_assert!(ok);
        }
    }

    #[test]
    fn matpower_round_trip(seed in any::<u64>(), n in 2usize..60) {
        let case = grid(seed, n);
        let back = parse_matpower(&write_matpower(&case, "rt")).unwrap();
        prop_assert_eq!(back, case);
    }

    #[test]
    fn synthetic_grid_is_seeded_and_connected(seed in any::<u64>(), n in 2usize..200) {
        let a = grid(seed, n);
        prop_assert_eq!(&a, &grid(seed, n));
        prop_assert_eq!(a.buses.len(), n);
        prop_assert!(build_dc(&a).is_ok());
        let load: f64 = a.buses.iter().map(|b| b.pd).sum();
        let gen: f64 = a.gens.iter().map(|g| g.pg).sum();
        prop_assert!((load - gen).abs() <= 1e-9 * load.max(1.0));
    }
}
