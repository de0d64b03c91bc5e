//! Acceptance suite: one pass/fail line per criterion at the pinned tolerances.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use amps_core::amps::{solve_direct, solve_iterative, AmpsError, UpdateSpec};
use amps_core::grid::{
    build_dc, contingency_update, find_bridges, outage_matrix, parse_matpower, synthetic_grid, Contingency,
    DcModel, SynthParams,
};
use amps_core::ldl::{factorize, fill_reducing_order, LdlFactorization};
use amps_core::oracle::{assemble_augmented, block_factor_check, smw_solve, J1Choice};
use amps_core::selftest::{random_rhs, random_spd, random_update};
use amps_core::sparse::{norm2, DenseMatrix, SparseMatrix};
use amps_core::sweep::{evaluate_contingency, run_sweep, Method, Selector, Status, SweepConfig};
use amps_core::ldl::Workspace;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn rel_dist(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    norm2(&d) / norm2(y).max(f64::MIN_POSITIVE)
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.data().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
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

/// Draws until a nonsingular update is found.
fn instance(rng: &mut ChaCha8Rng, n_range: (usize, usize), max_m: usize, max_density: f64) -> Instance {
    loop {
        let n = rng.gen_range(n_range.0..=n_range.1);
        let density = rng.gen_range(0.01..max_density);
        let a = random_spd(rng, n, density);
        let f = factorize(&a, &fill_reducing_order(&a)).expect("random SPD factors");
        let m = rng.gen_range(1..=max_m.min(n));
        let Some(u) = random_update(rng, &a, m, 1e8) else { continue };
        let full = rng.gen_ratio(1, 4);
        let (b, b_hat) = random_rhs(rng, &u, n, full);
        let x = f.solve(&b).expect("base solve");
        return Instance { a, f, u, b, b_hat, x };
    }
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0_f64;
    for case in 0..200 {
        let Instance { a, f, u, b, b_hat, x } = instance(&mut rng, (10, 200), 8, 0.3);
        let ad = a.to_dense();
        let reference = u.apply_to(&a).unwrap().to_dense().solve(&b_hat).map_err(|e| e.to_string())?;
        let err = |what: &str, e: AmpsError| format!("case {case}: {what}: {e}");
        let mut sols = vec![
            solve_direct(&f, &x, &u, &b, &b_hat).map_err(|e| err("direct", e))?.0,
            solve_iterative(&f, &x, &u, &b, &b_hat, 1e-12, 4 * u.m()).map_err(|e| err("gmres", e))?.0,
            smw_solve(&ad, &u, &b, &b_hat).map_err(|e| err("smw", e))?,
        ];
        for choice in [J1Choice::A11, J1Choice::Zero, J1Choice::Random(case)] {
            let o = assemble_augmented(&ad, &u, &b, &b_hat, choice).and_then(|o| o.solve());
            sols.push(o.map_err(|e| err("augmented", e))?.x_hat);
        }
        sols.push(reference);
        for i in 0..sols.len() {
            for j in i + 1..sols.len() {
                worst = worst.max(rel_dist(&sols[i], &sols[j]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("200 systems, worst pairwise relative distance {worst:.2e}, {secs:.1} s");
    if worst <= 1e-8 && secs <= 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn factored(model: &DcModel) -> (LdlFactorization, Vec<f64>) {
    let f = factorize(&model.b_reduced, &fill_reducing_order(&model.b_reduced)).expect("base factors");
    let x = f.solve(&model.p_reduced).expect("base solve");
    (f, x)
}

/// Random non-islanding branch contingencies of size `k`.
fn connected_draws(model: &DcModel, rng: &mut ChaCha8Rng, k: usize, count: usize) -> Vec<Contingency> {
    let pool: Vec<usize> = model.case.in_service_branches().filter(|&b| model.branch_susceptance[b] != 0.0).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..1000 * count {
        if out.len() == count {
            break;
        }
        let mut pick: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
        pick.sort_unstable();
        let c = Contingency::branches(pick);
        if model.check_connectivity(&c).is_connected() {
            out.push(c);
        }
    }
    out
}

fn mean_residuals(model: &DcModel, list: Vec<Contingency>) -> Result<(usize, f64, f64), String> {
    let (f, x) = factored(model);
    let cfg = SweepConfig {
        k: 1,
        selector: Selector::Explicit(list),
        methods: vec![Method::Direct, Method::Gmres],
        repetitions: 1,
        jobs: 4,
        ..SweepConfig::default()
    };
    let results = run_sweep(model, &f, &x, &cfg).map_err(|e| e.to_string())?;
    let mut sums = [0.0; 2];
    let mut ok = 0;
    for r in &results {
        if r.status != Status::Ok {
            return Err(format!("contingency {:?} ended {}", r.contingency.branches, r.status.name()));
        }
        ok += 1;
        for (s, m) in sums.iter_mut().zip([Method::Direct, Method::Gmres]) {
            *s += r.method(m).and_then(|m| m.residual).ok_or("missing residual")?;
        }
    }
    Ok((ok, sums[0] / ok as f64, sums[1] / ok as f64))
}

fn residual_scale() -> Verdict {
    let case = synthetic_grid(&SynthParams::new(3120, 2.7, 3120)).map_err(|e| e.to_string())?;
    let model = build_dc(&case).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let list: Vec<Contingency> = (1..=20).flat_map(|k| connected_draws(&model, &mut rng, k, 25)).collect();
    let (ok, direct, gmres) = mean_residuals(&model, list)?;
    let mut msg = format!("{} buses, {ok} contingencies, mean residual direct {direct:.2e} gmres {gmres:.2e}", model.n() + 1);
    let mut pass = ok == 500 && direct <= 1e-10 && gmres <= 1e-10;

    match std::env::var("AMPS_CASE3120SP").ok().and_then(|p| std::fs::read_to_string(p).ok()) {
        Some(text) => {
            let case = parse_matpower(&text).map_err(|e| e.to_string())?;
            let model = build_dc(&case).map_err(|e| e.to_string())?;
            let list: Vec<Contingency> = (1..=20).flat_map(|k| connected_draws(&model, &mut rng, k, 25)).collect();
            let (_, d, g) = mean_residuals(&model, list)?;
            msg.push_str(&format!("; case3120sp direct {d:.2e} gmres {g:.2e}"));
            pass &= d <= 1e-11 && g <= 1e-11;
        }
        None => msg.push_str("; case3120sp not available (set AMPS_CASE3120SP)"),
    }
    if pass {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn j1_independence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let Instance { a, u, b, b_hat, .. } = instance(&mut rng, (10, 60), 8, 0.3);
        let ad = a.to_dense();
        let solve = |c| assemble_augmented(&ad, &u, &b, &b_hat, c).and_then(|o| o.solve()).map_err(|e| e.to_string());
        let base = solve(J1Choice::A11)?;
        for choice in [J1Choice::Zero, J1Choice::Random(rng.gen())] {
            let other = solve(choice).map_err(|e| format!("case {case}: {e}"))?;
            let d1 = rel_dist(&other.x1, &base.x1);
            let d2 = rel_dist(&other.x2, &base.x2);
            worst = worst.max(d1).max(d2);
        }
    }
    let msg = format!("50 instances, largest change across J1 choices {worst:.2e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn block_factorization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let inst = instance(&mut rng, (6, 50), 5, 0.3);
        worst = worst.max(block_factor_check(&inst.a, &inst.f, &inst.u).map_err(|e| e.to_string())?);
    }
    let msg = format!("50 instances, largest relative error {worst:.2e}");
    if worst <= 1e-11 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Nodes reachable from `seeds` along `j -> i` for every stored `L[i, j]`.
fn brute_reach(f: &LdlFactorization, seeds: &[usize]) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = seeds.to_vec();
    while let Some(j) = stack.pop() {
        if seen.insert(j) {
            stack.extend(f.l().column(j).0.iter().copied().filter(|i| !seen.contains(i)));
        }
    }
    seen
}

fn closure_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut mismatches = 0;
    let mut violations = 0;
    let mut rhs_count = 0;
    for _ in 0..100 {
        let n = rng.gen_range(10..=200);
        let density = rng.gen_range(0.005..0.1);
        let a = random_spd(&mut rng, n, density);
        let f = factorize(&a, &fill_reducing_order(&a)).map_err(|e| e.to_string())?;
        let m = rng.gen_range(1..=8);
        let idx = sample(&mut rng, n, m).into_vec();
        let cl = f.closure(&idx).map_err(|e| e.to_string())?;
        let seeds: Vec<usize> = idx.iter().map(|&i| f.perm().new_of(i)).collect();
        if cl.nodes != brute_reach(&f, &seeds).into_iter().collect::<Vec<_>>() {
            mismatches += 1;
        }
        for _ in 0..10 {
            let size = rng.gen_range(1..=m);
            let support = sample(&mut rng, n, size).into_vec();
            let mut z = vec![0.0; n];
            for &i in &support {
                z[f.perm().new_of(i)] = rng.gen_range(-1.0..1.0);
            }
            let cl = f.closure(&support).map_err(|e| e.to_string())?;
            f.forward_in_place(&mut z);
            violations += z.iter().enumerate().filter(|&(k, v)| *v != 0.0 && !cl.contains(k)).count();
            rhs_count += 1;
        }
    }
    let msg = format!("100 closures, {mismatches} mismatches; {rhs_count} right-hand sides, {violations} support violations");
    if mismatches == 0 && violations == 0 && rhs_count == 1000 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn laplacian_update() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_rel = 0.0_f64;
    let mut worst_abs = 0.0_f64;
    let mut pairs = 0;
    while pairs < 200 {
        let n = rng.gen_range(10..=400);
        let deg = rng.gen_range(2.4..3.6);
        let case = synthetic_grid(&SynthParams::new(n, deg, rng.gen())).map_err(|e| e.to_string())?;
        let model = build_dc(&case).map_err(|e| e.to_string())?;
        let chords = case.branches.len() + 1 - n;
        let k = rng.gen_range(1..=20.min(chords / 2).max(1));
        let Some(c) = connected_draws(&model, &mut rng, k, 1).pop() else { continue };
        pairs += 1;
        let u = contingency_update(&model, &c).map_err(|e| e.to_string())?;
        let updated = u.apply_to(&model.b_reduced).map_err(|e| e.to_string())?.to_dense();
        let rebuilt = outage_matrix(&model, &c).map_err(|e| e.to_string())?.to_dense();
        let diff = max_abs(&updated.sub(&rebuilt));
        worst_abs = worst_abs.max(diff);
        worst_rel = worst_rel.max(diff / max_abs(&model.b_reduced.to_dense()));
    }
    let msg = format!("200 pairs, largest entry difference {worst_abs:.2e} ({worst_rel:.2e} of max |B|)");
    if worst_rel <= 1e-14 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

struct LargeGrid {
    model: DcModel,
    f: LdlFactorization,
    x: Vec<f64>,
}

fn large_grid() -> LargeGrid {
    let case = synthetic_grid(&SynthParams::new(20_000, 2.7, 2024)).expect("synthetic grid");
    let model = build_dc(&case).expect("connected grid");
    let (f, x) = factored(&model);
    LargeGrid { model, f, x }
}

fn sweep_k(g: &LargeGrid, k: usize, methods: Vec<Method>) -> Result<Vec<amps_core::sweep::ContingencyResult>, String> {
    let cfg = SweepConfig {
        k,
        selector: Selector::Random {
            samples: 50,
            seed: 700 + k as u64,
        },
        methods,
        repetitions: 5,
        jobs: 1,
        ..SweepConfig::default()
    };
    let results = run_sweep(&g.model, &g.f, &g.x, &cfg).map_err(|e| e.to_string())?;
    Ok(results.into_iter().filter(|r| r.status == Status::Ok).collect())
}

fn median_of(results: &[amps_core::sweep::ContingencyResult], m: Method, pick: impl Fn(&amps_core::sweep::MethodResult) -> f64) -> f64 {
    let mut v: Vec<f64> = results.iter().filter_map(|r| r.method(m)).map(pick).collect();
    median(&mut v)
}

fn speedup(g: &LargeGrid) -> Verdict {
    let start = Instant::now();
    let results = sweep_k(g, 20, vec![Method::Direct, Method::Refactor])?;
    let direct = median_of(&results, Method::Direct, |m| m.median_time_us);
    let refactor = median_of(&results, Method::Refactor, |m| m.median_time_us);
    let secs = start.elapsed().as_secs_f64();
    let ratio = refactor / direct;
    let msg = format!(
        "{} buses, k=20, {} ok samples: direct {direct:.0} us, refactor {refactor:.0} us, {ratio:.1}x, {secs:.1} s",
        g.model.n() + 1,
        results.len()
    );
    if results.len() == 50 && ratio >= 5.0 && secs <= 600.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn scaling(g: &LargeGrid) -> Verdict {
    let ks = [1, 2, 5, 10, 15, 20];
    let mut times = Vec::new();
    let mut rhos = Vec::new();
    for &k in &ks {
        let results = sweep_k(g, k, vec![Method::Direct])?;
        times.push(median_of(&results, Method::Direct, |m| m.median_time_us));
        rhos.push(median_of(&results, Method::Direct, |m| m.rho.unwrap_or(0) as f64));
    }
    let ratio = times[ks.len() - 1] / times[0];
    let monotone = rhos.windows(2).all(|w| w[0] <= w[1]);
    let rho_list: Vec<String> = ks.iter().zip(&rhos).map(|(k, r)| format!("k={k}:{r:.0}")).collect();
    let msg = format!("direct k=20 / k=1 time {ratio:.2}x; median rho {}", rho_list.join(" "));
    if ratio <= 10.0 && monotone {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn islanding_safety() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut bridge_cases = 0;
    let mut bad_status = Vec::new();
    let mut forced = 0;
    let mut silent = 0;
    let cfg = SweepConfig {
        methods: vec![Method::Direct, Method::Gmres, Method::Refactor],
        repetitions: 1,
        ..SweepConfig::default()
    };
    let mut seed = 0;
    while forced < 50 {
        seed += 1;
        if seed > 500 {
            return Err(format!("only {forced} bridge contingencies found"));
        }
        let case = synthetic_grid(&SynthParams::new(rng.gen_range(30..=300), 2.4, seed)).map_err(|e| e.to_string())?;
        let model = build_dc(&case).map_err(|e| e.to_string())?;
        let (f, x) = factored(&model);
        let mut ws = Workspace::for_factor(&f);
        let bridges = find_bridges(&case);
        for &br in &bridges {
            let mut list = vec![br];
            let extra = rng.gen_range(0..4);
            list.extend(sample(&mut rng, case.branches.len(), extra).into_iter().filter(|&b| b != br));
            list.sort_unstable();
            list.dedup();
            let c = Contingency::branches(list);
            bridge_cases += 1;
            let r = evaluate_contingency(bridge_cases, &model, &f, &x, &c, &cfg, &mut ws);
            if !matches!(r.status, Status::Islanded | Status::Singular) {
                bad_status.push(format!("{:?}: {}", c.branches, r.status.name()));
            }

            if forced < 50 {
                forced += 1;
                let u = contingency_update(&model, &c).map_err(|e| e.to_string())?;
                let b_hat = &model.p_reduced;
                let singular = outage_matrix(&model, &c).map_err(|e| e.to_string())?;
                match solve_direct(&f, &x, &u, &model.p_reduced, b_hat) {
                    Err(AmpsError::SingularSchur { .. }) => {}
                    Ok((xd, _)) => {
                        let r: Vec<f64> = singular.matvec(&xd).unwrap().iter().zip(b_hat).map(|(p, q)| p - q).collect();
                        if norm2(&r) / norm2(b_hat) <= 1e-6 {
                            silent += 1;
                        }
                    }
                    Err(e) => return Err(format!("forced solve of {:?} failed unexpectedly: {e}", c.branches)),
                }
            }
        }
    }
    let msg = format!(
        "{bridge_cases} bridge contingencies, {} not flagged; {forced} forced solves, {silent} silently wrong",
        bad_status.len()
    );
    if bad_status.is_empty() && silent == 0 {
        Ok(msg)
    } else {
        Err(format!("{msg}: {}", bad_status.join(", ")))
    }
}

fn main() -> ExitCode {
    let total = Instant::now();
    let mut failed = 0;
    let mut report = |id: usize, name: &str, v: Verdict| {
        match v {
            Ok(msg) => println!("[PASS] {id} {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {msg}");
            }
        }
    };
    report(1, "oracle equivalence", oracle_equivalence());
    report(2, "residual scale", residual_scale());
    report(3, "J1 independence", j1_independence());
    report(4, "block factorization", block_factorization());
    report(5, "closure exactness", closure_exactness());
    report(6, "laplacian update vs rebuild", laplacian_update());
    let grid = large_grid();
    report(7, "speedup over refactoring", speedup(&grid));
    report(8, "scaling in k", scaling(&grid));
    report(9, "islanding safety", islanding_safety());
    println!("acceptance: {} of 9 passed in {:.1} s", 9 - failed, total.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
