use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use amps_core::grid::{contingency_update, write_matpower, Contingency, DcModel, GridError};
use amps_core::ldl::{factorize, fill_reducing_order, LdlFactorization, Workspace};
use amps_core::selftest::{run_all, SelftestOptions};
use amps_core::sparse::norm2;
use amps_core::sweep::{
    evaluate_contingency, parse_contingency_list, run_sweep, summarize, write_csv, Method, Selector, Status,
    SweepConfig,
};
use anyhow::{anyhow, Context};

use crate::input::parse_gen_spec;
use crate::{ContingencyArgs, GenArgs, SelftestArgs, SolveArgs, SweepArgs};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SINGULAR: u8 = 2;
pub const EXIT_ISLANDED: u8 = 3;
pub const EXIT_SELFTEST: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::config(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(Failure::config)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn factor_base(model: &DcModel) -> Result<(LdlFactorization, Vec<f64>), Failure> {
    let singular = |e: anyhow::Error| Failure {
        code: EXIT_SINGULAR,
        error: e,
    };
    let f = factorize(&model.b_reduced, &fill_reducing_order(&model.b_reduced))
        .context("factoring the base case")
        .map_err(singular)?;
    let x = f.solve(&model.p_reduced).context("solving the base case").map_err(singular)?;
    Ok((f, x))
}

pub fn solve(args: SolveArgs) -> CmdResult {
    let model = args.input.load_model()?;
    let start = Instant::now();
    let order = fill_reducing_order(&model.b_reduced);
    let f = factorize(&model.b_reduced, &order).map_err(|e| Failure {
        code: EXIT_SINGULAR,
        error: anyhow::Error::from(e).context("factoring the base case"),
    })?;
    let factor_time = start.elapsed();
    let start = Instant::now();
    let d = f.solve(&model.p_reduced).map_err(|e| Failure::config(e.into()))?;
    let solve_time = start.elapsed();
    let bd = model.b_reduced.matvec(&d).map_err(|e| Failure::config(e.into()))?;
    let r: Vec<f64> = bd.iter().zip(&model.p_reduced).map(|(a, b)| a - b).collect();
    let pn = norm2(&model.p_reduced);
    let residual = if pn > 0.0 { norm2(&r) / pn } else { norm2(&r) };

    eprintln!("buses        {}", model.case.buses.len());
    eprintln!("branches     {}", model.case.in_service_branches().count());
    eprintln!("nnz(L)       {}", f.nnz_l());
    eprintln!("factor_us    {:.3}", factor_time.as_secs_f64() * 1e6);
    eprintln!("solve_us     {:.3}", solve_time.as_secs_f64() * 1e6);
    eprintln!("residual     {residual:.16e}");

    let mut out = output(args.out.as_deref())?;
    writeln!(out, "bus_id,angle_rad")?;
    for (pos, angle) in model.full_angles(&d).into_iter().enumerate() {
        writeln!(out, "{},{angle:.16e}", model.bus_id(pos))?;
    }
    out.flush()?;
    Ok(())
}

fn one_based(values: &[usize], what: &str) -> Result<Vec<usize>, Failure> {
    values
        .iter()
        .map(|&v| {
            v.checked_sub(1)
                .ok_or_else(|| Failure::config(anyhow!("{what} numbers are 1-based; got 0")))
        })
        .collect()
}

pub fn contingency(args: ContingencyArgs) -> CmdResult {
    let method: Method = args.method.parse().map_err(|e: String| Failure::config(anyhow!(e)))?;
    if args.branches.is_empty() && args.generators.is_empty() {
        return Err(Failure::config(anyhow!("give --branches and/or --generators")));
    }
    let model = args.input.load_model()?;
    let c = Contingency {
        branches: one_based(&args.branches, "branch")?,
        generators: one_based(&args.generators, "generator")?,
    };
    match contingency_update(&model, &c) {
        Ok(_) | Err(GridError::EmptyUpdate) => {}
        Err(e) => return Err(Failure::config(e.into())),
    }
    let (f, x) = factor_base(&model)?;
    let cfg = SweepConfig {
        k: c.k(),
        selector: Selector::Explicit(vec![c.clone()]),
        methods: vec![method],
        tol: args.solver.tol,
        max_it: args.solver.max_it,
        repetitions: args.solver.reps,
        jobs: 1,
        ..SweepConfig::default()
    };
    cfg.validate().map_err(|e| Failure::config(e.into()))?;
    let mut ws = Workspace::for_factor(&f);
    let mut result = evaluate_contingency(0, &model, &f, &x, &c, &cfg, &mut ws);
    result.contingency = Contingency {
        branches: args.branches.clone(),
        generators: args.generators.clone(),
    };

    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::config(e.into()))?;
    writeln!(out)?;
    out.flush()?;
    drop(out);

    match result.status {
        Status::Islanded => {
            let islands: Vec<String> = result.islands.iter().map(|i| format!("{i:?}")).collect();
            Err(Failure {
                code: EXIT_ISLANDED,
                error: anyhow!("contingency islands buses {}", islands.join(", ")),
            })
        }
        Status::Singular => Err(Failure {
            code: EXIT_ISLANDED,
            error: anyhow!("updated system is singular"),
        }),
        Status::Ok => Ok(()),
        other => {
            let msg = result.methods.first().and_then(|m| m.error.clone()).unwrap_or_default();
            Err(Failure::config(anyhow!("contingency ended with status {}: {msg}", other.name())))
        }
    }
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let methods = args
        .methods
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse::<Method>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::config(anyhow!(e)))?;
    let selector = match args.selector.as_str() {
        "exhaustive" => Selector::Exhaustive,
        "random" => Selector::Random {
            samples: args.samples,
            seed: args.seed,
        },
        s => match s.strip_prefix("list:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {path}"))
                    .map_err(Failure::config)?;
                Selector::Explicit(parse_contingency_list(&text).map_err(|e| Failure::config(e.into()))?)
            }
            None => {
                return Err(Failure::config(anyhow!(
                    "unknown selector `{s}` (expected exhaustive, random or list:PATH)"
                )))
            }
        },
    };
    let cfg = SweepConfig {
        k: args.k,
        selector,
        methods,
        tol: args.solver.tol,
        max_it: args.solver.max_it,
        repetitions: args.solver.reps,
        jobs: args.jobs,
        exhaustive_cap: args.cap,
    };
    cfg.validate().map_err(|e| Failure::config(e.into()))?;
    let model = args.input.load_model()?;
    let (f, x) = factor_base(&model)?;
    let results = run_sweep(&model, &f, &x, &cfg).map_err(|e| Failure::config(e.into()))?;
    let mut out = output(args.out.as_deref())?;
    write_csv(&results, &mut out).map_err(|e| Failure::config(e.into()))?;
    out.flush()?;
    drop(out);

    let summary = summarize(&results);
    eprintln!(
        "{} contingencies: {} ok, {} islanded, {} singular, {} no_convergence, {} failed",
        summary.total, summary.ok, summary.islanded, summary.singular, summary.no_convergence, summary.failed
    );
    for m in &summary.methods {
        let speedup = m.speedup_vs_refactor.map_or(String::new(), |s| format!("  speedup {s:.2}x"));
        eprintln!(
            "{:<9} median {:.3} us  mean residual {:.3e}{speedup}",
            m.method, m.median_time_us, m.mean_residual
        );
    }
    if let Some(path) = &args.summary {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .map_err(Failure::config)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &summary).map_err(|e| Failure::config(e.into()))?;
    }
    Ok(())
}

pub fn selftest(args: SelftestArgs) -> CmdResult {
    let opts = SelftestOptions {
        n_max: args.n_max,
        cases: args.cases,
        seed: args.seed,
        inject_fault: args.inject_fault,
    };
    let reports = run_all(&opts);
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.ok() { "ok" } else { "FAILED" };
        println!(
            "{:<15} cases {:>4}  passed {:>4}  skipped {:>3}  {verdict}",
            r.suite.name(),
            r.cases,
            r.passed,
            r.skipped
        );
        if let Some(f) = &r.failure {
            println!("  minimized reproduction: seed {} n {}: {}", f.seed, f.n, f.detail);
            failed.push(r.suite.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_SELFTEST,
            error: anyhow!("property suites failed: {}", failed.join(", ")),
        })
    }
}

pub fn gen(args: GenArgs) -> CmdResult {
    let params = parse_gen_spec(&args.spec).map_err(Failure::config)?;
    let case = amps_core::grid::synthetic_grid(&params).map_err(|e| Failure::config(e.into()))?;
    let mut out = output(args.out.as_deref())?;
    out.write_all(write_matpower(&case, &args.name).as_bytes())?;
    out.flush()?;
    Ok(())
}
