//! N-k contingency sweeps comparing the two update paths against refactorization.

mod report;
mod select;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amps::{default_max_it, solve_direct_with, solve_iterative_with, AmpsError, DEFAULT_GMRES_TOL};
use crate::grid::{contingency_update, injections_after, outage_matrix, Connectivity, Contingency, DcModel, GridError};
use crate::ldl::{factorize, fill_reducing_order, FactorError, LdlFactorization, Workspace};
use crate::sparse::norm2;

pub use report::{summarize, write_csv, KRow, MethodSummary, RhoStats, SweepSummary};
pub use select::{binomial, parse_contingency_list, select_contingencies};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Gmres,
    Refactor,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::Gmres, Method::Refactor];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Gmres => "gmres",
            Method::Refactor => "refactor",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Method::Direct),
            "gmres" | "iterative" => Ok(Method::Gmres),
            "refactor" => Ok(Method::Refactor),
            other => Err(format!("unknown method `{other}` (expected direct, gmres or refactor)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selector {
    /// Every k-subset of the in-service branches, subject to the cap.
    Exhaustive,
    Random { samples: usize, seed: u64 },
    Explicit(Vec<Contingency>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k: usize,
    pub selector: Selector,
    pub methods: Vec<Method>,
    pub tol: f64,
    /// GMRES iteration cap; `4m` when unset.
    pub max_it: Option<usize>,
    pub repetitions: usize,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
    pub exhaustive_cap: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k: 1,
            selector: Selector::Exhaustive,
            methods: Method::ALL.to_vec(),
            tol: DEFAULT_GMRES_TOL,
            max_it: None,
            repetitions: 20,
            jobs: 1,
            exhaustive_cap: 1_000_000,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |s: String| Err(SweepError::Config(s));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if let Selector::Random { samples: 0, .. } = self.selector {
            return bad("samples must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_it == Some(0) {
            return bad("max-it must be at least 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Islanded,
    Singular,
    NoConvergence,
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Islanded => "islanded",
            Status::Singular => "singular",
            Status::NoConvergence => "no_convergence",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub status: Status,
    /// `||Â x̂ - b̂|| / ||b̂||` against the from-scratch matrix; present iff `status` is ok.
    pub residual: Option<f64>,
    pub median_time_us: f64,
    pub mean_time_us: f64,
    pub iterations: usize,
    /// Closure size; absent for the refactor baseline.
    pub rho: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyResult {
    pub id: usize,
    pub contingency: Contingency,
    pub status: Status,
    /// Size of the update index set; 0 when no update was formed.
    pub m: usize,
    pub methods: Vec<MethodResult>,
    /// Largest relative distance between the successful methods' solutions.
    pub agreement: Option<f64>,
    /// Buses cut off from the slack, by id.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub islands: Vec<Vec<usize>>,
}

impl ContingencyResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Rebuilds the post-outage matrix, orders, factors and solves. Timed end to end.
pub fn baseline_refactor_solve(
    model: &DcModel,
    c: &Contingency,
    b_hat: &[f64],
) -> Result<(Vec<f64>, Duration), SweepError> {
    let start = Instant::now();
    let a = outage_matrix(model, c)?;
    let f = factorize(&a, &fill_reducing_order(&a))?;
    let x = f.solve(b_hat)?;
    Ok((x, start.elapsed()))
}

fn relative_residual(a: &crate::sparse::SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x).expect("dimensions checked by the model");
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb > 0.0 {
        norm2(&r) / nb
    } else {
        norm2(&r)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn status_of(e: &AmpsError) -> Status {
    match e {
        AmpsError::SingularSchur { .. } | AmpsError::SingularOperator { .. } => Status::Singular,
        AmpsError::NoConvergence { .. } => Status::NoConvergence,
        AmpsError::Factor(FactorError::ZeroPivot { .. }) => Status::Singular,
        _ => Status::Failed,
    }
}

struct Run {
    x: Option<Vec<f64>>,
    status: Status,
    iterations: usize,
    rho: Option<usize>,
    error: Option<String>,
    times: Vec<f64>,
}

fn run_method(
    method: Method,
    model: &DcModel,
    f: &LdlFactorization,
    x_orig: &[f64],
    c: &Contingency,
    cfg: &SweepConfig,
    ws: &mut Workspace,
) -> Run {
    let mut times = Vec::with_capacity(cfg.repetitions);
    let mut last = None;
    for _ in 0..cfg.repetitions {
        let start = Instant::now();
        let outcome: Result<(Vec<f64>, usize, Option<usize>), (Status, String)> = match method {
            Method::Refactor => injections_after(model, c)
                .map_err(SweepError::from)
                .and_then(|b_hat| baseline_refactor_solve(model, c, &b_hat))
                .map(|(x, _)| (x, 0, None))
                .map_err(|e| {
                    let status = match e {
                        SweepError::Factor(FactorError::ZeroPivot { .. }) => Status::Singular,
                        _ => Status::Failed,
                    };
                    (status, e.to_string())
                }),
            Method::Direct | Method::Gmres => {
                let prepared = contingency_update(model, c).and_then(|u| Ok((injections_after(model, c)?, u)));
                match prepared {
                    Err(e) => Err((Status::Failed, e.to_string())),
                    Ok((b_hat, u)) => {
                        let b = &model.p_reduced;
                        let solved = if method == Method::Direct {
                            solve_direct_with(f, x_orig, &u, b, &b_hat, ws)
                        } else {
                            let max_it = cfg.max_it.unwrap_or_else(|| default_max_it(u.m()));
                            solve_iterative_with(f, x_orig, &u, b, &b_hat, cfg.tol, max_it, ws)
                        };
                        solved
                            .map(|(x, rep)| (x, rep.iterations, Some(rep.rho)))
                            .map_err(|e| (status_of(&e), e.to_string()))
                    }
                }
            }
        };
        times.push(start.elapsed().as_secs_f64() * 1e6);
        let failed = outcome.is_err();
        last = Some(outcome);
        if failed {
            break;
        }
    }
    match last.expect("at least one repetition") {
        Ok((x, iterations, rho)) => Run {
            x: Some(x),
            status: Status::Ok,
            iterations,
            rho,
            error: None,
            times,
        },
        Err((status, msg)) => Run {
            x: None,
            status,
            iterations: 0,
            rho: None,
            error: Some(msg),
            times,
        },
    }
}

/// Evaluates one contingency with every configured method.
pub fn evaluate_contingency(
    id: usize,
    model: &DcModel,
    f: &LdlFactorization,
    x_orig: &[f64],
    c: &Contingency,
    cfg: &SweepConfig,
    ws: &mut Workspace,
) -> ContingencyResult {
    let m = contingency_update(model, c).map_or(0, |u| u.m());
    if let Connectivity::Islanded(parts) = model.check_connectivity(c) {
        let methods = cfg
            .methods
            .iter()
            .map(|&method| MethodResult {
                method,
                status: Status::Islanded,
                residual: None,
                median_time_us: f64::NAN,
                mean_time_us: f64::NAN,
                iterations: 0,
                rho: None,
                error: None,
            })
            .collect();
        return ContingencyResult {
            id,
            contingency: c.clone(),
            status: Status::Islanded,
            m,
            methods,
            agreement: None,
            islands: parts[1..].to_vec(),
        };
    }

    let check = outage_matrix(model, c).ok();
    let b_hat = injections_after(model, c).ok();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut solutions: Vec<(Method, Vec<f64>)> = Vec::new();
    for &method in &cfg.methods {
        let mut run = run_method(method, model, f, x_orig, c, cfg, ws);
        let residual = match (&run.x, &check, &b_hat) {
            (Some(x), Some(a), Some(b)) => Some(relative_residual(a, x, b)),
            _ => None,
        };
        let mean = run.times.iter().sum::<f64>() / run.times.len() as f64;
        methods.push(MethodResult {
            method,
            status: run.status,
            residual,
            median_time_us: median(&mut run.times),
            mean_time_us: mean,
            iterations: run.iterations,
            rho: run.rho,
            error: run.error,
        });
        if let Some(x) = run.x {
            solutions.push((method, x));
        }
    }
    let reference = solutions
        .iter()
        .find(|(m, _)| *m == Method::Refactor)
        .or(solutions.first())
        .map(|(_, x)| x.clone());
    let agreement = reference.filter(|_| solutions.len() > 1).map(|r| {
        let scale = norm2(&r).max(f64::MIN_POSITIVE);
        solutions
            .iter()
            .map(|(_, x)| norm2(&x.iter().zip(&r).map(|(p, q)| p - q).collect::<Vec<_>>()) / scale)
            .fold(0.0, f64::max)
    });
    let status = methods
        .iter()
        .map(|r| r.status)
        .find(|&s| s != Status::Ok)
        .unwrap_or(Status::Ok);
    ContingencyResult {
        id,
        contingency: c.clone(),
        status,
        m,
        methods,
        agreement,
        islands: Vec::new(),
    }
}

/// Runs the configured sweep. Per-contingency failures are recorded, never raised.
pub fn run_sweep(
    model: &DcModel,
    f: &LdlFactorization,
    x_orig: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<ContingencyResult>, SweepError> {
    cfg.validate()?;
    if f.n() != model.n() || x_orig.len() != model.n() {
        return Err(SweepError::Config(format!(
            "factorization has dimension {} and x has length {}, model has {} reduced buses",
            f.n(),
            x_orig.len(),
            model.n()
        )));
    }
    let selected = select_contingencies(model, cfg)?;
    log::info!("evaluating {} contingencies with k = {}", selected.len(), cfg.k);
    let eval = |ws: &mut Workspace, (id, c): (usize, &Contingency)| evaluate_contingency(id, model, f, x_orig, c, cfg, ws);
    let results = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| SweepError::Config(e.to_string()))?;
        pool.install(|| {
            selected
                .par_iter()
                .enumerate()
                .map_init(|| Workspace::for_factor(f), |ws, item| eval(ws, item))
                .collect()
        })
    } else {
        let mut ws = Workspace::for_factor(f);
        selected.iter().enumerate().map(|item| eval(&mut ws, item)).collect()
    };
    Ok(results)
}
