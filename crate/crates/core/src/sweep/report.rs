use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ContingencyResult, Method, Status, SweepError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ok: usize,
    pub mean_time_us: f64,
    pub median_time_us: f64,
    pub p95_time_us: f64,
    pub mean_residual: f64,
    pub max_residual: f64,
    pub mean_iterations: f64,
    /// Median refactor time over this method's median time.
    pub speedup_vs_refactor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub method: Method,
    pub count: usize,
    pub median_time_us: f64,
    pub mean_time_us: f64,
    pub median_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoStats {
    pub min: usize,
    pub median: f64,
    pub mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub total: usize,
    pub ok: usize,
    pub islanded: usize,
    pub singular: usize,
    pub no_convergence: usize,
    pub failed: usize,
    pub no_successful_contingencies: bool,
    pub methods: Vec<MethodSummary>,
    pub time_vs_k: Vec<KRow>,
    pub rho: Option<RhoStats>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Nearest-rank percentile.
fn percentile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Aggregates over the contingencies whose every method succeeded.
pub fn summarize(results: &[ContingencyResult]) -> SweepSummary {
    let count = |s: Status| results.iter().filter(|r| r.status == s).count();
    let ok: Vec<&ContingencyResult> = results.iter().filter(|r| r.status == Status::Ok).collect();

    let mut methods_seen: Vec<Method> = results.iter().flat_map(|r| r.methods.iter().map(|m| m.method)).collect();
    methods_seen.sort();
    methods_seen.dedup();

    let times_of = |m: Method| -> Vec<f64> {
        sorted(ok.iter().filter_map(|r| r.method(m)).map(|x| x.median_time_us).collect())
    };
    let refactor_median = methods_seen
        .contains(&Method::Refactor)
        .then(|| median_sorted(&times_of(Method::Refactor)))
        .filter(|v| v.is_finite());

    let methods = methods_seen
        .iter()
        .map(|&m| {
            let times = times_of(m);
            let rows: Vec<_> = ok.iter().filter_map(|r| r.method(m)).collect();
            let residuals: Vec<f64> = rows.iter().filter_map(|x| x.residual).collect();
            let iters: Vec<f64> = rows.iter().map(|x| x.iterations as f64).collect();
            let med = median_sorted(&times);
            MethodSummary {
                method: m,
                ok: rows.len(),
                mean_time_us: mean(&times),
                median_time_us: med,
                p95_time_us: percentile_sorted(&times, 95.0),
                mean_residual: mean(&residuals),
                max_residual: residuals.iter().copied().fold(f64::NAN, f64::max),
                mean_iterations: mean(&iters),
                speedup_vs_refactor: refactor_median.filter(|_| med > 0.0).map(|r| r / med),
            }
        })
        .collect();

    let mut by_k: BTreeMap<(usize, Method), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &ok {
        for x in &r.methods {
            let slot = by_k.entry((r.contingency.k(), x.method)).or_default();
            slot.0.push(x.median_time_us);
            if let Some(rho) = x.rho {
                slot.1.push(rho as f64);
            }
        }
    }
    let time_vs_k = by_k
        .into_iter()
        .map(|((k, method), (times, rhos))| {
            let times = sorted(times);
            let rhos = sorted(rhos);
            KRow {
                k,
                method,
                count: times.len(),
                median_time_us: median_sorted(&times),
                mean_time_us: mean(&times),
                median_rho: (!rhos.is_empty()).then(|| median_sorted(&rhos)),
            }
        })
        .collect();

    let rhos: Vec<usize> = ok
        .iter()
        .filter_map(|r| r.methods.iter().find_map(|x| x.rho))
        .collect();
    let rho = (!rhos.is_empty()).then(|| {
        let as_f = sorted(rhos.iter().map(|&v| v as f64).collect());
        RhoStats {
            min: *rhos.iter().min().unwrap(),
            median: median_sorted(&as_f),
            mean: mean(&as_f),
            max: *rhos.iter().max().unwrap(),
        }
    });

    SweepSummary {
        total: results.len(),
        ok: ok.len(),
        islanded: count(Status::Islanded),
        singular: count(Status::Singular),
        no_convergence: count(Status::NoConvergence),
        failed: count(Status::Failed),
        no_successful_contingencies: ok.is_empty(),
        methods,
        time_vs_k,
        rho,
    }
}

fn full(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

fn element_list(r: &ContingencyResult) -> String {
    let c = &r.contingency;
    c.branches
        .iter()
        .map(|b| (b + 1).to_string())
        .chain(c.generators.iter().map(|g| format!("g{}", g + 1)))
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per contingency and method: `id,branches,status,method,residual,time_us,iterations,rho,m`.
/// Element numbers are 1-based; reals carry 17 significant digits.
pub fn write_csv<W: Write>(results: &[ContingencyResult], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "branches", "status", "method", "residual", "time_us", "iterations", "rho", "m"])?;
    for r in results {
        let elements = element_list(r);
        for x in &r.methods {
            w.write_record([
                r.id.to_string(),
                elements.clone(),
                x.status.name().to_string(),
                x.method.name().to_string(),
                x.residual.map(full).unwrap_or_default(),
                full(x.median_time_us),
                x.iterations.to_string(),
                x.rho.map(|v| v.to_string()).unwrap_or_default(),
                r.m.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
