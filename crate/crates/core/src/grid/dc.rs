use std::collections::{BTreeMap, HashMap, HashSet};

use super::topology::Topology;
use super::{Connectivity, Contingency, GridCase, GridError};
use crate::amps::UpdateSpec;
use crate::sparse::{DenseMatrix, SparseMatrix, Storage};

/// DC model `B d = p` with the slack bus removed.
///
/// `B` is the susceptance-weighted Laplacian (positive diagonal), so the
/// reduced matrix is symmetric positive definite on a connected grid.
#[derive(Debug, Clone)]
pub struct DcModel {
    pub case: GridCase,
    pub b_reduced: SparseMatrix,
    /// Net injection `(sum Pg - Pd) / baseMVA` per reduced bus.
    pub p_reduced: Vec<f64>,
    /// Position of the slack bus in `case.buses`.
    pub slack: usize,
    pub bus_pos: HashMap<usize, usize>,
    pub reduced_of_bus: Vec<Option<usize>>,
    pub bus_of_reduced: Vec<usize>,
    /// `1 / (x tap)` per branch; 0 for branches out of service or looping on one bus.
    pub branch_susceptance: Vec<f64>,
    /// Endpoint positions in `case.buses`.
    pub branch_ends: Vec<(usize, usize)>,
    topology: Topology,
}

impl DcModel {
    pub fn n(&self) -> usize {
        self.bus_of_reduced.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn check_connectivity(&self, c: &Contingency) -> Connectivity {
        self.topology.check(&c.branches)
    }

    /// Phase angles for every bus, in `case.buses` order, with the slack at 0.
    pub fn full_angles(&self, d: &[f64]) -> Vec<f64> {
        self.reduced_of_bus
            .iter()
            .map(|r| r.map_or(0.0, |r| d[r]))
            .collect()
    }

    pub fn bus_id(&self, pos: usize) -> usize {
        self.case.buses[pos].id
    }
}

fn injections(case: &GridCase, bus_pos: &HashMap<usize, usize>, skip_gens: &HashSet<usize>) -> Vec<f64> {
    let mut p: Vec<f64> = case.buses.iter().map(|b| -b.pd).collect();
    for (i, g) in case.gens.iter().enumerate() {
        if g.in_service && !skip_gens.contains(&i) {
            p[bus_pos[&g.bus]] += g.pg;
        }
    }
    p.iter().map(|v| v / case.base_mva).collect()
}

fn reduced_laplacian(
    n: usize,
    reduced_of_bus: &[Option<usize>],
    susceptance: &[f64],
    ends: &[(usize, usize)],
    skip: &HashSet<usize>,
) -> SparseMatrix {
    let mut t = Vec::with_capacity(3 * ends.len());
    for (k, (&b, &(f, to))) in susceptance.iter().zip(ends).enumerate() {
        if b == 0.0 || f == to || skip.contains(&k) {
            continue;
        }
        match (reduced_of_bus[f], reduced_of_bus[to]) {
            (Some(i), Some(j)) => {
                t.push((i, i, b));
                t.push((j, j, b));
                t.push((i.max(j), i.min(j), -b));
            }
            (Some(i), None) | (None, Some(i)) => t.push((i, i, b)),
            (None, None) => {}
        }
    }
    SparseMatrix::from_triplets(&t, n, Storage::Lower).expect("indices are in range")
}

fn branch_data(case: &GridCase, bus_pos: &HashMap<usize, usize>) -> Result<(Vec<f64>, Vec<(usize, usize)>), GridError> {
    let mut sus = Vec::with_capacity(case.branches.len());
    let mut ends = Vec::with_capacity(case.branches.len());
    for (k, br) in case.branches.iter().enumerate() {
        let (f, t) = (bus_pos[&br.from], bus_pos[&br.to]);
        ends.push((f, t));
        if !br.in_service || f == t {
            sus.push(0.0);
            continue;
        }
        if br.x == 0.0 {
            return Err(GridError::ZeroReactance {
                branch: k,
                from: br.from,
                to: br.to,
            });
        }
        sus.push(br.susceptance());
    }
    Ok((sus, ends))
}

/// The full Laplacian over all buses (in `case.buses` order), lower triangle.
pub fn unreduced_laplacian(case: &GridCase) -> Result<SparseMatrix, GridError> {
    case.validate()?;
    let bus_pos = case.bus_positions();
    let (sus, ends) = branch_data(case, &bus_pos)?;
    let all: Vec<Option<usize>> = (0..case.buses.len()).map(Some).collect();
    Ok(reduced_laplacian(case.buses.len(), &all, &sus, &ends, &HashSet::new()))
}

pub fn build_dc(case: &GridCase) -> Result<DcModel, GridError> {
    case.validate()?;
    let slack = case.slack_bus().ok_or(GridError::NoSlack)?;
    let bus_pos = case.bus_positions();
    let (branch_susceptance, branch_ends) = branch_data(case, &bus_pos)?;
    let topology = Topology::new(case);
    if let Connectivity::Islanded(parts) = topology.check(&[]) {
        return Err(GridError::DisconnectedBase { components: parts.len() });
    }

    let nb = case.buses.len();
    let mut reduced_of_bus = vec![None; nb];
    let mut bus_of_reduced = Vec::with_capacity(nb - 1);
    for (pos, slot) in reduced_of_bus.iter_mut().enumerate() {
        if pos != slack {
            *slot = Some(bus_of_reduced.len());
            bus_of_reduced.push(pos);
        }
    }
    let b_reduced = reduced_laplacian(
        nb - 1,
        &reduced_of_bus,
        &branch_susceptance,
        &branch_ends,
        &HashSet::new(),
    );
    let p = injections(case, &bus_pos, &HashSet::new());
    let p_reduced = bus_of_reduced.iter().map(|&pos| p[pos]).collect();
    Ok(DcModel {
        case: case.clone(),
        b_reduced,
        p_reduced,
        slack,
        bus_pos,
        reduced_of_bus,
        bus_of_reduced,
        branch_susceptance,
        branch_ends,
        topology,
    })
}

fn check_contingency(model: &DcModel, c: &Contingency) -> Result<(), GridError> {
    let nbr = model.case.branches.len();
    let mut seen = HashSet::new();
    for &k in &c.branches {
        if k >= nbr {
            return Err(GridError::BranchIndex { index: k, count: nbr });
        }
        if !model.case.branches[k].in_service {
            return Err(GridError::BranchOutOfService(k));
        }
        if !seen.insert(k) {
            return Err(GridError::DuplicateElement(k));
        }
    }
    let ng = model.case.gens.len();
    let mut seen = HashSet::new();
    for &g in &c.generators {
        if g >= ng {
            return Err(GridError::GeneratorIndex { index: g, count: ng });
        }
        if !seen.insert(g) {
            return Err(GridError::DuplicateElement(g));
        }
    }
    Ok(())
}

/// Translates the outages into `Â = B_reduced - H E H^T`.
///
/// Each removed branch contributes `b [[1, -1], [-1, 1]]` on its endpoints, or just `b`
/// on the diagonal when one endpoint is the slack. Buses of failed generators join the
/// index set with zero rows in `E`, so the injection change stays inside it.
pub fn contingency_update(model: &DcModel, c: &Contingency) -> Result<UpdateSpec, GridError> {
    check_contingency(model, c)?;
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for &k in &c.branches {
        let (f, t) = model.branch_ends[k];
        if f == t {
            continue;
        }
        for pos in [f, t] {
            if let Some(r) = model.reduced_of_bus[pos] {
                slots.insert(r, 0);
            }
        }
    }
    for &g in &c.generators {
        let gen = &model.case.gens[g];
        if let Some(r) = model.reduced_of_bus[model.bus_pos[&gen.bus]] {
            if gen.in_service {
                slots.insert(r, 0);
            }
        }
    }
    if slots.is_empty() {
        return Err(GridError::EmptyUpdate);
    }
    for (i, v) in slots.values_mut().enumerate() {
        *v = i;
    }
    let m = slots.len();
    let mut e = DenseMatrix::zeros(m, m);
    for &k in &c.branches {
        let (f, t) = model.branch_ends[k];
        let b = model.branch_susceptance[k];
        if f == t {
            continue;
        }
        let fi = model.reduced_of_bus[f].map(|r| slots[&r]);
        let ti = model.reduced_of_bus[t].map(|r| slots[&r]);
        match (fi, ti) {
            (Some(i), Some(j)) => {
                e[(i, i)] += b;
                e[(j, j)] += b;
                e[(i, j)] -= b;
                e[(j, i)] -= b;
            }
            (Some(i), None) | (None, Some(i)) => e[(i, i)] += b,
            (None, None) => {}
        }
    }
    UpdateSpec::new(slots.into_keys().collect(), e).map_err(|err| GridError::InvalidParams(err.to_string()))
}

/// Right-hand side after the outage: `p_reduced` with failed generators' output removed.
pub fn injections_after(model: &DcModel, c: &Contingency) -> Result<Vec<f64>, GridError> {
    check_contingency(model, c)?;
    if c.generators.is_empty() {
        return Ok(model.p_reduced.clone());
    }
    let skip: HashSet<usize> = c.generators.iter().copied().collect();
    let p = injections(&model.case, &model.bus_pos, &skip);
    Ok(model.bus_of_reduced.iter().map(|&pos| p[pos]).collect())
}

/// Reduced Laplacian of the post-outage grid assembled from scratch, in the base model's
/// index order. No connectivity check: an islanding outage gives a singular matrix.
pub fn outage_matrix(model: &DcModel, c: &Contingency) -> Result<SparseMatrix, GridError> {
    check_contingency(model, c)?;
    let skip: HashSet<usize> = c.branches.iter().copied().collect();
    Ok(reduced_laplacian(
        model.n(),
        &model.reduced_of_bus,
        &model.branch_susceptance,
        &model.branch_ends,
        &skip,
    ))
}
