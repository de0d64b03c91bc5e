//! Power-grid cases in the MATPOWER text format, the reduced DC model and
//! branch/generator outages as principal-submatrix updates.

mod dc;
mod matpower;
mod synth;
mod topology;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dc::{build_dc, contingency_update, injections_after, outage_matrix, unreduced_laplacian, DcModel};
pub use matpower::{parse_matpower, write_matpower};
pub use synth::{synthetic_grid, SynthParams};
pub use topology::{check_connectivity, find_bridges, Connectivity, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("missing section `mpc.{0}`")]
    MissingSection(&'static str),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("more than one slack bus (buses {first} and {second})")]
    MultipleSlack { first: usize, second: usize },
    #[error("no slack bus (type 3)")]
    NoSlack,
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("{what} references unknown bus {bus}")]
    UnknownBus { what: String, bus: usize },
    #[error("in-service network is disconnected ({components} components)")]
    DisconnectedBase { components: usize },
    #[error("branch {branch} ({from}-{to}) has zero reactance")]
    ZeroReactance { branch: usize, from: usize, to: usize },
    #[error("branch {0} is out of service in the base case")]
    BranchOutOfService(usize),
    #[error("branch index {index} out of range ({count} branches)")]
    BranchIndex { index: usize, count: usize },
    #[error("generator index {index} out of range ({count} generators)")]
    GeneratorIndex { index: usize, count: usize },
    #[error("contingency lists element {0} twice")]
    DuplicateElement(usize),
    #[error("contingency leaves the reduced system unchanged")]
    EmptyUpdate,
    #[error("invalid synthetic grid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
    Isolated,
}

impl BusType {
    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
            BusType::Isolated => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Slack),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    /// Real power demand, MW.
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gen {
    pub bus: usize,
    /// Real power output, MW.
    pub pg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series reactance, p.u.
    pub x: f64,
    /// Off-nominal tap ratio; 0 means 1.
    pub tap: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn susceptance(&self) -> f64 {
        let tap = if self.tap == 0.0 { 1.0 } else { self.tap };
        1.0 / (self.x * tap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Gen>,
    pub branches: Vec<Branch>,
}

impl GridCase {
    /// Checks bus ids, slack count and element references.
    pub fn validate(&self) -> Result<(), GridError> {
        let mut seen = std::collections::HashSet::with_capacity(self.buses.len());
        let mut slack = None;
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(GridError::DuplicateBus(b.id));
            }
            if b.kind == BusType::Slack {
                if let Some(first) = slack {
                    return Err(GridError::MultipleSlack { first, second: b.id });
                }
                slack = Some(b.id);
            }
        }
        if slack.is_none() {
            return Err(GridError::NoSlack);
        }
        for (i, g) in self.gens.iter().enumerate() {
            if !seen.contains(&g.bus) {
                return Err(GridError::UnknownBus {
                    what: format!("generator {i}"),
                    bus: g.bus,
                });
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !seen.contains(&bus) {
                    return Err(GridError::UnknownBus {
                        what: format!("branch {i}"),
                        bus,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn slack_bus(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusType::Slack)
    }

    /// Bus id to position in `buses`.
    pub fn bus_positions(&self) -> std::collections::HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = usize> + '_ {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.in_service)
            .map(|(i, _)| i)
    }
}

/// A set of simultaneous outages, as 0-based indices into the case's branch and generator lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub branches: Vec<usize>,
    pub generators: Vec<usize>,
}

impl Contingency {
    pub fn branches(branches: Vec<usize>) -> Self {
        Contingency {
            branches,
            generators: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.branches.len() + self.generators.len()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Slack at bus 1, branches 1-2 (x = 0.1) and 2-3 (x = 0.2).
    pub const THREE_BUS: &str = "\
function mpc = three_bus
mpc.version = '2';
mpc.baseMVA = 100;
% bus_i type Pd
mpc.bus = [
    1 3 0;
    2 1 50;
    3 1 30;
];
mpc.gen = [
    1 80 0 0 0 1 100 1 200 0;
];
mpc.branch = [
    1 2 0 0.1 0 0 0 0 0 0 1;
    2 3 0 0.2 0 0 0 0 0 0 1;
];
";

    pub fn three_bus() -> GridCase {
        parse_matpower(THREE_BUS).unwrap()
    }

    pub fn triangle() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus { id: 1, kind: BusType::Slack, pd: 0.0 },
                Bus { id: 2, kind: BusType::Pq, pd: 20.0 },
                Bus { id: 3, kind: BusType::Pq, pd: 10.0 },
            ],
            gens: vec![Gen { bus: 1, pg: 30.0, in_service: true }],
            branches: vec![
                Branch { from: 1, to: 2, x: 0.1, tap: 0.0, in_service: true },
                Branch { from: 2, to: 3, x: 0.25, tap: 0.0, in_service: true },
                Branch { from: 1, to: 3, x: 0.5, tap: 0.0, in_service: true },
            ],
        }
    }
}
