//! Seeded synthetic transmission-like grids: a random spanning tree of a
//! square lattice, extra chords, loads everywhere and a few balancing generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Branch, Bus, BusType, Gen, GridCase, GridError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    /// Target average bus degree; at least the tree's `2 (n - 1) / n`.
    pub avg_degree: f64,
    pub seed: u64,
    pub x_range: (f64, f64),
}

impl SynthParams {
    pub fn new(n: usize, avg_degree: f64, seed: u64) -> Self {
        SynthParams {
            n,
            avg_degree,
            seed,
            x_range: (0.01, 0.2),
        }
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut v: usize) -> usize {
        while self.0[v] != v {
            self.0[v] = self.0[self.0[v]];
            v = self.0[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Lattice and diagonal neighbour pairs `(i, j)` with `i < j`.
fn candidate_edges(n: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        let col = i % w;
        if col + 1 < w && i + 1 < n {
            out.push((i, i + 1));
        }
        if i + w < n {
            out.push((i, i + w));
        }
        if col + 1 < w && i + w + 1 < n {
            out.push((i, i + w + 1));
        }
        if col > 0 && i + w - 1 < n {
            out.push((i, i + w - 1));
        }
    }
    out
}

pub fn synthetic_grid(p: &SynthParams) -> Result<GridCase, GridError> {
    if p.n < 2 {
        return Err(GridError::InvalidParams(format!("need at least 2 buses, got {}", p.n)));
    }
    let (xlo, xhi) = p.x_range;
    if !(xlo > 0.0 && xhi >= xlo && xhi.is_finite()) {
        return Err(GridError::InvalidParams(format!("bad reactance range [{xlo}, {xhi}]")));
    }
    if !(p.avg_degree.is_finite() && p.avg_degree >= 0.0) {
        return Err(GridError::InvalidParams(format!("bad average degree {}", p.avg_degree)));
    }
    let n = p.n;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let w = (n as f64).sqrt().ceil() as usize;

    let cand = candidate_edges(n, w);
    // Axis-aligned lattice edges first with random keys; diagonals only as chords.
    let mut keyed: Vec<(f64, usize)> = cand
        .iter()
        .enumerate()
        .map(|(idx, &(i, j))| {
            let diagonal = j != i + 1 && j != i + w;
            let key: f64 = rng.gen();
            (if diagonal { key + 1.0 } else { key }, idx)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut dsu = Dsu((0..n).collect());
    let mut used = vec![false; cand.len()];
    let mut edges = Vec::with_capacity((p.avg_degree * n as f64 / 2.0) as usize + n);
    let mut degree = vec![0usize; n];
    for &(_, idx) in &keyed {
        let (i, j) = cand[idx];
        if dsu.union(i, j) {
            used[idx] = true;
            edges.push((i, j));
            degree[i] += 1;
            degree[j] += 1;
        }
    }

    let target = ((p.avg_degree * n as f64) / 2.0).round() as usize;
    // Close the loop at tree leaves so few branches are bridges.
    let mut leaf_order: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    leaf_order.shuffle(&mut rng);
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, &(i, j)) in cand.iter().enumerate() {
        if !used[idx] {
            incident[i].push(idx);
            incident[j].push(idx);
        }
    }
    for v in leaf_order {
        if edges.len() >= target || degree[v] != 1 {
            continue;
        }
        let options: Vec<usize> = incident[v].iter().copied().filter(|&idx| !used[idx]).collect();
        if let Some(&idx) = options.choose(&mut rng) {
            let (i, j) = cand[idx];
            used[idx] = true;
            edges.push((i, j));
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    let mut rest: Vec<usize> = (0..cand.len()).filter(|&idx| !used[idx]).collect();
    rest.shuffle(&mut rng);
    for idx in rest {
        if edges.len() >= target {
            break;
        }
        edges.push(cand[idx]);
    }
    if edges.len() < target {
        log::warn!(
            "synthetic grid capped at average degree {:.2} (requested {:.2})",
            2.0 * edges.len() as f64 / n as f64,
            p.avg_degree
        );
    }
    edges.shuffle(&mut rng);

    let branches = edges
        .into_iter()
        .map(|(i, j)| Branch {
            from: i + 1,
            to: j + 1,
            x: if xhi > xlo { rng.gen_range(xlo..xhi) } else { xlo },
            tap: 0.0,
            in_service: true,
        })
        .collect();

    let mut buses: Vec<Bus> = (0..n)
        .map(|i| Bus {
            id: i + 1,
            kind: if i == 0 { BusType::Slack } else { BusType::Pq },
            pd: (rng.gen_range(5.0..50.0_f64) * 100.0).round() / 100.0,
        })
        .collect();
    let total: f64 = buses.iter().map(|b| b.pd).sum();
    let n_gen = (n / 10).max(1);
    let mut gen_buses: Vec<usize> = vec![0];
    let mut others: Vec<usize> = (1..n).collect();
    others.shuffle(&mut rng);
    gen_buses.extend(others.into_iter().take(n_gen - 1));
    gen_buses.sort_unstable();
    let shares: Vec<f64> = gen_buses.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
    let share_sum: f64 = shares.iter().sum();
    let gens = gen_buses
        .iter()
        .zip(&shares)
        .map(|(&b, s)| {
            if b != 0 {
                buses[b].kind = BusType::Pv;
            }
            Gen {
                bus: b + 1,
                pg: total * s / share_sum,
                in_service: true,
            }
        })
        .collect();
    Ok(GridCase {
        base_mva: 100.0,
        buses,
        gens,
        branches,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{build_dc, find_bridges, parse_matpower, write_matpower};
    use super::*;

    #[test]
    fn connected_and_deterministic() {
        let p = SynthParams::new(200, 2.8, 11);
        let a = synthetic_grid(&p).unwrap();
        let b = synthetic_grid(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.branches.len(), 280);
        assert!(build_dc(&a).is_ok());
        let other = synthetic_grid(&SynthParams::new(200, 2.8, 12)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn balanced_generation_and_ranges() {
        let c = synthetic_grid(&SynthParams::new(150, 3.0, 3)).unwrap();
        let load: f64 = c.buses.iter().map(|b| b.pd).sum();
        let gen: f64 = c.gens.iter().map(|g| g.pg).sum();
        assert!((load - gen).abs() < 1e-9 * load);
        assert_eq!(c.gens.len(), 15);
        assert!(c.branches.iter().all(|b| (0.01..0.2).contains(&b.x)));
        assert_eq!(c.buses[0].kind, BusType::Slack);
    }

    #[test]
    fn chords_leave_few_bridges() {
        let c = synthetic_grid(&SynthParams::new(400, 2.6, 5)).unwrap();
        let bridges = find_bridges(&c).len();
        assert!(bridges < c.branches.len() / 4, "{bridges} bridges");
    }

    #[test]
    fn tree_only_when_degree_small() {
        let c = synthetic_grid(&SynthParams::new(50, 0.0, 1)).unwrap();
        assert_eq!(c.branches.len(), 49);
        assert_eq!(find_bridges(&c).len(), 49);
    }

    #[test]
    fn emitted_text_round_trips() {
        let c = synthetic_grid(&SynthParams::new(30, 2.5, 9)).unwrap();
        assert_eq!(parse_matpower(&write_matpower(&c, "synthetic")).unwrap(), c);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(synthetic_grid(&SynthParams::new(1, 2.0, 0)).is_err());
        let mut p = SynthParams::new(10, 2.0, 0);
        p.x_range = (0.0, 0.1);
        assert!(synthetic_grid(&p).is_err());
    }
}
