use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Contingency, GridCase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Connected,
    /// Bus ids per component; the first component holds the slack bus.
    Islanded(Vec<Vec<usize>>),
}

impl Connectivity {
    pub fn is_connected(&self) -> bool {
        matches!(self, Connectivity::Connected)
    }

    /// Components cut off from the slack.
    pub fn islands(&self) -> &[Vec<usize>] {
        match self {
            Connectivity::Connected => &[],
            Connectivity::Islanded(parts) => &parts[1..],
        }
    }
}

/// In-service adjacency with branch ids on the edges.
#[derive(Debug, Clone)]
pub struct Topology {
    ids: Vec<usize>,
    root: usize,
    offsets: Vec<usize>,
    /// `(neighbour position, branch index)`.
    adj: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(case: &GridCase) -> Self {
        let pos = case.bus_positions();
        let n = case.buses.len();
        let mut deg = vec![0usize; n + 1];
        let edges: Vec<(usize, usize, usize)> = case
            .in_service_branches()
            .map(|k| (pos[&case.branches[k].from], pos[&case.branches[k].to], k))
            .filter(|&(f, t, _)| f != t)
            .collect();
        for &(f, t, _) in &edges {
            deg[f + 1] += 1;
            deg[t + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut fill = deg.clone();
        let mut adj = vec![(0, 0); deg[n]];
        for &(f, t, k) in &edges {
            adj[fill[f]] = (t, k);
            fill[f] += 1;
            adj[fill[t]] = (f, k);
            fill[t] += 1;
        }
        Topology {
            ids: case.buses.iter().map(|b| b.id).collect(),
            root: case.slack_bus().unwrap_or(0),
            offsets: deg,
            adj,
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn neighbours(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Breadth-first search over in-service branches minus `removed`.
    pub fn check(&self, removed: &[usize]) -> Connectivity {
        let n = self.n();
        if n == 0 {
            return Connectivity::Connected;
        }
        let removed: HashSet<usize> = removed.iter().copied().collect();
        let mut comp = vec![usize::MAX; n];
        let mut parts: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::new();
        let order = std::iter::once(self.root).chain((0..n).filter(|&v| v != self.root));
        for start in order {
            if comp[start] != usize::MAX {
                continue;
            }
            let c = parts.len();
            let mut members = vec![self.ids[start]];
            comp[start] = c;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &(w, k) in self.neighbours(v) {
                    if comp[w] == usize::MAX && !removed.contains(&k) {
                        comp[w] = c;
                        members.push(self.ids[w]);
                        queue.push_back(w);
                    }
                }
            }
            if c == 0 && members.len() == n {
                return Connectivity::Connected;
            }
            members.sort_unstable();
            parts.push(members);
        }
        Connectivity::Islanded(parts)
    }

    /// Branches whose removal alone disconnects the grid. Parallel branches are never bridges.
    pub fn bridges(&self) -> Vec<usize> {
        let n = self.n();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut out = Vec::new();
        let mut time = 0;
        // (vertex, branch used to enter it, next adjacency slot)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for s in 0..n {
            if disc[s] != usize::MAX {
                continue;
            }
            disc[s] = time;
            low[s] = time;
            time += 1;
            stack.push((s, usize::MAX, self.offsets[s]));
            while let Some(top) = stack.last_mut() {
                let (v, via, slot) = *top;
                if slot < self.offsets[v + 1] {
                    top.2 += 1;
                    let (w, k) = self.adj[slot];
                    if k == via {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = time;
                        low[w] = time;
                        time += 1;
                        stack.push((w, k, self.offsets[w]));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            out.push(via);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn check_connectivity(case: &GridCase, c: &Contingency) -> Connectivity {
    Topology::new(case).check(&c.branches)
}

pub fn find_bridges(case: &GridCase) -> Vec<usize> {
    Topology::new(case).bridges()
}
