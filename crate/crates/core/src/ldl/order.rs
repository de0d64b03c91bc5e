use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::sparse::{Permutation, SparseMatrix};

/// Greedy minimum-degree ordering on the explicit elimination graph.
///
/// At each step the uncovered vertex of smallest current degree is
/// eliminated (ties broken by index) and its neighbourhood is turned into a
/// clique. Any permutation is a valid input to [`super::factorize`]; this one
/// only tries to keep `|L|` small.
pub fn fill_reducing_order(a: &SparseMatrix) -> Permutation {
    let n = a.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.entries() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || adj[v].len() != deg {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            merged.clear();
            merge_excluding(&adj[u], &nbrs, v, u, &mut merged);
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    debug_assert_eq!(order.len(), n);
    Permutation::new(order).expect("elimination visits every vertex once")
}

/// Sorted union of `a` and `b`, skipping `skip_a` and `skip_b`.
fn merge_excluding(a: &[usize], b: &[usize], skip_a: usize, skip_b: usize, out: &mut Vec<usize>) {
    let (mut p, mut q) = (0, 0);
    loop {
        let next = match (a.get(p), b.get(q)) {
            (Some(&x), Some(&y)) if x < y => {
                p += 1;
                x
            }
            (Some(&x), Some(&y)) if x > y => {
                q += 1;
                y
            }
            (Some(&x), Some(_)) => {
                p += 1;
                q += 1;
                x
            }
            (Some(&x), None) => {
                p += 1;
                x
            }
            (None, Some(&y)) => {
                q += 1;
                y
            }
            (None, None) => break,
        };
        if next != skip_a && next != skip_b {
            out.push(next);
        }
    }
}
