use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::CommunityAssignment;
use crate::graph::AttributedGraph;
use crate::seed::{self, Stream};

pub const MAX_SWEEPS: usize = 100;

/// Asynchronous label propagation. Nodes are visited in a seeded shuffled
/// order each sweep and adopt the most frequent neighbor label, smallest
/// label on ties. Stops at a fixpoint or after [`MAX_SWEEPS`].
pub fn label_propagation(g: &AttributedGraph, seed: u64) -> CommunityAssignment {
    let n = g.num_nodes();
    let mut rng = seed::rng(seed, Stream::Communities);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut seen: Vec<usize> = Vec::new();
    for _ in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            let nbrs = g.neighbors().of(i);
            if nbrs.is_empty() {
                continue;
            }
            seen.clear();
            seen.extend(nbrs.iter().map(|&j| labels[j]));
            seen.sort_unstable();
            let mut best = (0usize, usize::MAX);
            let mut start = 0;
            while start < seen.len() {
                let label = seen[start];
                let end = start + seen[start..].partition_point(|&l| l == label);
                let count = end - start;
                // sorted ascending, so strict > keeps the smallest label on ties
                if count > best.0 {
                    best = (count, label);
                }
                start = end;
            }
            if best.1 != labels[i] {
                labels[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    CommunityAssignment::from_raw(&labels)
}
