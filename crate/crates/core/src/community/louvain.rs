//! Louvain modularity optimization (resolution 1).
//!
//! Each level repeats local moves until no node changes community, then
//! collapses communities into super-nodes (intra-community weight becomes a
//! self-loop). The run stops when a level makes no move.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{modularity, CommunityAssignment};
use crate::graph::AttributedGraph;
use crate::seed::{self, Stream};

/// Minimum modularity gain (in units of `1/m`) for a move to count.
const MIN_GAIN: f64 = 1e-12;
const MAX_SWEEPS_PER_LEVEL: usize = 1000;

pub fn louvain(g: &AttributedGraph, seed: u64) -> CommunityAssignment {
    louvain_observed(g, seed, |_, _| {})
}

/// Like [`louvain`], calling `observe(level, q)` after every level with the
/// modularity of the partition reached so far, measured on `g`.
pub fn louvain_observed(
    g: &AttributedGraph,
    seed: u64,
    mut observe: impl FnMut(usize, f64),
) -> CommunityAssignment {
    let n = g.num_nodes();
    let mut membership: Vec<usize> = (0..n).collect();
    if g.num_edges() == 0 {
        return CommunityAssignment::singletons(n);
    }
    let mut rng = seed::rng(seed, Stream::Communities);
    let mut level_graph = WeightedGraph::from_graph(g);
    let mut level = 0;
    loop {
        let (local, moved) = level_graph.local_moving(&mut rng);
        if !moved {
            break;
        }
        let compact = CommunityAssignment::from_raw(&local);
        for m in membership.iter_mut() {
            *m = compact.labels()[*m];
        }
        if let Ok(q) = modularity(g, &CommunityAssignment::from_raw(&membership)) {
            observe(level, q);
        }
        level += 1;
        if compact.num_communities() == level_graph.len() {
            break;
        }
        level_graph = level_graph.aggregate(&compact);
    }
    CommunityAssignment::from_raw(&membership)
}

struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl WeightedGraph {
    fn from_graph(g: &AttributedGraph) -> Self {
        let adj = (0..g.num_nodes())
            .map(|i| g.neighbors().of(i).iter().map(|&j| (j, 1.0)).collect())
            .collect();
        Self {
            adj,
            self_loops: vec![0.0; g.num_nodes()],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strengths(&self) -> Vec<f64> {
        self.adj
            .iter()
            .zip(&self.self_loops)
            .map(|(row, &l)| row.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * l)
            .collect()
    }

    /// One level of local moving. Returns the community of every node and
    /// whether any node moved.
    fn local_moving(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let k = self.strengths();
        let two_m: f64 = k.iter().sum();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut total = k.clone();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        let mut moved_any = false;
        if two_m == 0.0 {
            return (comm, false);
        }
        for _ in 0..MAX_SWEEPS_PER_LEVEL {
            order.shuffle(rng);
            let mut moves = 0;
            for &i in &order {
                let own = comm[i];
                touched.clear();
                touched.push(own);
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                total[own] -= k[i];
                let gain = |c: usize| link[c] - total[c] * k[i] / two_m;
                let own_gain = gain(own);
                touched.sort_unstable();
                let mut best = own;
                let mut best_gain = own_gain;
                for &c in &touched {
                    let g = gain(c);
                    if g > best_gain || (g == best_gain && c < best) {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != own && best_gain - own_gain <= MIN_GAIN {
                    best = own;
                }
                total[best] += k[i];
                for &c in &touched {
                    link[c] = 0.0;
                }
                if best != own {
                    comm[i] = best;
                    moves += 1;
                }
            }
            if moves == 0 {
                break;
            }
            moved_any = true;
        }
        (comm, moved_any)
    }

    fn aggregate(&self, a: &CommunityAssignment) -> Self {
        let k = a.num_communities();
        let labels = a.labels();
        let mut self_loops = vec![0.0; k];
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, row) in self.adj.iter().enumerate() {
            let ci = labels[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in row {
                let cj = labels[j];
                if ci == cj {
                    // each internal edge is seen from both endpoints
                    self_loops[ci] += 0.5 * w;
                } else {
                    entries.push((ci, cj, w));
                }
            }
        }
        entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for (ci, cj, w) in entries {
            match adj[ci].last_mut() {
                Some((last, acc)) if *last == cj => *acc += w,
                _ => adj[ci].push((cj, w)),
            }
        }
        Self { adj, self_loops }
    }
}
