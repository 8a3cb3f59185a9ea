//! Planted-partition graphs and anomaly injection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matrix::Matrix;
use crate::seed::{self, Stream};

/// Share of the expected degree spent on edges between communities.
pub const DEFAULT_MIXING: f64 = 0.1;
/// Standard deviation of node features around their community centroid.
pub const DEFAULT_FEATURE_NOISE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub num_communities: usize,
    pub feat_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            num_communities: 4,
            feat_dim: 16,
            p_in: 0.0576,
            p_out: 0.0021,
            feature_noise: DEFAULT_FEATURE_NOISE,
            seed: 0,
        }
    }
}

/// Standard normal draw (Box-Muller).
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Block of each node: contiguous blocks whose sizes differ by at most one.
pub fn block_assignment(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// Edge probabilities giving an expected degree of `avg_degree` with
/// `mixing` of it spent across blocks.
pub fn probabilities_for_degree(
    n: usize,
    k: usize,
    avg_degree: f64,
    mixing: f64,
) -> Result<(f64, f64)> {
    if !(avg_degree.is_finite() && avg_degree >= 0.0) {
        return Err(Error::InfeasibleDegree(format!("average degree {avg_degree}")));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidConfig(format!("need n >= communities >= 1, got n={n}, k={k}")));
    }
    let block = n as f64 / k as f64;
    let (intra, inter) = if k == 1 {
        (avg_degree, 0.0)
    } else {
        (avg_degree * (1.0 - mixing), avg_degree * mixing)
    };
    let p_in = if intra == 0.0 { 0.0 } else { intra / (block - 1.0) };
    let p_out = if inter == 0.0 { 0.0 } else { inter / (n as f64 - block) };
    if !(p_in.is_finite() && p_out.is_finite() && (0.0..=1.0).contains(&p_in) && (0.0..=1.0).contains(&p_out)) {
        return Err(Error::InfeasibleDegree(format!(
            "average degree {avg_degree} needs p_in={p_in}, p_out={p_out} on {n} nodes in {k} blocks"
        )));
    }
    Ok((p_in, p_out))
}

/// Planted partition with Gaussian features around per-block centroids.
/// Returns the unlabeled graph and the planted block of every node.
pub fn planted_partition(cfg: &SyntheticConfig) -> Result<(AttributedGraph, Vec<usize>)> {
    let (n, k, m) = (cfg.num_nodes, cfg.num_communities, cfg.feat_dim);
    if k == 0 || n < k {
        return Err(Error::InvalidConfig(format!("need n >= communities >= 1, got n={n}, k={k}")));
    }
    if m == 0 {
        return Err(Error::EmptyFeatures);
    }
    let prob_ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
    if !(prob_ok(cfg.p_in) && prob_ok(cfg.p_out)) {
        return Err(Error::InfeasibleDegree(format!(
            "edge probabilities must lie in [0, 1], got p_in={}, p_out={}",
            cfg.p_in, cfg.p_out
        )));
    }
    if !(cfg.feature_noise.is_finite() && cfg.feature_noise >= 0.0) {
        return Err(Error::InvalidConfig("feature_noise must be non-negative".into()));
    }
    let mut rng = seed::rng(cfg.seed, Stream::Synthetic);
    let blocks = block_assignment(n, k);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if blocks[u] == blocks[v] { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| normal(&mut rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * m);
    for &b in &blocks {
        for &c in &centroids[b] {
            data.push(c + cfg.feature_noise * normal(&mut rng));
        }
    }
    let features = Matrix::from_vec(n, m, data)?;
    Ok((AttributedGraph::new(n, edges, features, None)?, blocks))
}

/// Planted-partition graph with the requested expected degree and a 10%
/// inter-community share.
pub fn generate_synthetic(
    n: usize,
    avg_degree: f64,
    feat_dim: usize,
    n_communities: usize,
    seed: u64,
) -> Result<AttributedGraph> {
    let (p_in, p_out) = probabilities_for_degree(n, n_communities, avg_degree, DEFAULT_MIXING)?;
    let cfg = SyntheticConfig {
        num_nodes: n,
        num_communities: n_communities,
        feat_dim,
        p_in,
        p_out,
        feature_noise: DEFAULT_FEATURE_NOISE,
        seed,
    };
    planted_partition(&cfg).map(|(g, _)| g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    pub n_structural: usize,
    pub clique_size: usize,
    pub n_contextual: usize,
    pub swap_candidates: usize,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            n_structural: 0,
            clique_size: 6,
            n_contextual: 0,
            swap_candidates: 50,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.clique_size < 2 {
            return Err(Error::InvalidConfig("clique_size must be at least 2".into()));
        }
        if self.n_structural == 1 {
            return Err(Error::InvalidConfig("a clique needs at least two structural nodes".into()));
        }
        if self.n_structural + self.n_contextual > num_nodes {
            return Err(Error::InvalidConfig(format!(
                "{} anomalies requested on {num_nodes} nodes",
                self.n_structural + self.n_contextual
            )));
        }
        if self.n_contextual > 0 && (self.swap_candidates == 0 || num_nodes < 2) {
            return Err(Error::InvalidConfig(
                "contextual anomalies need swap_candidates >= 1 and two or more nodes".into(),
            ));
        }
        Ok(())
    }
}

/// Sizes of the injected cliques: `n / clique_size` cliques (at least one),
/// with the remainder spread one node at a time from the first clique.
pub fn clique_sizes(n_structural: usize, clique_size: usize) -> Vec<usize> {
    if n_structural == 0 {
        return Vec::new();
    }
    let count = (n_structural / clique_size).max(1);
    let base = n_structural / count;
    let extra = n_structural % count;
    (0..count).map(|i| base + usize::from(i < extra)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn farthest_candidate(rng: &mut ChaCha8Rng, features: &Matrix, node: usize, k: usize) -> usize {
    let n = features.rows();
    let mut best = (f64::NEG_INFINITY, node);
    for _ in 0..k {
        // uniform over the other n - 1 nodes
        let mut c = rng.gen_range(0..n - 1);
        if c >= node {
            c += 1;
        }
        let d = squared_distance(features.row(node), features.row(c));
        if d > best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Adds clique anomalies and far-feature attribute anomalies; returns the
/// graph with labels marking exactly the injected nodes.
pub fn inject_anomalies(g: &AttributedGraph, ic: &InjectionConfig) -> Result<AttributedGraph> {
    let n = g.num_nodes();
    ic.validate(n)?;
    let mut rng = seed::rng(ic.seed, Stream::Injection);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let structural = &order[..ic.n_structural];
    let contextual = &order[ic.n_structural..ic.n_structural + ic.n_contextual];

    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    let mut at = 0;
    for size in clique_sizes(ic.n_structural, ic.clique_size) {
        let members = &structural[at..at + size];
        for (i, &u) in members.iter().enumerate() {
            for &v in &members[i + 1..] {
                edges.push((u, v));
            }
        }
        at += size;
    }

    let original = g.features();
    let mut features = original.clone();
    for &node in contextual {
        let src = farthest_candidate(&mut rng, original, node, ic.swap_candidates);
        features.row_mut(node).copy_from_slice(original.row(src));
    }

    let mut labels = vec![0u8; n];
    for &i in structural.iter().chain(contextual) {
        labels[i] = 1;
    }
    AttributedGraph::new(n, edges, features, Some(labels))
}
