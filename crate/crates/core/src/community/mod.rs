//! Community detection and community-wise feature smoothing.

mod label_propagation;
mod louvain;

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use label_propagation::{label_propagation, MAX_SWEEPS};
pub use louvain::{louvain, louvain_observed};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommunityAlgorithm {
    #[default]
    Louvain,
    #[serde(alias = "label_propagation")]
    Labelprop,
}

impl CommunityAlgorithm {
    pub fn detect(self, g: &AttributedGraph, seed: u64) -> CommunityAssignment {
        match self {
            CommunityAlgorithm::Louvain => louvain(g, seed),
            CommunityAlgorithm::Labelprop => label_propagation(g, seed),
        }
    }
}

/// Per-node community ids, compacted to `[0, K)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    labels: Vec<usize>,
    num_communities: usize,
}

impl CommunityAssignment {
    /// Compacts arbitrary ids; communities are numbered in order of first
    /// appearance by node index.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for &r in raw {
            let id = match map.binary_search_by_key(&r, |&(k, _)| k) {
                Ok(pos) => map[pos].1,
                Err(pos) => {
                    let id = map.len();
                    map.insert(pos, (r, id));
                    id
                }
            };
            labels.push(id);
        }
        let num_communities = map.len();
        Self {
            labels,
            num_communities,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            num_communities: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            num_communities: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_communities];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut raw = vec![0; self.labels.len()];
        for (i, &c) in self.labels.iter().enumerate() {
            raw[perm[i]] = c;
        }
        Self::from_raw(&raw)
    }

    fn check(&self, g: &AttributedGraph) -> Result<()> {
        if self.labels.len() != g.num_nodes() {
            return Err(Error::AssignmentLength {
                expected: g.num_nodes(),
                found: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// Newman modularity at resolution 1 on the unweighted graph.
pub fn modularity(g: &AttributedGraph, a: &CommunityAssignment) -> Result<f64> {
    a.check(g)?;
    let m = g.num_edges() as f64;
    if g.num_edges() == 0 {
        return Err(Error::UndefinedMetric("modularity of a graph without edges"));
    }
    let k = a.num_communities();
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for &(u, v) in g.edges() {
        let (cu, cv) = (a.labels[u], a.labels[v]);
        if cu == cv {
            internal[cu] += 1.0;
        }
        degree[cu] += 1.0;
        degree[cv] += 1.0;
    }
    let mut q = 0.0;
    for c in 0..k {
        let frac = degree[c] / (2.0 * m);
        q += internal[c] / m - frac * frac;
    }
    Ok(q)
}

/// Replaces every feature row by the mean of its community's rows.
pub fn community_average_features(
    g: &AttributedGraph,
    a: &CommunityAssignment,
) -> Result<Matrix> {
    a.check(g)?;
    let x = g.features();
    let m = x.cols();
    let k = a.num_communities();
    let mut sums = Matrix::zeros(k, m);
    let sizes = a.sizes();
    for (i, &c) in a.labels.iter().enumerate() {
        for (s, &v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        let inv = sizes[c] as f64;
        for s in sums.row_mut(c) {
            *s /= inv;
        }
    }
    let mut out = Matrix::zeros(g.num_nodes(), m);
    for (i, &c) in a.labels.iter().enumerate() {
        out.row_mut(i).copy_from_slice(sums.row(c));
    }
    Ok(out)
}
