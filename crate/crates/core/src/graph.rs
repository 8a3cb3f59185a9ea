//! Attributed graph model, normalized adjacency and feature homophily.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sparse::SparseAdjacency;

/// What construction did to the raw edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Edge entries as supplied, before cleaning.
    pub raw_entries: usize,
    pub self_loops_dropped: usize,
    /// Entries collapsed because the undirected pair was already present
    /// (this includes the reverse direction of a symmetric listing).
    pub duplicates_collapsed: usize,
}

/// Per-node neighbor lists in CSR layout, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighbors {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Neighbors {
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        for &(u, v) in edges {
            targets[fill[u]] = v;
            fill[u] += 1;
            targets[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self { offsets, targets }
    }

    /// Builds neighbor lists directly from per-node lists (used by tests and
    /// by callers aggregating over custom neighborhoods).
    pub fn from_lists(lists: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for l in lists {
            targets.extend_from_slice(l);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    #[inline]
    pub fn of(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Undirected, unweighted graph with a dense `N x M` feature matrix and
/// optional binary anomaly labels (1 = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Neighbors,
    features: Matrix,
    labels: Option<Vec<u8>>,
}

impl AttributedGraph {
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        Self::build(num_nodes, edges, features, labels).map(|(g, _)| g)
    }

    /// Validates and canonicalizes the input. Directed entries are
    /// symmetrized, duplicates collapsed and self-loops dropped.
    pub fn build(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Option<Vec<u8>>,
    ) -> Result<(Self, BuildReport)> {
        if features.rows() != num_nodes {
            return Err(Error::FeatureRows {
                expected: num_nodes,
                found: features.rows(),
            });
        }
        if features.cols() == 0 {
            return Err(Error::EmptyFeatures);
        }
        if let Some(l) = &labels {
            validate_labels(l, num_nodes)?;
        }
        let mut report = BuildReport::default();
        let mut canon = Vec::new();
        for (u, v) in edges {
            report.raw_entries += 1;
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::NodeOutOfBounds { u, v, num_nodes });
            }
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        let before = canon.len();
        canon.dedup();
        report.duplicates_collapsed = before - canon.len();
        let neighbors = Neighbors::from_edges(num_nodes, &canon);
        Ok((
            Self {
                num_nodes,
                edges: canon,
                neighbors,
                features,
                labels,
            },
            report,
        ))
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Nonzero entries of the symmetric adjacency matrix (2 per edge).
    pub fn num_directed_entries(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self) -> &Neighbors {
        &self.neighbors
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors.degree(node)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        validate_labels(&labels, self.num_nodes)?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Relabels nodes: old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::AssignmentLength {
                expected: n,
                found: perm.len(),
            });
        }
        let mut features = Matrix::zeros(n, self.features.cols());
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0u8; n];
            for i in 0..n {
                out[perm[i]] = l[i];
            }
            out
        });
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Self::new(n, edges, features, labels)
    }

    /// `D̃^(-1/2) (A + I) D̃^(-1/2)` where `D̃` counts the added self-loop.
    pub fn normalized_adjacency(&self) -> SparseAdjacency {
        let n = self.num_nodes;
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| 1.0 / libm::sqrt((self.degree(i) + 1) as f64))
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(n + 2 * self.edges.len());
        let mut values = Vec::with_capacity(indices.capacity());
        offsets.push(0);
        for i in 0..n {
            let nbrs = self.neighbors.of(i);
            let split = nbrs.partition_point(|&j| j < i);
            let row = nbrs[..split]
                .iter()
                .chain(core::iter::once(&i))
                .chain(&nbrs[split..]);
            for &j in row {
                indices.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            offsets.push(indices.len());
        }
        SparseAdjacency::from_csr(n, offsets, indices, values)
            .expect("normalized adjacency is built in canonical CSR order")
    }

    /// Mean cosine similarity of feature vectors over edges. Edges touching a
    /// zero feature vector contribute 0 but still count toward `|E|`.
    pub fn homophily_ratio(&self) -> Result<f64> {
        if self.edges.is_empty() {
            return Err(Error::UndefinedMetric("homophily of a graph without edges"));
        }
        let norms: Vec<f64> = (0..self.num_nodes)
            .map(|i| libm::sqrt(dot(self.features.row(i), self.features.row(i))))
            .collect();
        let mut total = 0.0;
        for &(u, v) in &self.edges {
            let denom = norms[u] * norms[v];
            if denom > 0.0 {
                total += dot(self.features.row(u), self.features.row(v)) / denom;
            }
        }
        Ok(total / self.edges.len() as f64)
    }
}

fn validate_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::LabelLength {
            expected: n,
            found: labels.len(),
        });
    }
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::LabelValue { index, value });
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
