//! Undirected graphs in compressed row form and the structural transforms
//! used by the encoder and the statistics: symmetric normalized adjacency
//! and the unweighted two-hop graph.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Node class assignment with its declared class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    ids: Vec<usize>,
    num_classes: usize,
}

impl Labels {
    /// Validates every id against `num_classes`.
    pub fn new(ids: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((node, &label)) = ids.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        Ok(Self { ids, num_classes })
    }

    /// Class count taken as `max id + 1`.
    pub fn infer(ids: Vec<usize>) -> Self {
        let num_classes = ids.iter().copied().max().map_or(0, |m| m + 1);
        Self { ids, num_classes }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Nodes per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.ids {
            counts[l] += 1;
        }
        counts
    }
}

/// Immutable, symmetric, self-loop-free graph in CSR layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    labels: Option<Labels>,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn require_labels(&self) -> Result<&Labels> {
        self.labels.as_ref().ok_or(Error::MissingLabels)
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    /// Stored directed entries (twice the undirected edge count).
    pub fn num_entries(&self) -> usize {
        self.col_indices.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Same structure with different labels.
    pub fn with_labels(&self, labels: Option<Labels>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.num_nodes {
                return Err(Error::LabelCountMismatch {
                    expected: self.num_nodes,
                    actual: l.len(),
                });
            }
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Builds from per-node sorted, deduplicated, symmetric adjacency.
    fn from_adjacency(adjacency: &[Vec<usize>], labels: Option<Labels>) -> Self {
        let mut row_offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut col_indices = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        row_offsets.push(0);
        for row in adjacency {
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        Self {
            num_nodes: adjacency.len(),
            row_offsets,
            col_indices,
            labels,
        }
    }

    /// Checks every structural invariant; used by tests and after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.row_offsets.len() != self.num_nodes + 1
            || self.row_offsets[0] != 0
            || *self.row_offsets.last().unwrap() != self.col_indices.len()
        {
            return bad("row offsets inconsistent with node or entry count");
        }
        for u in 0..self.num_nodes {
            if self.row_offsets[u] > self.row_offsets[u + 1] {
                return bad("row offsets decrease");
            }
            let row = self.neighbors(u);
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return bad("row not strictly increasing");
            }
            for &v in row {
                if v >= self.num_nodes {
                    return Err(Error::NodeOutOfRange {
                        node: v,
                        num_nodes: self.num_nodes,
                    });
                }
                if v == u {
                    return bad("self-loop stored");
                }
                if !self.has_edge(v, u) {
                    return bad("graph is not symmetric");
                }
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.num_nodes {
                return Err(Error::LabelCountMismatch {
                    expected: self.num_nodes,
                    actual: l.len(),
                });
            }
        }
        Ok(())
    }
}

/// Symmetrizes, drops self-loops and merges duplicate edges.
pub fn build_graph(
    edges: &[(usize, usize)],
    num_nodes: usize,
    labels: Option<Labels>,
) -> Result<Graph> {
    if let Some(l) = &labels {
        if l.len() != num_nodes {
            return Err(Error::LabelCountMismatch {
                expected: num_nodes,
                actual: l.len(),
            });
        }
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    for &(u, v) in edges {
        for node in [u, v] {
            if node >= num_nodes {
                return Err(Error::NodeOutOfRange { node, num_nodes });
            }
        }
        if u == v {
            continue;
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for row in &mut adjacency {
        row.sort_unstable();
        row.dedup();
    }
    Ok(Graph::from_adjacency(&adjacency, labels))
}

/// Sparse matrix in CSR layout with finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    num_rows: usize,
    num_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Checked constructor.
    pub fn new(
        num_rows: usize,
        num_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let ok = row_offsets.len() == num_rows + 1
            && row_offsets.first() == Some(&0)
            && row_offsets.last() == Some(&col_indices.len())
            && row_offsets.windows(2).all(|w| w[0] <= w[1])
            && col_indices.len() == values.len()
            && col_indices.iter().all(|&c| c < num_cols);
        if !ok {
            return Err(Error::InvalidArgument("malformed CSR arrays".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix values"));
        }
        Ok(Self {
            num_rows,
            num_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `n x n` identity pattern.
    pub fn identity(n: usize) -> Self {
        Self {
            num_rows: n,
            num_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Stored value at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_rows * self.num_cols];
        for r in 0..self.num_rows {
            for (c, v) in self.row(r) {
                out[r * self.num_cols + c] += v;
            }
        }
        out
    }
}

/// `D^{-1/2} A D^{-1/2}` over the stored edges; isolated nodes get empty rows.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let inv_sqrt: Vec<f64> = (0..g.num_nodes())
        .map(|i| match g.degree(i) {
            0 => 0.0,
            d => 1.0 / math::sqrt(d as f64),
        })
        .collect();
    let mut values = Vec::with_capacity(g.num_entries());
    for i in 0..g.num_nodes() {
        for &j in g.neighbors(i) {
            values.push(inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    SparseMatrix {
        num_rows: g.num_nodes(),
        num_cols: g.num_nodes(),
        row_offsets: g.row_offsets.clone(),
        col_indices: g.col_indices.clone(),
        values,
    }
}

/// Nodes reachable through some intermediate neighbor, excluding the node itself.
/// One-hop neighbors that are also two-hop reachable are kept; labels carry over.
pub fn two_hop_graph(g: &Graph) -> Graph {
    let n = g.num_nodes();
    let mut stamp = vec![usize::MAX; n];
    let mut adjacency: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::new();
        for &j in g.neighbors(i) {
            for &k in g.neighbors(j) {
                if k != i && stamp[k] != i {
                    stamp[k] = i;
                    row.push(k);
                }
            }
        }
        row.sort_unstable();
        adjacency.push(row);
    }
    Graph::from_adjacency(&adjacency, g.labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn path3() -> Graph {
        build_graph(&[(0, 1), (1, 2)], 3, None).unwrap()
    }

    #[test]
    fn single_edge_layout() {
        let g = build_graph(&[(0, 1)], 2, None).unwrap();
        assert_eq!(g.row_offsets(), &[0, 1, 2]);
        assert_eq!(g.col_indices(), &[1, 0]);
    }

    #[test]
    fn canonicalization_merges_and_drops_loops() {
        let g = build_graph(&[(0, 1), (1, 0), (1, 1)], 2, None).unwrap();
        assert_eq!(g.row_offsets(), &[0, 1, 2]);
        assert_eq!(g.col_indices(), &[1, 0]);
        g.validate().unwrap();
    }

    #[test]
    fn triangle_plus_isolated() {
        let g = build_graph(&[(0, 1), (1, 2), (0, 2)], 4, None).unwrap();
        assert_eq!(g.degree(3), 0);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[0, 1]);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            build_graph(&[(0, 5)], 3, None),
            Err(Error::NodeOutOfRange {
                node: 5,
                num_nodes: 3
            })
        );
        assert_eq!(
            Labels::new(vec![0, 3], 3),
            Err(Error::LabelOutOfRange {
                node: 1,
                label: 3,
                num_classes: 3
            })
        );
        let labels = Labels::new(vec![0], 2).unwrap();
        assert!(matches!(
            build_graph(&[], 2, Some(labels)),
            Err(Error::LabelCountMismatch { .. })
        ));
    }

    #[test]
    fn normalized_adjacency_examples() {
        let a = normalized_adjacency(&build_graph(&[(0, 1)], 2, None).unwrap());
        assert_eq!(a.values(), &[1.0, 1.0]);

        let a = normalized_adjacency(&path3());
        let r = 1.0 / 2f64.sqrt();
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert!((a.get(i, j) - r).abs() < 1e-15);
        }

        let tri = build_graph(&[(0, 1), (1, 2), (0, 2)], 3, None).unwrap();
        let a = normalized_adjacency(&tri);
        assert_eq!(a.values().len(), 6);
        assert!(a.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn isolated_rows_are_empty() {
        let g = build_graph(&[(0, 1)], 3, None).unwrap();
        let a = normalized_adjacency(&g);
        assert_eq!(a.row(2).count(), 0);
    }

    #[test]
    fn two_hop_examples() {
        let g2 = two_hop_graph(&path3());
        assert_eq!(g2.edges().collect::<Vec<_>>(), vec![(0, 2)]);

        let g2 = two_hop_graph(&build_graph(&[(0, 1)], 2, None).unwrap());
        assert_eq!(g2.num_edges(), 0);

        let cycle = build_graph(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4, None).unwrap();
        let g2 = two_hop_graph(&cycle);
        assert_eq!(g2.edges().collect::<Vec<_>>(), vec![(0, 2), (1, 3)]);
        g2.validate().unwrap();
    }

    #[test]
    fn two_hop_keeps_one_hop_neighbors_reachable_in_two() {
        let tri = build_graph(&[(0, 1), (1, 2), (0, 2)], 3, None).unwrap();
        let g2 = two_hop_graph(&tri);
        assert_eq!(g2.num_edges(), 3);
    }

    #[test]
    fn two_hop_carries_labels() {
        let labels = Labels::new(vec![0, 1, 0], 2).unwrap();
        let g = build_graph(&[(0, 1), (1, 2)], 3, Some(labels.clone())).unwrap();
        assert_eq!(two_hop_graph(&g).labels(), Some(&labels));
    }
}
