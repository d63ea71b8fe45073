//! Label-structure statistics of a graph: edge homophily, two-hop monophily
//! and class neighborhood similarity.

use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{two_hop_graph, Graph};
use crate::linalg::{dot, DenseMatrix};
use crate::math;

/// Fraction of undirected edges whose endpoints share a label; 0 on an edgeless graph.
pub fn homophily_ratio(g: &Graph) -> Result<f64> {
    let y = g.require_labels()?.ids();
    let (mut same, mut total) = (0usize, 0usize);
    for (u, v) in g.edges() {
        total += 1;
        same += (y[u] == y[v]) as usize;
    }
    Ok(if total == 0 { 0.0 } else { same as f64 / total as f64 })
}

/// Mean over nodes of the fraction of their exact-two-hop neighbors sharing
/// their label. Nodes without two-hop neighbors are left out; 0 if none remain.
pub fn two_hop_monophily(g: &Graph) -> Result<f64> {
    g.require_labels()?;
    per_node_label_agreement(&two_hop_graph(g))
}

/// Node-averaged neighbor label agreement over nodes with at least one neighbor.
pub fn per_node_label_agreement(g: &Graph) -> Result<f64> {
    let y = g.require_labels()?.ids();
    let (mut acc, mut counted) = (0.0, 0usize);
    for v in 0..g.num_nodes() {
        let nb = g.neighbors(v);
        if nb.is_empty() {
            continue;
        }
        let same = nb.iter().filter(|&&u| y[u] == y[v]).count();
        acc += same as f64 / nb.len() as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { acc / counted as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSimilarity {
    /// `s(m, m')`, `M × M`.
    pub matrix: DenseMatrix,
    /// Mean of the diagonal.
    pub score: f64,
}

/// Mean cosine between neighbor-label histograms of node pairs drawn from
/// classes `m` and `m'` (all ordered pairs, the node with itself included).
/// Zero-degree nodes have a zero histogram, whose cosine with anything is 0.
pub fn class_neighborhood_similarity(g: &Graph) -> Result<NeighborhoodSimilarity> {
    let labels = g.require_labels()?;
    let y = labels.ids();
    let m = labels.num_classes();
    // Σ over each class of unit-normalized neighbor histograms; the pair sum of
    // cosines between two classes is the dot product of their sums.
    let mut class_sums = DenseMatrix::zeros(m, m);
    let mut hist = vec![0.0; m];
    for v in 0..g.num_nodes() {
        hist.iter_mut().for_each(|h| *h = 0.0);
        for &u in g.neighbors(v) {
            hist[y[u]] += 1.0;
        }
        let norm = math::sqrt(dot(&hist, &hist));
        if norm == 0.0 {
            continue;
        }
        for (s, h) in class_sums.row_mut(y[v]).iter_mut().zip(&hist) {
            *s += h / norm;
        }
    }
    let counts = labels.class_counts();
    let matrix = DenseMatrix::from_fn(m, m, |a, b| {
        if counts[a] == 0 || counts[b] == 0 {
            0.0
        } else {
            dot(class_sums.row(a), class_sums.row(b)) / (counts[a] as f64 * counts[b] as f64)
        }
    });
    let score = (0..m).map(|c| matrix.get(c, c)).sum::<f64>() / m as f64;
    Ok(NeighborhoodSimilarity { matrix, score })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub homophily: f64,
    pub two_hop_monophily: f64,
    pub neighborhood_similarity: f64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
}

pub fn graph_stats(g: &Graph) -> Result<GraphStats> {
    Ok(GraphStats {
        homophily: homophily_ratio(g)?,
        two_hop_monophily: two_hop_monophily(g)?,
        neighborhood_similarity: class_neighborhood_similarity(g)?.score,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        num_classes: g.require_labels()?.num_classes(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::graph::{build_graph, Labels};
    use crate::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn labeled(edges: &[(usize, usize)], y: Vec<usize>) -> Graph {
        let n = y.len();
        build_graph(edges, n, Some(Labels::infer(y))).unwrap()
    }

    #[test]
    fn homophily_examples() {
        let g = labeled(&[(0, 1), (1, 2), (0, 2)], vec![0, 0, 0]);
        assert_eq!(homophily_ratio(&g).unwrap(), 1.0);
        let path = labeled(&[(0, 1), (1, 2)], vec![0, 0, 1]);
        assert_eq!(homophily_ratio(&path).unwrap(), 0.5);
        let unlabeled = build_graph(&[(0, 1)], 2, None).unwrap();
        assert_eq!(homophily_ratio(&unlabeled), Err(Error::MissingLabels));
    }

    #[test]
    fn monophily_path_example() {
        let path = labeled(&[(0, 1), (1, 2)], vec![0, 0, 1]);
        assert_eq!(two_hop_monophily(&path).unwrap(), 0.0);
    }

    #[test]
    fn synthetic_extremes() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::HeterophilicBipartiteMonophily,
            num_nodes: 40,
            num_classes: 2,
            p_in: 0.0,
            p_out: 1.0,
            p_noise: 0.0,
            feature_dim: 4,
            feature_noise: 0.0,
        };
        let (g, _) = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(homophily_ratio(&g).unwrap(), 0.0);
        assert_eq!(two_hop_monophily(&g).unwrap(), 1.0);
        let sbm = SyntheticSpec {
            kind: SyntheticKind::HomophilicSbm,
            p_in: 1.0,
            p_out: 0.0,
            ..spec
        };
        let (g, _) = generate_synthetic(&sbm, 0).unwrap();
        assert_eq!(homophily_ratio(&g).unwrap(), 1.0);
    }

    #[test]
    fn identical_histograms_give_unit_intra_similarity() {
        // complete bipartite K_{2,2} with classes by side: every node sees only the other class
        let g = labeled(&[(0, 2), (0, 3), (1, 2), (1, 3)], vec![0, 0, 1, 1]);
        let s = class_neighborhood_similarity(&g).unwrap();
        assert!((s.score - 1.0).abs() < 1e-15);
        // histograms are one-hot on different classes: orthogonal across classes
        assert_eq!(s.matrix.get(0, 1), 0.0);
        assert_eq!(s.matrix.get(1, 0), 0.0);
    }

    #[test]
    fn zero_degree_nodes_contribute_zero() {
        let g = labeled(&[(0, 1)], vec![0, 0, 0]);
        let s = class_neighborhood_similarity(&g).unwrap();
        // pairs among {0,1} have cosine 1, pairs touching node 2 have 0: 4 / 9
        assert!((s.score - 4.0 / 9.0).abs() < 1e-15);
    }

    /// Pairwise cosine double loop, as the definition reads.
    fn brute_similarity(g: &Graph) -> DenseMatrix {
        let y = g.labels().unwrap().ids();
        let m = g.labels().unwrap().num_classes();
        let hist: Vec<Vec<f64>> = (0..g.num_nodes())
            .map(|v| {
                let mut h = vec![0.0; m];
                g.neighbors(v).iter().for_each(|&u| h[y[u]] += 1.0);
                h
            })
            .collect();
        let mut out = DenseMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let (mut s, mut c) = (0.0, 0usize);
                for u in (0..g.num_nodes()).filter(|&u| y[u] == a) {
                    for v in (0..g.num_nodes()).filter(|&v| y[v] == b) {
                        s += crate::linalg::cosine(&hist[u], &hist[v]);
                        c += 1;
                    }
                }
                out.set(a, b, if c == 0 { 0.0 } else { s / c as f64 });
            }
        }
        out
    }

    /// Explicit distance-two enumeration, independent of the two-hop builder.
    fn brute_monophily(g: &Graph) -> f64 {
        let n = g.num_nodes();
        let y = g.labels().unwrap().ids();
        let (mut acc, mut counted) = (0.0, 0);
        for v in 0..n {
            let two: Vec<usize> = (0..n)
                .filter(|&k| k != v && (0..n).any(|j| g.has_edge(v, j) && g.has_edge(j, k)))
                .collect();
            if two.is_empty() {
                continue;
            }
            acc += two.iter().filter(|&&k| y[k] == y[v]).count() as f64 / two.len() as f64;
            counted += 1;
        }
        if counted == 0 {
            0.0
        } else {
            acc / counted as f64
        }
    }

    fn arb_labeled_graph() -> impl Strategy<Value = Graph> {
        (2usize..40, 1usize..5).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec((0..n, 0..n), 0..3 * n),
                proptest::collection::vec(0..m, n),
            )
                .prop_map(move |(edges, y)| {
                    build_graph(&edges, n, Some(Labels::new(y, m).unwrap())).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn statistics_in_unit_interval(g in arb_labeled_graph()) {
            let s = graph_stats(&g).unwrap();
            for v in [s.homophily, s.two_hop_monophily, s.neighborhood_similarity] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn monophily_matches_brute_force(g in arb_labeled_graph()) {
            prop_assert!((two_hop_monophily(&g).unwrap() - brute_monophily(&g)).abs() < 1e-12);
        }

        #[test]
        fn similarity_matches_pairwise_loop(g in arb_labeled_graph()) {
            let fast = class_neighborhood_similarity(&g).unwrap().matrix;
            prop_assert!(fast.max_abs_diff(&brute_similarity(&g)) < 1e-12);
        }
    }
}
