//! Seeded synthetic graphs with known homophily structure.
//!
//! `HomophilicSbm` is a plain stochastic block model. `HeterophilicMonophily`
//! pairs classes `(0,1), (2,3), ...` and only links nodes of partner classes,
//! so every neighbor of a node shares one label (not the node's own) and every
//! two-hop neighbor shares the node's label: `H(G) = 0`, `H(G₂) = 1`.
//! `p_noise` adds links between non-partner classes, which lowers `H(G₂)`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph, Labels};
use crate::linalg::DenseMatrix;
use crate::rng::{standard_normal, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    HomophilicSbm,
    HeterophilicBipartiteMonophily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub num_nodes: usize,
    pub num_classes: usize,
    /// Within-class edge probability (block model only; the monophily kind never links a class to itself).
    pub p_in: f64,
    /// Cross-class probability for the block model; partner-class probability for the monophily kind.
    pub p_out: f64,
    /// Monophily kind only: probability of an edge between distinct non-partner classes.
    #[serde(default)]
    pub p_noise: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidSpec(msg));
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out), ("p_noise", self.p_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} = {p} is not a probability"));
            }
        }
        if self.num_classes < 2 {
            return invalid(format!("num_classes = {} (need at least 2)", self.num_classes));
        }
        if self.num_nodes < self.num_classes {
            return invalid(format!(
                "num_nodes = {} is smaller than num_classes = {}",
                self.num_nodes, self.num_classes
            ));
        }
        if self.feature_dim == 0 {
            return invalid("feature_dim must be positive".into());
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return invalid(format!("feature_noise = {} must be a non-negative number", self.feature_noise));
        }
        if self.kind == SyntheticKind::HeterophilicBipartiteMonophily && self.num_classes % 2 != 0 {
            return invalid(format!(
                "the monophily construction pairs classes and needs an even class count, got {}",
                self.num_classes
            ));
        }
        Ok(())
    }

    /// Class of node `i`: round-robin, so classes are balanced.
    pub fn class_of(&self, node: usize) -> usize {
        node % self.num_classes
    }

    fn edge_probability(&self, a: usize, b: usize) -> f64 {
        match self.kind {
            SyntheticKind::HomophilicSbm => {
                if a == b {
                    self.p_in
                } else {
                    self.p_out
                }
            }
            SyntheticKind::HeterophilicBipartiteMonophily => {
                if a == b {
                    0.0
                } else if a ^ 1 == b {
                    self.p_out
                } else {
                    self.p_noise
                }
            }
        }
    }
}

/// Graph and features for `spec`; bit-reproducible for a given seed.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Graph, DenseMatrix)> {
    spec.validate()?;
    let n = spec.num_nodes;
    let classes: Vec<usize> = (0..n).map(|i| spec.class_of(i)).collect();

    let mut edge_rng = stream_rng(seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = spec.edge_probability(classes[u], classes[v]);
            // One draw per pair keeps the stream aligned across probability changes.
            let draw: f64 = edge_rng.gen();
            if draw < p {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = stream_rng(seed, 1);
    let m = spec.num_classes;
    let dim = spec.feature_dim;
    // Class signal directions: one-hot when there is room, else seeded unit projections.
    let signal = if dim >= m {
        DenseMatrix::from_fn(m, dim, |c, j| if c == j { 1.0 } else { 0.0 })
    } else {
        let mut s = DenseMatrix::from_fn(m, dim, |_, _| standard_normal(&mut feat_rng));
        for c in 0..m {
            let norm = crate::linalg::norm(s.row(c)).max(f64::MIN_POSITIVE);
            s.row_mut(c).iter_mut().for_each(|x| *x /= norm);
        }
        s
    };
    let features = DenseMatrix::from_fn(n, dim, |i, j| {
        signal.get(classes[i], j) + spec.feature_noise * standard_normal(&mut feat_rng)
    });

    let labels = Labels::new(classes, m)?;
    let graph = build_graph(&edges, n, Some(labels))?;
    Ok((graph, features))
}
