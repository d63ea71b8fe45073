//! Training objectives and the negative sampler.
//!
//! Every loss takes row-aligned representation matrices and returns its value
//! together with gradients with respect to those matrices; the trainer routes
//! them back through the predictor and the online encoder. The target
//! representations `U` never receive a gradient from the asymmetric loss.
//!
//! Nodes without neighbors are skipped as anchors of neighbor-averaged terms;
//! the outer average runs over the remaining nodes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{axpy, dot, gemm, gemm_strided, squared_distance, DenseMatrix, Trans};
use crate::math;
use crate::rng::rng_from_seed;

/// Rows per block when all nodes act as negatives on large graphs; bounds memory to `BLOCK × N`.
const NEGATIVE_BLOCK_ROWS: usize = 256;

/// Up to this many nodes the full `N × N` similarity matrix is materialized,
/// which lets the negative gradient run as a single symmetric product.
pub const FULL_SIMILARITY_MAX_NODES: usize = 6144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// Asymmetric predictor-to-target contrastive loss.
    #[default]
    Graphacl,
    /// Symmetric one-hop contrastive loss with a single encoder.
    Smoothing,
    /// Neighbor prediction (squared error) only.
    Pre,
    /// Uniformity regularizer only.
    Uni,
    /// Prediction plus uniformity.
    Com,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    /// Negatives per anchor; 0 means every node.
    pub neg_k: usize,
    pub include_self_as_negative: bool,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.75,
            neg_k: 0,
            include_self_as_negative: true,
            variant: LossVariant::Graphacl,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// `anchors × k` sampled negative indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSample {
    anchors: usize,
    k: usize,
    indices: Vec<usize>,
}

impl NegativeSample {
    pub fn from_indices(anchors: usize, k: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != anchors * k {
            return Err(Error::ShapeMismatch {
                op: "negative sample",
                left: (anchors, k),
                right: (indices.len(), 1),
            });
        }
        Ok(Self { anchors, k, indices })
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, anchor: usize) -> &[usize] {
        &self.indices[anchor * self.k..(anchor + 1) * self.k]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// The negative set of each anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Negatives {
    /// Every node, optionally without the anchor itself.
    All { include_self: bool },
    Sampled(NegativeSample),
}

impl Negatives {
    fn check(&self, num_nodes: usize) -> Result<()> {
        if let Negatives::Sampled(s) = self {
            if s.anchors != num_nodes {
                return Err(Error::ShapeMismatch {
                    op: "negatives vs nodes",
                    left: (s.anchors, s.k),
                    right: (num_nodes, 0),
                });
            }
            if let Some(&bad) = s.indices.iter().find(|&&i| i >= num_nodes) {
                return Err(Error::NodeOutOfRange {
                    node: bad,
                    num_nodes,
                });
            }
        }
        Ok(())
    }

    /// Number of negatives for an anchor.
    pub fn count(&self, num_nodes: usize) -> usize {
        match self {
            Negatives::All { include_self: true } => num_nodes,
            Negatives::All { include_self: false } => num_nodes.saturating_sub(1),
            Negatives::Sampled(s) => s.k,
        }
    }

    /// Negatives of `anchor` as an explicit list.
    pub fn of(&self, anchor: usize, num_nodes: usize) -> Vec<usize> {
        match self {
            Negatives::All { include_self } => (0..num_nodes)
                .filter(|&w| *include_self || w != anchor)
                .collect(),
            Negatives::Sampled(s) => s.row(anchor).to_vec(),
        }
    }
}

/// Uniform draws with replacement over all nodes, the anchor included.
pub fn sample_negatives(num_nodes: usize, k: usize, anchors: usize, seed: u64) -> Result<NegativeSample> {
    sample_negatives_with(num_nodes, k, anchors, seed, true)
}

/// As [`sample_negatives`]; with `include_self = false` anchor `a` never draws `a`.
pub fn sample_negatives_with(
    num_nodes: usize,
    k: usize,
    anchors: usize,
    seed: u64,
    include_self: bool,
) -> Result<NegativeSample> {
    if k == 0 || num_nodes == 0 {
        return Err(Error::InvalidArgument(
            "negative sampling needs k ≥ 1 and at least one node".into(),
        ));
    }
    if !include_self && num_nodes < 2 {
        return Err(Error::InvalidArgument(
            "excluding the anchor leaves no negative candidates".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut indices = Vec::with_capacity(anchors * k);
    for a in 0..anchors {
        for _ in 0..k {
            let idx = if include_self {
                rng.gen_range(0..num_nodes)
            } else {
                let r = rng.gen_range(0..num_nodes - 1);
                if r >= a {
                    r + 1
                } else {
                    r
                }
            };
            indices.push(idx);
        }
    }
    Ok(NegativeSample { anchors, k, indices })
}

/// Loss value and gradients with respect to the input matrices.
///
/// `grad_p` is w.r.t. predictions, `grad_u` w.r.t. positive-side
/// representations (only for the symmetric loss) and `grad_v` w.r.t.
/// online representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_p: Option<DenseMatrix>,
    pub grad_u: Option<DenseMatrix>,
    pub grad_v: Option<DenseMatrix>,
}

fn check_rows(graph: &Graph, mats: &[(&'static str, &DenseMatrix)]) -> Result<usize> {
    let n = graph.num_nodes();
    let dim = mats[0].1.cols();
    for &(op, m) in mats {
        if m.rows() != n || m.cols() != dim {
            return Err(Error::ShapeMismatch {
                op,
                left: (n, dim),
                right: m.shape(),
            });
        }
    }
    Ok(dim)
}

/// `1 / (n_active · deg v)` for nodes with neighbors, zero otherwise.
fn anchor_weights(graph: &Graph) -> Vec<f64> {
    let active = (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0).count();
    (0..graph.num_nodes())
        .map(|v| match graph.degree(v) {
            0 => 0.0,
            d => 1.0 / (active as f64 * d as f64),
        })
        .collect()
}

struct ContrastiveGrads {
    anchor: DenseMatrix,
    positive: DenseMatrix,
    negative: DenseMatrix,
}

/// Shared kernel of the one-hop contrastive losses:
///
/// `(1/|V'|) Σ_v (1/|N(v)|) Σ_{u∈N(v)} −a_vu + log(exp(a_vu) + Σ_{w∈Neg(v)} exp(s_vw))`
///
/// with `a_vu = q_v·r_u/τ` and `s_vw = v_v·v_w/τ`.
fn neighbor_contrastive(
    graph: &Graph,
    q: &DenseMatrix,
    r: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
    need_grad: bool,
) -> Result<(f64, Option<ContrastiveGrads>)> {
    neighbor_contrastive_impl(graph, q, r, v, negatives, tau, need_grad, FULL_SIMILARITY_MAX_NODES)
}

#[allow(clippy::too_many_arguments)]
fn neighbor_contrastive_impl(
    graph: &Graph,
    q: &DenseMatrix,
    r: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
    need_grad: bool,
    full_max_nodes: usize,
) -> Result<(f64, Option<ContrastiveGrads>)> {
    let dim = check_rows(graph, &[("anchor", q), ("positive", r), ("negative base", v)])?;
    negatives.check(graph.num_nodes())?;
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let n = graph.num_nodes();
    let weights = anchor_weights(graph);
    let inv_tau = 1.0 / tau;

    let mut grads = need_grad.then(|| ContrastiveGrads {
        anchor: DenseMatrix::zeros(n, dim),
        positive: DenseMatrix::zeros(n, dim),
        negative: DenseMatrix::zeros(n, dim),
    });

    // β_v: total weight on log Σ exp(s_vw) for anchor v, filled per block.
    let mut value = 0.0;
    let process_rows = |rows: core::ops::Range<usize>,
                            lse: &[f64],
                            beta: &mut [f64],
                            grads: &mut Option<ContrastiveGrads>|
     -> f64 {
        let mut acc = 0.0;
        for (slot, a) in rows.clone().enumerate() {
            let c = weights[a];
            if c == 0.0 {
                continue;
            }
            let qa = q.row(a);
            let mut b = 0.0;
            for &u in graph.neighbors(a) {
                let logit = dot(qa, r.row(u)) * inv_tau;
                let denom = math::log_add_exp(logit, lse[slot]);
                acc += c * (denom - logit);
                if let Some(g) = grads.as_mut() {
                    let sigma = math::exp(logit - denom);
                    let coeff = c * (sigma - 1.0) * inv_tau;
                    axpy(coeff, r.row(u), g.anchor.row_mut(a));
                    axpy(coeff, qa, g.positive.row_mut(u));
                    b += c * (1.0 - sigma);
                }
            }
            beta[slot] = b;
        }
        acc
    };

    match negatives {
        Negatives::All { include_self } if n <= full_max_nodes => {
            let mut sims = similarity_matrix(v, inv_tau)?;
            if !include_self {
                for i in 0..n {
                    sims.set(i, i, f64::NEG_INFINITY);
                }
            }
            // rows become softmax weights π_vw in place
            let lse: Vec<f64> = (0..n).map(|i| softmax_in_place(sims.row_mut(i))).collect();
            let mut beta = vec![0.0; n];
            value += process_rows(0..n, &lse, &mut beta, &mut grads);
            if let Some(g) = grads.as_mut() {
                // C_vw = β_v π_vw / τ; both roles of v_w together: (C + Cᵀ) V
                for (i, b) in beta.iter().enumerate() {
                    let scale = b * inv_tau;
                    sims.row_mut(i).iter_mut().for_each(|c| *c *= scale);
                }
                symmetrize_sum(&mut sims);
                gemm(1.0, &sims, Trans::No, v, Trans::No, 1.0, &mut g.negative)?;
            }
        }
        Negatives::All { include_self } => {
            let mut start = 0;
            while start < n {
                let end = (start + NEGATIVE_BLOCK_ROWS).min(n);
                let rows = end - start;
                let block = v.select_rows(&(start..end).collect::<Vec<_>>());
                let mut sims = DenseMatrix::zeros(rows, n);
                gemm(inv_tau, &block, Trans::No, v, Trans::Yes, 0.0, &mut sims)?;
                if !include_self {
                    for i in 0..rows {
                        sims.set(i, start + i, f64::NEG_INFINITY);
                    }
                }
                let lse: Vec<f64> = (0..rows).map(|i| math::log_sum_exp(sims.row(i))).collect();
                let mut beta = vec![0.0; rows];
                value += process_rows(start..end, &lse, &mut beta, &mut grads);
                if let Some(g) = grads.as_mut() {
                    // coefficient matrix β_v π_vw / τ, reusing the similarity buffer
                    for i in 0..rows {
                        let scale = beta[i] * inv_tau;
                        let l = lse[i];
                        for s in sims.row_mut(i) {
                            *s = if scale == 0.0 { 0.0 } else { scale * math::exp(*s - l) };
                        }
                    }
                    let mut d_block = DenseMatrix::zeros(rows, dim);
                    gemm(1.0, &sims, Trans::No, v, Trans::No, 0.0, &mut d_block)?;
                    for i in 0..rows {
                        axpy(1.0, d_block.row(i), g.negative.row_mut(start + i));
                    }
                    gemm(1.0, &sims, Trans::Yes, &block, Trans::No, 1.0, &mut g.negative)?;
                }
                start = end;
            }
        }
        Negatives::Sampled(sample) => {
            let mut sims = vec![0.0; sample.k];
            let mut lse = vec![0.0; n];
            for a in 0..n {
                for (s, &w) in sims.iter_mut().zip(sample.row(a)) {
                    *s = dot(v.row(a), v.row(w)) * inv_tau;
                }
                lse[a] = math::log_sum_exp(&sims);
            }
            let mut beta = vec![0.0; n];
            value += process_rows(0..n, &lse, &mut beta, &mut grads);
            if let Some(g) = grads.as_mut() {
                for a in 0..n {
                    if beta[a] == 0.0 {
                        continue;
                    }
                    for &w in sample.row(a) {
                        let s = dot(v.row(a), v.row(w)) * inv_tau;
                        let coeff = beta[a] * math::exp(s - lse[a]) * inv_tau;
                        let (va, vw) = (v.row(a).to_vec(), v.row(w).to_vec());
                        axpy(coeff, &vw, g.negative.row_mut(a));
                        axpy(coeff, &va, g.negative.row_mut(w));
                    }
                }
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("contrastive loss"));
    }
    Ok((value, grads))
}

/// `V Vᵀ · scale`, computing the upper triangle by row blocks and mirroring it.
fn similarity_matrix(v: &DenseMatrix, scale: f64) -> Result<DenseMatrix> {
    let (n, d) = v.shape();
    let mut sims = DenseMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let end = (start + NEGATIVE_BLOCK_ROWS).min(n);
        let rows = &v.data()[start * d..end * d];
        let cols = &v.data()[start * d..];
        let out = &mut sims.data_mut()[start * n + start..];
        gemm_strided(
            (end - start, d, n - start),
            scale,
            rows,
            (d, 1),
            cols,
            (1, d),
            0.0,
            out,
            n,
        );
        start = end;
    }
    const TILE: usize = 64;
    for bi in (0..n).step_by(TILE) {
        for bj in (0..bi + 1).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj..(bj + TILE).min(i) {
                    let x = sims.get(j, i);
                    sims.set(i, j, x);
                }
            }
        }
    }
    Ok(sims)
}

/// Replaces `xs` by its softmax and returns its log-sum-exp; an all `−∞` row stays put.
fn softmax_in_place(xs: &mut [f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        xs.iter_mut().for_each(|x| *x = 0.0);
        return max;
    }
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = math::exp(*x - max);
        sum += *x;
    }
    let inv = 1.0 / sum;
    xs.iter_mut().for_each(|x| *x *= inv);
    max + math::ln(sum)
}

/// `M ← M + Mᵀ` for a square matrix.
fn symmetrize_sum(m: &mut DenseMatrix) {
    let n = m.rows();
    const TILE: usize = 64;
    for bi in (0..n).step_by(TILE) {
        for bj in (0..bi + 1).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj..(bj + TILE).min(i + 1) {
                    let s = m.get(i, j) + m.get(j, i);
                    m.set(i, j, s);
                    m.set(j, i, s);
                }
            }
        }
    }
}

/// Asymmetric loss: predictions `P` against detached target neighbors `U`,
/// normalized by online-to-online negatives over `V`.
pub fn loss_graphacl(
    graph: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<LossOutput> {
    let (value, grads) = neighbor_contrastive(graph, p, u, v, negatives, tau, true)?;
    let g = grads.unwrap();
    Ok(LossOutput {
        value,
        grad_p: Some(g.anchor),
        grad_u: None,
        grad_v: Some(g.negative),
    })
}

pub fn loss_graphacl_value(
    graph: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<f64> {
    Ok(neighbor_contrastive(graph, p, u, v, negatives, tau, false)?.0)
}

/// Symmetric one-hop loss: anchor rows `V_anchor`, positive rows `V_other`,
/// negatives drawn from `V_anchor`. `grad_v` covers both anchor and negative
/// roles, `grad_u` the positive role.
pub fn loss_smoothing(
    graph: &Graph,
    v_anchor: &DenseMatrix,
    v_other: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<LossOutput> {
    let (value, grads) =
        neighbor_contrastive(graph, v_anchor, v_other, v_anchor, negatives, tau, true)?;
    let mut g = grads.unwrap();
    g.anchor.add_scaled(&g.negative, 1.0)?;
    Ok(LossOutput {
        value,
        grad_p: None,
        grad_u: Some(g.positive),
        grad_v: Some(g.anchor),
    })
}

/// `(1/|V'|) Σ_v (1/|N(v)|) Σ_{u∈N(v)} ‖p_v − u_u‖²`, gradient to `P` only.
pub fn loss_pre(graph: &Graph, p: &DenseMatrix, u: &DenseMatrix) -> Result<LossOutput> {
    let dim = check_rows(graph, &[("prediction", p), ("target", u)])?;
    let weights = anchor_weights(graph);
    let mut grad = DenseMatrix::zeros(graph.num_nodes(), dim);
    let mut value = 0.0;
    for v in 0..graph.num_nodes() {
        let c = weights[v];
        if c == 0.0 {
            continue;
        }
        let pv = p.row(v);
        for &n in graph.neighbors(v) {
            let un = u.row(n);
            value += c * squared_distance(pv, un);
            for ((g, &a), &b) in grad.row_mut(v).iter_mut().zip(pv).zip(un) {
                *g += 2.0 * c * (a - b);
            }
        }
    }
    Ok(LossOutput {
        value,
        grad_p: Some(grad),
        grad_u: None,
        grad_v: None,
    })
}

/// `−(1/|V|²) Σ_v Σ_{v₋} ‖v − v₋‖²`. With sampled negatives the `K` draws per
/// anchor are rescaled by `|V|/K` to estimate the full double sum.
pub fn loss_uni(v: &DenseMatrix, negatives: &Negatives) -> Result<LossOutput> {
    let n = v.rows();
    let dim = v.cols();
    negatives.check(n)?;
    let mut grad = DenseMatrix::zeros(n, dim);
    if n == 0 {
        return Ok(LossOutput {
            value: 0.0,
            grad_p: None,
            grad_u: None,
            grad_v: Some(grad),
        });
    }
    let value = match negatives {
        // The self pair contributes zero distance, so both flags agree.
        Negatives::All { .. } => {
            let nf = n as f64;
            let mut total = vec![0.0; dim];
            let mut sq = 0.0;
            for i in 0..n {
                axpy(1.0, v.row(i), &mut total);
                sq += dot(v.row(i), v.row(i));
            }
            // Σ_v Σ_w ‖v − w‖² = 2N Σ‖v‖² − 2‖Σ v‖²
            let double_sum = 2.0 * nf * sq - 2.0 * dot(&total, &total);
            let scale = -1.0 / (nf * nf);
            for i in 0..n {
                for ((g, &x), &t) in grad.row_mut(i).iter_mut().zip(v.row(i)).zip(&total) {
                    *g = scale * (4.0 * nf * x - 4.0 * t);
                }
            }
            scale * double_sum
        }
        Negatives::Sampled(sample) => {
            let scale = -1.0 / (n as f64 * sample.k as f64);
            let mut acc = 0.0;
            for a in 0..n {
                for &w in sample.row(a) {
                    acc += squared_distance(v.row(a), v.row(w));
                    for j in 0..dim {
                        let d = 2.0 * scale * (v.get(a, j) - v.get(w, j));
                        grad.data_mut()[a * dim + j] += d;
                        grad.data_mut()[w * dim + j] -= d;
                    }
                }
            }
            scale * acc
        }
    };
    Ok(LossOutput {
        value,
        grad_p: None,
        grad_u: None,
        grad_v: Some(grad),
    })
}

/// Prediction plus uniformity.
pub fn loss_com(
    graph: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
) -> Result<LossOutput> {
    let pre = loss_pre(graph, p, u)?;
    let uni = loss_uni(v, negatives)?;
    Ok(LossOutput {
        value: pre.value + uni.value,
        grad_p: pre.grad_p,
        grad_u: None,
        grad_v: uni.grad_v,
    })
}

/// Dispatches on `variant`. For `Smoothing` the online rows `v` play every role
/// and `grad_v` already includes the positive-side gradient.
pub fn evaluate_loss(
    variant: LossVariant,
    graph: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<LossOutput> {
    match variant {
        LossVariant::Graphacl => loss_graphacl(graph, p, u, v, negatives, tau),
        LossVariant::Smoothing => {
            let mut out = loss_smoothing(graph, v, v, negatives, tau)?;
            let gu = out.grad_u.take().unwrap();
            out.grad_v.as_mut().unwrap().add_scaled(&gu, 1.0)?;
            Ok(out)
        }
        LossVariant::Pre => loss_pre(graph, p, u),
        LossVariant::Uni => loss_uni(v, negatives),
        LossVariant::Com => loss_com(graph, p, u, v, negatives),
    }
}
