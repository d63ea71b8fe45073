//! Numerical checks of the loss-side inequalities, the two-hop alignment
//! quantity, the predictor's bi-Lipschitz constant and the classification
//! error bound terms.
//!
//! The chain checked on arbitrary tensors is
//!
//! ```text
//! L_A ≥ B₁ = mean_v mean_{u∈N(v)} [ −pᵀu/τ + log Σ_{w∈Neg(v)} exp(vᵀw/τ) ]
//!     ≥ B₂ = mean_v mean_{u∈N(v)} [ −pᵀu/τ + log n + (1/n) Σ_{w∈Neg(v)} vᵀw/τ ]
//! ```
//!
//! with `n = |Neg(v)|`; the second step is `log((1/n) Σ eˣ) ≥ (1/n) Σ x`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::PredictorParams;
use crate::error::{Error, Result};
use crate::graph::{build_graph, two_hop_graph, Graph, Labels};
use crate::linalg::{dot, l2_normalize_rows, squared_distance, DenseMatrix};
use crate::math;
use crate::objectives::{loss_graphacl_value, sample_negatives, Negatives};
use crate::rng::{standard_normal, stream_rng};

/// Allowed slack in the exact inequalities.
pub const INEQUALITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub upper: f64,
    pub lower: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(upper: f64, lower: f64) -> Self {
        Self {
            upper,
            lower,
            pass: upper >= lower - INEQUALITY_TOLERANCE,
        }
    }

    pub fn slack(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Per-anchor `log Σ_{w∈Neg(v)} exp(vᵀw/τ)` and `(1/n) Σ vᵀw/τ`.
fn negative_terms(v: &DenseMatrix, negatives: &Negatives, tau: f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = v.rows();
    let mut lse = vec![f64::NEG_INFINITY; n];
    let mut avg = vec![0.0; n];
    let mut count = vec![0; n];
    let mut sims = Vec::new();
    for a in 0..n {
        sims.clear();
        sims.extend(negatives.of(a, n).iter().map(|&w| dot(v.row(a), v.row(w)) / tau));
        if !sims.is_empty() {
            lse[a] = math::log_sum_exp(&sims);
            avg[a] = sims.iter().sum::<f64>() / sims.len() as f64;
        }
        count[a] = sims.len();
    }
    (lse, avg, count)
}

fn neighbor_average(g: &Graph, mut term: impl FnMut(usize, usize) -> f64) -> f64 {
    let (mut acc, mut counted) = (0.0, 0usize);
    for a in 0..g.num_nodes() {
        let nb = g.neighbors(a);
        if nb.is_empty() {
            continue;
        }
        acc += nb.iter().map(|&b| term(a, b)).sum::<f64>() / nb.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        acc / counted as f64
    }
}

fn check_inputs(g: &Graph, mats: [&DenseMatrix; 3], negatives: &Negatives, tau: f64) -> Result<()> {
    for m in mats {
        if m.rows() != g.num_nodes() || m.cols() != mats[0].cols() {
            return Err(Error::ShapeMismatch {
                op: "inequality inputs",
                left: (g.num_nodes(), mats[0].cols()),
                right: m.shape(),
            });
        }
    }
    if negatives.count(g.num_nodes()) == 0 {
        return Err(Error::InvalidArgument("inequality checks need a non-empty negative set".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    Ok(())
}

/// `L_A` against `B₁` (the positive term dropped from the log).
pub fn check_logsum_bound(
    g: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<BoundCheck> {
    check_inputs(g, [p, u, v], negatives, tau)?;
    let loss = loss_graphacl_value(g, p, u, v, negatives, tau)?;
    let (lse, _, _) = negative_terms(v, negatives, tau);
    let bound = neighbor_average(g, |a, b| -dot(p.row(a), u.row(b)) / tau + lse[a]);
    Ok(BoundCheck::new(loss, bound))
}

/// `B₁` against `B₂`; passes iff the per-anchor Jensen step holds everywhere.
pub fn check_jensen_bound(
    g: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<BoundCheck> {
    check_inputs(g, [p, u, v], negatives, tau)?;
    let (lse, avg, count) = negative_terms(v, negatives, tau);
    let b1 = neighbor_average(g, |a, b| -dot(p.row(a), u.row(b)) / tau + lse[a]);
    let b2 = neighbor_average(g, |a, b| {
        -dot(p.row(a), u.row(b)) / tau + math::ln(count[a] as f64) + avg[a]
    });
    let mut check = BoundCheck::new(b1, b2);
    check.pass &= (0..v.rows()).all(|a| {
        count[a] == 0 || jensen_gap(lse[a] - math::ln(count[a] as f64), avg[a]) >= -INEQUALITY_TOLERANCE
    });
    Ok(check)
}

fn jensen_gap(log_mean_exp: f64, mean: f64) -> f64 {
    log_mean_exp - mean
}

/// `log((1/n) Σ exp(xᵢ))` and `(1/n) Σ xᵢ` for a single sample.
pub fn jensen_sides(xs: &[f64]) -> Result<BoundCheck> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("Jensen check on an empty sample".into()));
    }
    let n = xs.len() as f64;
    Ok(BoundCheck::new(
        math::log_sum_exp(xs) - math::ln(n),
        xs.iter().sum::<f64>() / n,
    ))
}

/// Full chain `L_A ≥ B₁ ≥ B₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityChain {
    pub loss: f64,
    pub bound_a1: f64,
    pub bound_jensen: f64,
    pub pass: bool,
}

pub fn check_inequality_chain(
    g: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
) -> Result<InequalityChain> {
    let first = check_logsum_bound(g, p, u, v, negatives, tau)?;
    let second = check_jensen_bound(g, p, u, v, negatives, tau)?;
    Ok(InequalityChain {
        loss: first.upper,
        bound_a1: first.lower,
        bound_jensen: second.lower,
        pass: first.pass && second.pass,
    })
}

/// Smallest over anchors of `Σ_{w∈Neg(v)} exp(vᵀw/τ) − e^{1/τ}`; positive
/// whenever the anchor is among its own negatives, rows are unit-norm and at
/// least one other negative exists.
pub fn self_negative_floor_margin(v: &DenseMatrix, negatives: &Negatives, tau: f64) -> f64 {
    let (lse, _, _) = negative_terms(v, negatives, tau);
    lse.iter()
        .map(|&l| math::exp(l) - math::exp(1.0 / tau))
        .fold(f64::INFINITY, f64::min)
}

/// `mean_v mean_{w∈N₂(v)} ‖v − w‖²` over nodes with two-hop neighbors.
pub fn two_hop_alignment(embeddings: &DenseMatrix, g: &Graph) -> Result<f64> {
    if embeddings.rows() != g.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "embeddings vs graph",
            left: embeddings.shape(),
            right: (g.num_nodes(), embeddings.cols()),
        });
    }
    let g2 = two_hop_graph(g);
    Ok(neighbor_average(&g2, |a, b| squared_distance(embeddings.row(a), embeddings.row(b))))
}

const POWER_ITERATIONS: usize = 10_000;
/// Below this smallest singular value the bound is treated as vacuous.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;

/// `L = 1 / σ_min(W)²` for the affine map of a linear predictor (1 for the
/// identity). Uses inverse power iteration on `WᵀW` through its Cholesky factor.
pub fn estimate_bilipschitz(predictor: &PredictorParams) -> Result<f64> {
    let w = match predictor {
        PredictorParams::Identity { .. } => return Ok(1.0),
        PredictorParams::Linear { weight, .. } => &weight.value,
        PredictorParams::Mlp { .. } => return Err(Error::UnsupportedPredictor),
    };
    bilipschitz_of_matrix(w)
}

pub fn bilipschitz_of_matrix(w: &DenseMatrix) -> Result<f64> {
    let d = w.cols();
    let mut gram = DenseMatrix::zeros(d, d);
    crate::linalg::gemm(1.0, w, crate::linalg::Trans::Yes, w, crate::linalg::Trans::No, 0.0, &mut gram)?;
    let chol = match cholesky(&gram) {
        Some(l) => l,
        None => return Err(Error::SingularPredictor { sigma_min: 0.0 }),
    };
    let mut x: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * i as f64).collect();
    normalize(&mut x);
    let mut mu = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let y = cholesky_solve(&chol, &x);
        // Rayleigh quotient of (WᵀW)⁻¹ at x
        let next = dot(&x, &y);
        x = y;
        normalize(&mut x);
        let converged = (next - mu).abs() <= 1e-15 * next.abs();
        mu = next;
        if converged {
            break;
        }
    }
    let sigma_min = 1.0 / math::sqrt(mu);
    if !(sigma_min >= SINGULAR_THRESHOLD) {
        return Err(Error::SingularPredictor { sigma_min });
    }
    Ok(mu)
}

fn normalize(x: &mut [f64]) {
    let n = math::sqrt(dot(x, x));
    x.iter_mut().for_each(|v| *v /= n);
}

/// Lower factor of an SPD matrix, or `None` at a non-positive pivot.
fn cholesky(a: &DenseMatrix) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) {
            return None;
        }
        let ljj = math::sqrt(diag);
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Some(l)
}

fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

/// Terms of the classification-error bound `4M²(4L·loss + (1 − ĥ₂))`,
/// reported without its unidentifiable additive constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Terms {
    /// `4L · loss`
    pub loss_term: f64,
    /// `1 − ĥ₂`
    pub monophily_term: f64,
    pub num_classes: usize,
    pub bound: f64,
}

pub fn theorem3_report(loss: f64, bilipschitz: f64, h2: f64, num_classes: usize) -> Result<Theorem3Terms> {
    if !(0.0..=1.0).contains(&h2) {
        return Err(Error::InvalidArgument(format!("two-hop homophily {h2} outside [0, 1]")));
    }
    let loss_term = 4.0 * bilipschitz * loss;
    let monophily_term = 1.0 - h2;
    let m = num_classes as f64;
    Ok(Theorem3Terms {
        loss_term,
        monophily_term,
        num_classes,
        bound: 4.0 * m * m * (loss_term + monophily_term),
    })
}

/// Error rate of `argmax_y μ_yᵀ v` with `μ_y` the class-mean rows over all
/// labeled nodes. Empty classes are never predicted.
pub fn mean_classifier_error(embeddings: &DenseMatrix, labels: &Labels) -> Result<f64> {
    if labels.len() != embeddings.rows() {
        return Err(Error::LabelCountMismatch {
            expected: embeddings.rows(),
            actual: labels.len(),
        });
    }
    let n = embeddings.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("no nodes to classify".into()));
    }
    let m = labels.num_classes();
    let y = labels.ids();
    let counts = labels.class_counts();
    let mut means = DenseMatrix::zeros(m, embeddings.cols());
    for i in 0..n {
        crate::linalg::axpy(1.0 / counts[y[i]] as f64, embeddings.row(i), means.row_mut(y[i]));
    }
    let mut wrong = 0usize;
    for i in 0..n {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in (0..m).filter(|&c| counts[c] > 0) {
            let s = dot(means.row(c), embeddings.row(i));
            if s > best.1 {
                best = (c, s);
            }
        }
        wrong += (best.0 != y[i]) as usize;
    }
    Ok(wrong as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub loss_value: f64,
    pub bound_a1: f64,
    pub bound_jensen: f64,
    pub two_hop_alignment: f64,
    /// Only for linear or identity predictors.
    pub bilipschitz_l: Option<f64>,
    pub theorem3_terms: Option<Theorem3Terms>,
    pub mean_classifier_error: Option<f64>,
    pub violations: Vec<String>,
}

/// Chain, alignment, bi-Lipschitz constant and bound terms for one set of
/// representations. Labels on `g` enable the bound terms and mean classifier.
pub fn theory_report(
    g: &Graph,
    p: &DenseMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    negatives: &Negatives,
    tau: f64,
    predictor: Option<&PredictorParams>,
) -> Result<TheoryReport> {
    let chain = check_inequality_chain(g, p, u, v, negatives, tau)?;
    let mut violations = Vec::new();
    if chain.loss < chain.bound_a1 - INEQUALITY_TOLERANCE {
        violations.push(format!("loss {} < first bound {}", chain.loss, chain.bound_a1));
    }
    if !chain.pass && chain.loss >= chain.bound_a1 - INEQUALITY_TOLERANCE {
        violations.push(format!("first bound {} < Jensen bound {}", chain.bound_a1, chain.bound_jensen));
    }
    let bilipschitz_l = match predictor {
        Some(pred) => match estimate_bilipschitz(pred) {
            Ok(l) => Some(l),
            Err(Error::UnsupportedPredictor | Error::SingularPredictor { .. }) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let (theorem3_terms, mean_classifier_error) = match g.labels() {
        Some(labels) => {
            let h2 = crate::metrics::two_hop_monophily(g)?;
            let terms = theorem3_report(chain.loss, bilipschitz_l.unwrap_or(1.0), h2, labels.num_classes())?;
            (Some(terms), Some(mean_classifier_error(v, labels)?))
        }
        None => (None, None),
    };
    Ok(TheoryReport {
        loss_value: chain.loss,
        bound_a1: chain.bound_a1,
        bound_jensen: chain.bound_jensen,
        two_hop_alignment: two_hop_alignment(v, g)?,
        bilipschitz_l,
        theorem3_terms,
        mean_classifier_error,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub passed: usize,
    pub min_slack_a1: f64,
    pub min_slack_jensen: f64,
    pub min_self_floor_margin: f64,
    pub violations: Vec<String>,
}

/// Random graphs and unit-norm tensors of varied size, temperature and
/// negative mode, each checked against the chain and the self-negative floor.
pub fn random_inequality_trials(trials: usize, seed: u64) -> Result<TrialSummary> {
    let mut summary = TrialSummary {
        trials,
        passed: 0,
        min_slack_a1: f64::INFINITY,
        min_slack_jensen: f64::INFINITY,
        min_self_floor_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        let n = rng.gen_range(2..24);
        let dim = rng.gen_range(1..9);
        let tau = [0.1, 0.25, 0.5, 0.75, 1.0, 2.0][rng.gen_range(0..6)];
        let edges: Vec<(usize, usize)> = (0..rng.gen_range(1..3 * n))
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
            .collect();
        let g = build_graph(&edges, n, None)?;
        let mut unit = || l2_normalize_rows(&DenseMatrix::from_fn(n, dim, |_, _| standard_normal(&mut rng))).output;
        let (p, u, v) = (unit(), unit(), unit());
        let negatives = match t % 3 {
            0 => Negatives::All { include_self: true },
            1 => Negatives::All { include_self: false },
            _ => Negatives::Sampled(sample_negatives(n, 1 + t % 7, n, seed ^ t as u64)?),
        };
        let chain = check_inequality_chain(&g, &p, &u, &v, &negatives, tau)?;
        summary.min_slack_a1 = summary.min_slack_a1.min(chain.loss - chain.bound_a1);
        summary.min_slack_jensen = summary.min_slack_jensen.min(chain.bound_a1 - chain.bound_jensen);
        let mut ok = chain.pass;
        if !chain.pass {
            summary.violations.push(format!(
                "trial {t}: loss {} bound {} jensen {}",
                chain.loss, chain.bound_a1, chain.bound_jensen
            ));
        }
        if t % 3 == 0 {
            let margin = self_negative_floor_margin(&v, &negatives, tau);
            summary.min_self_floor_margin = summary.min_self_floor_margin.min(margin);
            if !(margin > 0.0) {
                ok = false;
                summary.violations.push(format!("trial {t}: self-negative floor margin {margin}"));
            }
        }
        summary.passed += ok as usize;
    }
    Ok(summary)
}
