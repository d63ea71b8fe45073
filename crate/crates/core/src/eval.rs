//! Downstream evaluation of frozen representations: a multinomial logistic
//! probe, k-means with NMI, and cosine-similarity samples for histograms.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{two_hop_graph, Graph, Labels};
use crate::linalg::{cosine, gemm, squared_distance, DenseMatrix, ParamTensor, Trans};
use crate::math;
use crate::rng::{rng_from_seed, shuffle, standard_normal, stream_rng};

/// Upper bound on pairs kept per histogram.
pub const HISTOGRAM_PAIR_CAP: usize = 1_000_000;

/// Disjoint train / validation / test node sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for idx in [&self.train, &self.val, &self.test] {
            for &i in idx {
                if i >= num_nodes {
                    return Err(Error::NodeOutOfRange { node: i, num_nodes });
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "node {i} appears in more than one split (or twice in one)"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub num_seeds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            weight_decay: 1e-5,
            num_seeds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub mean_accuracy: f64,
    /// Population standard deviation over seeds.
    pub std_accuracy: f64,
    pub per_seed: Vec<f64>,
}

fn accuracy(logits: &DenseMatrix, rows: &[usize], y: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let correct = rows
        .iter()
        .enumerate()
        .filter(|&(i, &node)| argmax(logits.row(i)) == y[node])
        .count();
    correct as f64 / rows.len() as f64
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn logits(x: &DenseMatrix, w: &ParamTensor, b: &ParamTensor) -> Result<DenseMatrix> {
    crate::linalg::affine(x, w, b)
}

/// Logistic regression on the train rows, trained by full-batch gradient
/// descent on the cross-entropy summed over those rows, with L2 weight decay. Test accuracy is read at the epoch with the
/// best validation accuracy (earliest on ties; the final epoch if there is no
/// validation set).
///
/// Each seed draws the initial weights as `X_trainᵀ G` for a random `G`, so
/// initialization and every update commute with rotations of the embedding space.
pub fn linear_probe(
    embeddings: &DenseMatrix,
    labels: &Labels,
    splits: &Splits,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if labels.len() != embeddings.rows() {
        return Err(Error::LabelCountMismatch {
            expected: embeddings.rows(),
            actual: labels.len(),
        });
    }
    splits.validate(embeddings.rows())?;
    if splits.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if splits.test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    if config.num_seeds == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("probe needs at least one seed and one epoch".into()));
    }
    let y = labels.ids();
    let m = labels.num_classes();
    let d = embeddings.cols();
    let x_train = embeddings.select_rows(&splits.train);
    let x_val = embeddings.select_rows(&splits.val);
    let x_test = embeddings.select_rows(&splits.test);
    let n_train = splits.train.len();
    let init_scale = 1e-2 / math::sqrt(n_train as f64);

    let mut per_seed = Vec::with_capacity(config.num_seeds);
    for s in 0..config.num_seeds {
        let mut rng = stream_rng(config.seed, s as u64);
        let g = DenseMatrix::from_fn(n_train, m, |_, _| init_scale * standard_normal(&mut rng));
        let mut w = ParamTensor::new(DenseMatrix::zeros(d, m));
        gemm(1.0, &x_train, Trans::Yes, &g, Trans::No, 0.0, &mut w.value)?;
        let mut b = ParamTensor::new(DenseMatrix::zeros(1, m));
        let mut best_val = f64::NEG_INFINITY;
        let mut best_test = 0.0;
        for epoch in 1..=config.epochs {
            let mut z = logits(&x_train, &w, &b)?;
            // softmax − one-hot per train row
            for (i, &node) in splits.train.iter().enumerate() {
                let row = z.row_mut(i);
                let lse = math::log_sum_exp(row);
                for (c, v) in row.iter_mut().enumerate() {
                    *v = math::exp(*v - lse) - if c == y[node] { 1.0 } else { 0.0 };
                }
            }
            gemm(1.0, &x_train, Trans::Yes, &z, Trans::No, 0.0, &mut w.grad)?;
            w.grad.add_scaled(&w.value, config.weight_decay)?;
            b.zero_grad();
            for i in 0..z.rows() {
                crate::linalg::axpy(1.0, z.row(i), b.grad.row_mut(0));
            }
            if !(w.grad.is_finite() && b.grad.is_finite()) {
                return Err(Error::NonFinite("probe gradient"));
            }
            w.value.add_scaled(&w.grad, -config.lr)?;
            b.value.add_scaled(&b.grad, -config.lr)?;

            let val_acc = if splits.val.is_empty() {
                0.0
            } else {
                accuracy(&logits(&x_val, &w, &b)?, &splits.val, y)
            };
            if val_acc > best_val || (splits.val.is_empty() && epoch == config.epochs) {
                best_val = val_acc;
                best_test = accuracy(&logits(&x_test, &w, &b)?, &splits.test, y);
            }
        }
        per_seed.push(best_test);
    }
    let k = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / k;
    let var = per_seed.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / k;
    Ok(ProbeResult {
        mean_accuracy: mean,
        std_accuracy: math::sqrt(var),
        per_seed,
    })
}

/// Number of k-means restarts; the lowest-inertia run wins.
pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

/// Lloyd's algorithm with k-means++ seeding, best of [`KMEANS_RESTARTS`].
pub fn kmeans(x: &DenseMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "k = {k} clusters for {n} points"
        )));
    }
    let mut best: Option<Clustering> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = stream_rng(seed, restart as u64);
        let mut centers = kmeans_pp(x, k, &mut rng);
        let mut assign = vec![usize::MAX; n];
        let mut inertia = 0.0;
        for _ in 0..KMEANS_MAX_ITERS {
            let mut changed = false;
            inertia = 0.0;
            for i in 0..n {
                let (c, dist) = nearest(x.row(i), &centers);
                inertia += dist;
                if assign[i] != c {
                    assign[i] = c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = DenseMatrix::zeros(k, x.cols());
            let mut counts = vec![0usize; k];
            for i in 0..n {
                crate::linalg::axpy(1.0, x.row(i), sums.row_mut(assign[i]));
                counts[assign[i]] += 1;
            }
            for c in 0..k {
                // an emptied cluster keeps its previous center
                if counts[c] > 0 {
                    for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                        *dst = s / counts[c] as f64;
                    }
                }
            }
        }
        if best.as_ref().map_or(true, |b| inertia < b.inertia) {
            best = Some(Clustering {
                assignments: assign,
                inertia,
            });
        }
    }
    Ok(best.unwrap())
}

fn nearest(p: &[f64], centers: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = squared_distance(p, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(x: &DenseMatrix, k: usize, rng: &mut crate::rng::EngineRng) -> DenseMatrix {
    let n = x.rows();
    let mut centers = DenseMatrix::zeros(k, x.cols());
    centers.row_mut(0).copy_from_slice(x.row(rng.gen_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| squared_distance(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), centers.row(c)));
        }
    }
    centers
}

/// Normalized mutual information, `I(a; b) / ((H(a) + H(b)) / 2)`.
/// Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LabelCountMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidArgument("NMI of empty labelings".into()));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * math::ln(p)
            })
            .sum()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * math::ln(c * nf / (ca[x] as f64 * cb[y] as f64));
            }
        }
    }
    let denom = 0.5 * (ha + hb);
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// k-means on the rows with `num_clusters` clusters, scored against `labels`.
pub fn kmeans_nmi(embeddings: &DenseMatrix, labels: &Labels, num_clusters: usize, seed: u64) -> Result<f64> {
    if labels.len() != embeddings.rows() {
        return Err(Error::LabelCountMismatch {
            expected: embeddings.rows(),
            actual: labels.len(),
        });
    }
    if num_clusters < 2 {
        return Err(Error::InvalidArgument("clustering needs at least 2 clusters".into()));
    }
    let c = kmeans(embeddings, num_clusters, seed)?;
    nmi(&c.assignments, labels.ids())
}

/// Cosine similarities of node pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistograms {
    pub random_pairs: Vec<f64>,
    pub one_hop: Vec<f64>,
    pub two_hop: Vec<f64>,
    /// `cos(v, g(v))` per node; empty without predictions.
    pub predictor: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl SimilarityHistograms {
    pub fn mean_random(&self) -> f64 {
        mean(&self.random_pairs)
    }

    pub fn mean_one_hop(&self) -> f64 {
        mean(&self.one_hop)
    }

    pub fn mean_two_hop(&self) -> f64 {
        mean(&self.two_hop)
    }
}

fn edge_cosines(embeddings: &DenseMatrix, g: &Graph, rng: &mut crate::rng::EngineRng) -> Vec<f64> {
    let mut edges: Vec<(usize, usize)> = g.edges().collect();
    if edges.len() > HISTOGRAM_PAIR_CAP {
        shuffle(&mut edges, rng);
        edges.truncate(HISTOGRAM_PAIR_CAP);
    }
    edges
        .iter()
        .map(|&(u, v)| cosine(embeddings.row(u), embeddings.row(v)))
        .collect()
}

/// Cosines over uniformly drawn distinct node pairs, every edge, every
/// two-hop edge (each capped at [`HISTOGRAM_PAIR_CAP`] by seeded subsampling)
/// and, given predictions, each node with its own prediction.
pub fn similarity_histograms(
    embeddings: &DenseMatrix,
    graph: &Graph,
    num_random_pairs: usize,
    seed: u64,
    predictions: Option<&DenseMatrix>,
) -> Result<SimilarityHistograms> {
    let n = graph.num_nodes();
    if embeddings.rows() != n {
        return Err(Error::ShapeMismatch {
            op: "embeddings vs graph",
            left: embeddings.shape(),
            right: (n, embeddings.cols()),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut random_pairs = Vec::with_capacity(num_random_pairs.min(HISTOGRAM_PAIR_CAP));
    if n >= 2 {
        for _ in 0..num_random_pairs.min(HISTOGRAM_PAIR_CAP) {
            let u = rng.gen_range(0..n);
            let mut v = rng.gen_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            random_pairs.push(cosine(embeddings.row(u), embeddings.row(v)));
        }
    }
    let one_hop = edge_cosines(embeddings, graph, &mut rng);
    let two_hop = edge_cosines(embeddings, &two_hop_graph(graph), &mut rng);
    let predictor = match predictions {
        Some(p) => {
            if p.shape() != embeddings.shape() {
                return Err(Error::ShapeMismatch {
                    op: "predictions vs embeddings",
                    left: p.shape(),
                    right: embeddings.shape(),
                });
            }
            (0..n).map(|i| cosine(embeddings.row(i), p.row(i))).collect()
        }
        None => Vec::new(),
    };
    Ok(SimilarityHistograms {
        random_pairs,
        one_hop,
        two_hop,
        predictor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub probe_accuracy: f64,
    pub probe_accuracy_std: f64,
    pub probe_per_seed: Vec<f64>,
    pub nmi: f64,
    pub histograms: SimilarityHistograms,
}

/// Probe, clustering and histograms in one pass.
pub fn evaluate(
    embeddings: &DenseMatrix,
    graph: &Graph,
    splits: &Splits,
    probe: &ProbeConfig,
    predictions: Option<&DenseMatrix>,
    num_random_pairs: usize,
) -> Result<EvalReport> {
    let labels = graph.require_labels()?;
    let p = linear_probe(embeddings, labels, splits, probe)?;
    let nmi = kmeans_nmi(embeddings, labels, labels.num_classes(), probe.seed)?;
    let histograms = similarity_histograms(embeddings, graph, num_random_pairs, probe.seed, predictions)?;
    Ok(EvalReport {
        probe_accuracy: p.mean_accuracy,
        probe_accuracy_std: p.std_accuracy,
        probe_per_seed: p.per_seed,
        nmi,
        histograms,
    })
}
