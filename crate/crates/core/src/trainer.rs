//! Full-graph training loop: online forward, detached target forward, loss,
//! backward into the online encoder and predictor, Adam, then EMA.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{
    ema_update, gcn_backward, gcn_forward, gcn_forward_traced, predictor_backward,
    predictor_forward_traced, target_forward, EncoderParams, ModelState, PredictorKind,
    PredictorParams,
};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph, SparseMatrix};
use crate::linalg::DenseMatrix;
use crate::math::mix_seed;
use crate::objectives::{evaluate_loss, sample_negatives_with, LossConfig, LossVariant, Negatives};
use crate::optim::{adam_step, AdamConfig};
use crate::rng::stream_rng;

/// Above this many nodes `neg_k = 0` falls back to sampled negatives.
pub const ALL_NEGATIVES_MAX_NODES: usize = 20_000;
/// Negatives per anchor used by that fallback.
pub const FALLBACK_NEG_K: usize = 10;

const INIT_STREAM: u64 = 0x1417;
const NEGATIVE_STREAM: u64 = 0x4e45_4753;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// EMA decay of the target encoder.
    pub lambda: f64,
    pub tau: f64,
    /// Negatives per anchor; 0 selects every node (or the sampled fallback on large graphs).
    pub neg_k: usize,
    pub dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub predictor_kind: PredictorKind,
    pub loss_variant: LossVariant,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub include_self_as_negative: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.001,
            weight_decay: 0.0,
            lambda: 0.99,
            tau: 0.75,
            neg_k: 0,
            dim: 512,
            hidden_dim: 512,
            encoder_layers: 2,
            predictor_kind: PredictorKind::Mlp,
            loss_variant: LossVariant::Graphacl,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            include_self_as_negative: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(alloc::format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(alloc::format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(alloc::format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.dim == 0 || self.hidden_dim == 0 || self.encoder_layers == 0 {
            return bad("dim, hidden_dim and encoder_layers must be positive".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau: self.tau,
            neg_k: self.neg_k,
            include_self_as_negative: self.include_self_as_negative,
            variant: self.loss_variant,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Negatives per anchor actually used on a graph of `num_nodes`; `None` means all nodes.
    pub fn effective_neg_k(&self, num_nodes: usize) -> Option<usize> {
        match self.neg_k {
            0 if num_nodes <= ALL_NEGATIVES_MAX_NODES => None,
            0 => Some(FALLBACK_NEG_K),
            k => Some(k),
        }
    }
}

/// Freshly initialized online, target and predictor parameters for `config`.
pub fn init_model(input_dim: usize, config: &TrainConfig) -> Result<ModelState> {
    let mut rng = stream_rng(config.seed, INIT_STREAM);
    let online = EncoderParams::init(
        input_dim,
        config.hidden_dim,
        config.dim,
        config.encoder_layers,
        &mut rng,
    )?;
    let predictor = PredictorParams::init(config.predictor_kind, config.dim, &mut rng);
    ModelState::new(online, predictor)
}

/// Negative set for `epoch` (1-based); sampled sets are seeded by `(seed, epoch)`.
pub fn negatives_for_epoch(config: &TrainConfig, num_nodes: usize, epoch: usize) -> Result<Negatives> {
    match config.effective_neg_k(num_nodes) {
        None => Ok(Negatives::All {
            include_self: config.include_self_as_negative,
        }),
        Some(k) => {
            let seed = mix_seed(mix_seed(config.seed, NEGATIVE_STREAM), epoch as u64);
            Ok(Negatives::Sampled(sample_negatives_with(
                num_nodes,
                k,
                num_nodes,
                seed,
                config.include_self_as_negative,
            )?))
        }
    }
}

/// Outputs of one training-loss evaluation.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    /// Online representations `V` from this forward pass.
    pub embeddings: DenseMatrix,
}

fn needs_target(variant: LossVariant) -> bool {
    matches!(variant, LossVariant::Graphacl | LossVariant::Pre | LossVariant::Com)
}

/// Evaluates the configured loss and overwrites the online and predictor
/// gradient buffers with its gradient. The target is only read.
pub fn loss_and_gradients(
    graph: &Graph,
    adj: &SparseMatrix,
    features: &DenseMatrix,
    state: &mut ModelState,
    loss: &LossConfig,
    negatives: &Negatives,
) -> Result<StepOutput> {
    state.zero_grad();
    let trace = gcn_forward_traced(adj, features, &state.online)?;
    let v = trace.output();
    let ptrace = predictor_forward_traced(v, &state.predictor)?;
    let u = if needs_target(loss.variant) {
        target_forward(adj, features, state)?
    } else {
        DenseMatrix::zeros(v.rows(), v.cols())
    };
    let out = evaluate_loss(loss.variant, graph, ptrace.output(), &u, v, negatives, loss.tau)?;
    let mut grad_v = out
        .grad_v
        .unwrap_or_else(|| DenseMatrix::zeros(v.rows(), v.cols()));
    if let Some(grad_p) = out.grad_p {
        let through = predictor_backward(v, &mut state.predictor, &ptrace, &grad_p)?;
        grad_v.add_scaled(&through, 1.0)?;
    }
    gcn_backward(adj, features, &mut state.online, &trace, &grad_v)?;
    Ok(StepOutput {
        loss: out.value,
        embeddings: trace.into_output(),
    })
}

/// Loss value only, for finite differences.
pub fn loss_value(
    graph: &Graph,
    adj: &SparseMatrix,
    features: &DenseMatrix,
    state: &ModelState,
    loss: &LossConfig,
    negatives: &Negatives,
) -> Result<f64> {
    let v = gcn_forward(adj, features, &state.online)?;
    let p = crate::encoder::predictor_forward(&v, &state.predictor)?;
    let u = if needs_target(loss.variant) {
        target_forward(adj, features, state)?
    } else {
        DenseMatrix::zeros(v.rows(), v.cols())
    };
    Ok(evaluate_loss(loss.variant, graph, &p, &u, &v, negatives, loss.tau)?.value)
}

/// Per-epoch callback payload.
#[derive(Debug, Clone, Copy)]
pub struct EpochInfo<'a> {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    /// Online representations used for this epoch's loss (before the update).
    pub embeddings: &'a DenseMatrix,
    pub state: &'a ModelState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Online encoder output after the final update.
    pub embeddings: DenseMatrix,
    pub loss_curve: Vec<f64>,
    pub state: ModelState,
    /// Zero without the `std` feature.
    pub wall_seconds: f64,
}

pub fn train(graph: &Graph, features: &DenseMatrix, config: &TrainConfig) -> Result<TrainResult> {
    train_with_observer(graph, features, config, |_| {})
}

/// [`train`] calling `observer` after every epoch's update.
pub fn train_with_observer<F>(
    graph: &Graph,
    features: &DenseMatrix,
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainResult>
where
    F: FnMut(EpochInfo<'_>),
{
    config.validate()?;
    if features.rows() != graph.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "features vs graph",
            left: features.shape(),
            right: (graph.num_nodes(), features.cols()),
        });
    }
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let adj = normalized_adjacency(graph);
    let loss_cfg = config.loss_config();
    let adam = config.adam_config();
    let mut state = init_model(features.cols(), config)?;
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let negatives = negatives_for_epoch(config, graph.num_nodes(), epoch)?;
        let step = loss_and_gradients(graph, &adj, features, &mut state, &loss_cfg, &negatives)
            .map_err(|e| diverged(e, epoch))?;
        if !step.loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        state.step += 1;
        let step_count = state.step;
        {
            let ModelState {
                online,
                predictor,
                adam: moments,
                ..
            } = &mut state;
            let mut params: Vec<_> = online.tensors_mut().collect();
            params.extend(predictor.tensors_mut());
            adam_step(&mut params, moments, &adam, step_count).map_err(|e| diverged(e, epoch))?;
        }
        ema_update(&mut state, config.lambda)?;
        loss_curve.push(step.loss);
        observer(EpochInfo {
            epoch,
            loss: step.loss,
            embeddings: &step.embeddings,
            state: &state,
        });
    }
    let embeddings = gcn_forward(&adj, features, &state.online)?;
    if !embeddings.is_finite() {
        return Err(Error::Divergence { epoch: config.epochs });
    }
    #[cfg(feature = "std")]
    let wall_seconds = started.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let wall_seconds = 0.0;
    Ok(TrainResult {
        embeddings,
        loss_curve,
        state,
        wall_seconds,
    })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence { epoch },
        other => other,
    }
}
