//! GCN encoder, predictor head, and the online/target pair coupled by EMA.
//!
//! A layer computes `Z = Ã (H W) + b`; hidden layers apply ELU, the last
//! layer none, and the final output rows are ℓ₂-normalized. The target
//! encoder shares the online encoder's shape and is only ever read or
//! EMA-updated, never differentiated.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::linalg::{
    affine, affine_backward, elu, elu_backward, gemm, l2_normalize_rows, spmm, DenseMatrix,
    NormalizedRows, ParamTensor, Trans,
};
use crate::math;
use crate::optim::AdamState;
use crate::rng::EngineRng;

/// Glorot/Xavier uniform initialization.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut EngineRng) -> DenseMatrix {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-limit..=limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    /// Linear propagation; used by oracle tests.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    layers: Vec<GcnLayer>,
    activation: Activation,
}

impl EncoderParams {
    /// `num_layers` layers mapping `input_dim → hidden_dim → … → output_dim`.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        num_layers: usize,
        rng: &mut EngineRng,
    ) -> Result<Self> {
        if num_layers == 0 || input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig(
                "encoder needs at least one layer and positive dimensions".into(),
            ));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let fan_in = if l == 0 { input_dim } else { hidden_dim };
            let fan_out = if l + 1 == num_layers { output_dim } else { hidden_dim };
            layers.push(GcnLayer {
                weight: ParamTensor::new(glorot_uniform(fan_in, fan_out, rng)),
                bias: ParamTensor::new(DenseMatrix::zeros(1, fan_out)),
            });
        }
        Ok(Self {
            layers,
            activation: Activation::Elu,
        })
    }

    /// From explicit `(weight, bias)` pairs; checks that shapes chain.
    pub fn from_weights(
        weights: Vec<(DenseMatrix, DenseMatrix)>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("encoder needs at least one layer".into()));
        }
        for (i, (w, b)) in weights.iter().enumerate() {
            if b.rows() != 1 || b.cols() != w.cols() {
                return Err(Error::ShapeMismatch {
                    op: "encoder bias",
                    left: w.shape(),
                    right: b.shape(),
                });
            }
            if i > 0 && weights[i - 1].0.cols() != w.rows() {
                return Err(Error::ShapeMismatch {
                    op: "encoder layer chain",
                    left: weights[i - 1].0.shape(),
                    right: w.shape(),
                });
            }
        }
        let layers = weights
            .into_iter()
            .map(|(w, b)| GcnLayer {
                weight: ParamTensor::new(w),
                bias: ParamTensor::new(b),
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[GcnLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.value.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    /// `W₁, b₁, W₂, b₂, …`
    pub fn tensors(&self) -> impl Iterator<Item = &ParamTensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().for_each(ParamTensor::zero_grad);
    }

    fn same_shape(&self, other: &EncoderParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .tensors()
                .zip(other.tensors())
                .all(|(a, b)| a.shape() == b.shape())
    }
}

/// Saved activations for [`gcn_backward`]. The input features are not stored.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Outputs of hidden layers, `H₁ … H_{L-1}`.
    hidden: Vec<DenseMatrix>,
    /// Pre-activations `Z₁ … Z_L`.
    pre: Vec<DenseMatrix>,
    normalized: NormalizedRows,
}

impl EncoderTrace {
    pub fn output(&self) -> &DenseMatrix {
        &self.normalized.output
    }

    pub fn into_output(self) -> DenseMatrix {
        self.normalized.output
    }
}

fn layer_forward(adj: &SparseMatrix, h: &DenseMatrix, layer: &GcnLayer) -> Result<DenseMatrix> {
    let mut hw = DenseMatrix::zeros(h.rows(), layer.weight.value.cols());
    gemm(1.0, h, Trans::No, &layer.weight.value, Trans::No, 0.0, &mut hw)?;
    let mut z = spmm(adj, &hw)?;
    let bias = layer.bias.value.row(0);
    for i in 0..z.rows() {
        for (zi, bi) in z.row_mut(i).iter_mut().zip(bias) {
            *zi += bi;
        }
    }
    Ok(z)
}

fn check_input(adj: &SparseMatrix, x: &DenseMatrix, params: &EncoderParams) -> Result<()> {
    if adj.num_rows() != x.rows() || adj.num_cols() != x.rows() {
        return Err(Error::ShapeMismatch {
            op: "gcn_forward adjacency",
            left: (adj.num_rows(), adj.num_cols()),
            right: x.shape(),
        });
    }
    if x.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "gcn_forward features",
            left: x.shape(),
            right: params.layers[0].weight.shape(),
        });
    }
    Ok(())
}

/// Forward pass keeping what the backward pass needs.
pub fn gcn_forward_traced(
    adj: &SparseMatrix,
    x: &DenseMatrix,
    params: &EncoderParams,
) -> Result<EncoderTrace> {
    check_input(adj, x, params)?;
    let num_layers = params.layers.len();
    let mut hidden = Vec::with_capacity(num_layers - 1);
    let mut pre = Vec::with_capacity(num_layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { x } else { &hidden[l - 1] };
        let z = layer_forward(adj, input, layer)?;
        if l + 1 < num_layers {
            hidden.push(match params.activation {
                Activation::Elu => elu(&z),
                Activation::None => z.clone(),
            });
        }
        pre.push(z);
    }
    let normalized = l2_normalize_rows(pre.last().unwrap());
    Ok(EncoderTrace {
        hidden,
        pre,
        normalized,
    })
}

/// Row-normalized encoder output.
pub fn gcn_forward(adj: &SparseMatrix, x: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    Ok(gcn_forward_traced(adj, x, params)?.into_output())
}

/// Accumulates parameter gradients given `∂L/∂V` for the normalized output.
/// `adj` must be symmetric (true for normalized adjacency of an undirected graph).
pub fn gcn_backward(
    adj: &SparseMatrix,
    x: &DenseMatrix,
    params: &mut EncoderParams,
    trace: &EncoderTrace,
    upstream: &DenseMatrix,
) -> Result<()> {
    let num_layers = params.layers.len();
    let mut grad = trace.normalized.backward(upstream)?;
    for l in (0..num_layers).rev() {
        if l + 1 < num_layers && params.activation == Activation::Elu {
            grad = elu_backward(&trace.pre[l], &grad);
        }
        let layer = &mut params.layers[l];
        let bias_grad = layer.bias.grad.row_mut(0);
        for i in 0..grad.rows() {
            crate::linalg::axpy(1.0, grad.row(i), bias_grad);
        }
        let d_hw = spmm(adj, &grad)?;
        let input = if l == 0 { x } else { &trace.hidden[l - 1] };
        gemm(1.0, input, Trans::Yes, &d_hw, Trans::No, 1.0, &mut layer.weight.grad)?;
        if l > 0 {
            let mut dh = DenseMatrix::zeros(d_hw.rows(), layer.weight.value.rows());
            gemm(1.0, &d_hw, Trans::No, &layer.weight.value, Trans::Yes, 0.0, &mut dh)?;
            grad = dh;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    #[default]
    Mlp,
    Linear,
    Identity,
}

/// The predictor head `g_φ` mapping `D → D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictorParams {
    /// `normalize(ELU(V W₁ + b₁) W₂ + b₂)`
    Mlp {
        w1: ParamTensor,
        b1: ParamTensor,
        w2: ParamTensor,
        b2: ParamTensor,
    },
    /// `normalize(V W + b)`
    Linear { weight: ParamTensor, bias: ParamTensor },
    /// `P = V`
    Identity { dim: usize },
}

impl PredictorParams {
    pub fn init(kind: PredictorKind, dim: usize, rng: &mut EngineRng) -> Self {
        match kind {
            PredictorKind::Mlp => PredictorParams::Mlp {
                w1: ParamTensor::new(glorot_uniform(dim, dim, rng)),
                b1: ParamTensor::new(DenseMatrix::zeros(1, dim)),
                w2: ParamTensor::new(glorot_uniform(dim, dim, rng)),
                b2: ParamTensor::new(DenseMatrix::zeros(1, dim)),
            },
            PredictorKind::Linear => PredictorParams::Linear {
                weight: ParamTensor::new(glorot_uniform(dim, dim, rng)),
                bias: ParamTensor::new(DenseMatrix::zeros(1, dim)),
            },
            PredictorKind::Identity => PredictorParams::Identity { dim },
        }
    }

    /// Linear predictor with the given weight and zero bias.
    pub fn linear(weight: DenseMatrix) -> Result<Self> {
        if weight.rows() != weight.cols() {
            return Err(Error::ShapeMismatch {
                op: "linear predictor",
                left: weight.shape(),
                right: (weight.cols(), weight.cols()),
            });
        }
        let dim = weight.cols();
        Ok(PredictorParams::Linear {
            weight: ParamTensor::new(weight),
            bias: ParamTensor::new(DenseMatrix::zeros(1, dim)),
        })
    }

    pub fn kind(&self) -> PredictorKind {
        match self {
            PredictorParams::Mlp { .. } => PredictorKind::Mlp,
            PredictorParams::Linear { .. } => PredictorKind::Linear,
            PredictorParams::Identity { .. } => PredictorKind::Identity,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PredictorParams::Mlp { w1, .. } => w1.value.rows(),
            PredictorParams::Linear { weight, .. } => weight.value.rows(),
            PredictorParams::Identity { dim } => *dim,
        }
    }

    pub fn tensors(&self) -> Vec<&ParamTensor> {
        match self {
            PredictorParams::Mlp { w1, b1, w2, b2 } => alloc::vec![w1, b1, w2, b2],
            PredictorParams::Linear { weight, bias } => alloc::vec![weight, bias],
            PredictorParams::Identity { .. } => Vec::new(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            PredictorParams::Mlp { w1, b1, w2, b2 } => alloc::vec![w1, b1, w2, b2],
            PredictorParams::Linear { weight, bias } => alloc::vec![weight, bias],
            PredictorParams::Identity { .. } => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().into_iter().for_each(ParamTensor::zero_grad);
    }
}

#[derive(Debug, Clone)]
pub struct PredictorTrace {
    /// MLP only: `(pre-activation, hidden)`.
    hidden: Option<(DenseMatrix, DenseMatrix)>,
    normalized: Option<NormalizedRows>,
    output: DenseMatrix,
}

impl PredictorTrace {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }
}

pub fn predictor_forward_traced(v: &DenseMatrix, params: &PredictorParams) -> Result<PredictorTrace> {
    if v.cols() != params.dim() {
        return Err(Error::ShapeMismatch {
            op: "predictor_forward",
            left: v.shape(),
            right: (params.dim(), params.dim()),
        });
    }
    match params {
        PredictorParams::Identity { .. } => Ok(PredictorTrace {
            hidden: None,
            normalized: None,
            output: v.clone(),
        }),
        PredictorParams::Linear { weight, bias } => {
            let normalized = l2_normalize_rows(&affine(v, weight, bias)?);
            Ok(PredictorTrace {
                hidden: None,
                output: normalized.output.clone(),
                normalized: Some(normalized),
            })
        }
        PredictorParams::Mlp { w1, b1, w2, b2 } => {
            let a1 = affine(v, w1, b1)?;
            let h = elu(&a1);
            let normalized = l2_normalize_rows(&affine(&h, w2, b2)?);
            Ok(PredictorTrace {
                hidden: Some((a1, h)),
                output: normalized.output.clone(),
                normalized: Some(normalized),
            })
        }
    }
}

/// Row-normalized predictions `P = g_φ(V)`.
pub fn predictor_forward(v: &DenseMatrix, params: &PredictorParams) -> Result<DenseMatrix> {
    Ok(predictor_forward_traced(v, params)?.output)
}

/// Accumulates predictor gradients and returns `∂L/∂V` through the predictor.
pub fn predictor_backward(
    v: &DenseMatrix,
    params: &mut PredictorParams,
    trace: &PredictorTrace,
    upstream: &DenseMatrix,
) -> Result<DenseMatrix> {
    match params {
        PredictorParams::Identity { .. } => Ok(upstream.clone()),
        PredictorParams::Linear { weight, bias } => {
            let d = trace.normalized.as_ref().unwrap().backward(upstream)?;
            Ok(affine_backward(v, weight, bias, &d, true)?.unwrap())
        }
        PredictorParams::Mlp { w1, b1, w2, b2 } => {
            let (a1, h) = trace.hidden.as_ref().unwrap();
            let d = trace.normalized.as_ref().unwrap().backward(upstream)?;
            let dh = affine_backward(h, w2, b2, &d, true)?.unwrap();
            let da1 = elu_backward(a1, &dh);
            Ok(affine_backward(v, w1, b1, &da1, true)?.unwrap())
        }
    }
}

/// Online, target and predictor parameters with optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub online: EncoderParams,
    pub target: EncoderParams,
    pub predictor: PredictorParams,
    pub adam: AdamState,
    pub step: u64,
}

impl ModelState {
    /// Target starts as an exact copy of the online encoder.
    pub fn new(online: EncoderParams, predictor: PredictorParams) -> Result<Self> {
        if predictor.dim() != online.output_dim() {
            return Err(Error::ShapeMismatch {
                op: "predictor vs encoder output",
                left: (online.output_dim(), online.output_dim()),
                right: (predictor.dim(), predictor.dim()),
            });
        }
        let mut target = online.clone();
        target.zero_grad();
        let shapes: Vec<(usize, usize)> = online
            .tensors()
            .chain(predictor.tensors())
            .map(ParamTensor::shape)
            .collect();
        Ok(Self {
            online,
            target,
            predictor,
            adam: AdamState::new(&shapes),
            step: 0,
        })
    }

    /// Online encoder tensors followed by predictor tensors: the optimized set.
    pub fn trainable_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out: Vec<&mut ParamTensor> = self.online.tensors_mut().collect();
        out.extend(self.predictor.tensors_mut());
        out
    }

    pub fn trainable(&self) -> Vec<&ParamTensor> {
        let mut out: Vec<&ParamTensor> = self.online.tensors().collect();
        out.extend(self.predictor.tensors());
        out
    }

    pub fn zero_grad(&mut self) {
        self.online.zero_grad();
        self.predictor.zero_grad();
    }
}

/// `ξ ← λ ξ + (1 − λ) θ` on every target tensor.
pub fn ema_update(state: &mut ModelState, decay: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::InvalidConfig(alloc::format!(
            "EMA decay {decay} outside [0, 1]"
        )));
    }
    if !state.target.same_shape(&state.online) {
        return Err(Error::InvalidArgument("online and target shapes differ".into()));
    }
    let keep = 1.0 - decay;
    for (t, o) in state.target.tensors_mut().zip(state.online.tensors()) {
        for (tv, ov) in t.value.data_mut().iter_mut().zip(o.value.data()) {
            *tv = decay * *tv + keep * ov;
        }
    }
    Ok(())
}

/// Detached target representations `U = f_ξ(G)`.
pub fn target_forward(adj: &SparseMatrix, x: &DenseMatrix, state: &ModelState) -> Result<DenseMatrix> {
    gcn_forward(adj, x, &state.target)
}
