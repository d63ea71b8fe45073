//! Adam with bias correction; L2 weight decay is added to the gradient.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, ParamTensor};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment buffers, one pair per optimized tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<DenseMatrix>,
    pub second: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect();
        Self {
            first: zeros(),
            second: zeros(),
        }
    }
}

/// One Adam update; `step` is the 1-based update count.
pub fn adam_step(
    params: &mut [&mut ParamTensor],
    state: &mut AdamState,
    config: &AdamConfig,
    step: u64,
) -> Result<()> {
    if params.len() != state.first.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} tensors but {} moment buffers",
            params.len(),
            state.first.len()
        )));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("Adam step count starts at 1".into()));
    }
    if params.iter().any(|p| !p.grad.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let t = step as i32;
    let bc1 = 1.0 - libm::pow(config.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(config.beta2, t as f64);
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        let values = p.value.data_mut();
        let grads = p.grad.data();
        for (((x, &g), mi), vi) in values
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let g = g + config.weight_decay * *x;
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * g;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x -= config.lr * m_hat / (math::sqrt(v_hat) + config.eps);
        }
    }
    Ok(())
}
