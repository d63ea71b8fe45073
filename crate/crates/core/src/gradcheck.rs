//! Central-difference gradient checker.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, ParamTensor};
use crate::rng::{rng_from_seed, shuffle};

/// Minimum number of coordinates probed per tensor (all of them if fewer).
pub const MIN_COORDS_PER_TENSOR: usize = 64;

/// Compares `params[i].grad` with central differences of `loss_fn`.
///
/// `loss_fn` receives the parameter values (one matrix per tensor, same order)
/// with a single coordinate perturbed. Returns the largest
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)` over the probed
/// coordinates.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[ParamTensor], h: f64, seed: u64) -> Result<f64>
where
    F: FnMut(&[DenseMatrix]) -> Result<f64>,
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::InvalidArgument(alloc::format!("step {h} outside [1e-7, 1e-4]")));
    }
    let mut values: Vec<DenseMatrix> = params.iter().map(|p| p.value.clone()).collect();
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for (t, p) in params.iter().enumerate() {
        let len = p.value.data().len();
        let mut coords: Vec<usize> = (0..len).collect();
        shuffle(&mut coords, &mut rng);
        coords.truncate(MIN_COORDS_PER_TENSOR.min(len));
        for &i in &coords {
            let orig = values[t].data()[i];
            values[t].data_mut()[i] = orig + h;
            let plus = loss_fn(&values)?;
            values[t].data_mut()[i] = orig - h;
            let minus = loss_fn(&values)?;
            values[t].data_mut()[i] = orig;
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::NonFinite("loss during finite differences"));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = p.grad.data()[i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
