//! Per-class binary cross-entropy over the softmax output:
//! `L = Σ_c [ -y_c ln p_c - (1 - y_c) ln(1 - p_c) ]`.

use alloc::vec::Vec;

use crate::math;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::Class;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

pub fn one_hot<T: Real>(class: Class) -> Tensor<T> {
    let mut t = Tensor::zeros([Class::COUNT]);
    t.data_mut()[class.index()] = T::one();
    t
}

/// Loss and its gradient w.r.t. `probs`.
///
/// The gradient is evaluated at the clamped probabilities rather than zeroed
/// outside the clamp range, so a saturated wrong prediction still receives a
/// finite corrective signal.
pub fn bce_loss<T: Real>(probs: &Tensor<T>, label: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    label.expect_shape("bce label", probs.shape())?;
    let ones = label.data().iter().filter(|&&y| y == T::one()).count();
    let zeros = label.data().iter().filter(|&&y| y == T::zero()).count();
    if ones != 1 || ones + zeros != label.len() {
        return Err(Error::NotOneHot(label.data().iter().map(|y| y.f64()).collect()));
    }
    let lo = T::of(CLAMP);
    let hi = T::one() - lo;
    let mut loss = T::zero();
    let grad: Vec<T> = probs
        .data()
        .iter()
        .zip(label.data())
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            let q = T::one() - p;
            loss -= y * math::ln(p) + (T::one() - y) * math::ln(q);
            -y / p + (T::one() - y) / q
        })
        .collect();
    Ok((loss, Tensor::new(probs.shape(), grad)?))
}
