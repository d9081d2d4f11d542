//! Adam with bias correction and multiplicative per-step learning-rate decay.

use alloc::vec::Vec;

use num_traits::Float;

use crate::math;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step size at step `t` is `learning_rate · decay^t`; `1.0` disables decay.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 0.9999,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon >= 0.0
            && self.decay > 0.0
            && self.decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(alloc::format!("invalid Adam config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments mirroring `params`.
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Result<Self> {
        config.validate()?;
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        Ok(Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        })
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            g.expect_shape("adam gradient", p.shape())?;
            m.expect_shape("adam moment", p.shape())?;
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let corr1 = 1.0 - math::powi(c.beta1, t);
        let corr2 = 1.0 - math::powi(c.beta2, t);
        let lr = c.learning_rate * math::powi(c.decay, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((theta, &grad), (mi, vi)) in iter {
                let grad = grad.f64();
                let m_new = c.beta1 * mi.f64() + (1.0 - c.beta1) * grad;
                let v_new = c.beta2 * vi.f64() + (1.0 - c.beta2) * grad * grad;
                *mi = T::of(m_new);
                *vi = T::of(v_new);
                let m_hat = m_new / corr1;
                let v_hat = v_new / corr2;
                let denom = v_hat.sqrt() + c.epsilon;
                if denom > 0.0 {
                    *theta = T::of(theta.f64() - lr * m_hat / denom);
                }
            }
        }
        Ok(())
    }
}
