//! The 8-layer ParasNet: five conv→ReLU→pool blocks, a 128-unit dense layer
//! with dropout, a 3-way dense layer and softmax.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{self, Dropped, Pooled, KERNEL};
use crate::rng;
use crate::tensor::{Real, Tensor};
use crate::{Class, Mode};

pub const INPUT_HEIGHT: usize = 244;
pub const INPUT_WIDTH: usize = 324;
pub const INPUT_SHAPE: [usize; 3] = [INPUT_HEIGHT, INPUT_WIDTH, 1];
pub const CONV_LAYERS: usize = 5;
pub const HIDDEN_UNITS: usize = 128;
pub const DROPOUT_RATE: f64 = 0.5;
/// Spatial extent after the last pooling stage (5 × 8).
pub const FINAL_SPATIAL: usize = 40;
/// Number of parameter tensors (kernel + bias per layer).
pub const PARAM_TENSORS: usize = 2 * (CONV_LAYERS + 2);

pub const LAYER_NAMES: [&str; 7] = ["conv1", "conv2", "conv3", "conv4", "conv5", "dense1", "dense2"];

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> Result<f64> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "glorot fans must be positive, got ({fan_in}, {fan_out})"
        )));
    }
    Ok(Float::sqrt(6.0 / (fan_in + fan_out) as f64))
}

/// Closed-form parameter count for filter count `f`.
pub fn expected_param_count(f: usize) -> usize {
    10 * f + 4 * (9 * f * f + f) + (FINAL_SPATIAL * f * HIDDEN_UNITS + HIDDEN_UNITS) + (HIDDEN_UNITS * 3 + 3)
}

/// Shapes of every parameter tensor, in storage order.
pub fn param_shapes(filters: usize) -> Vec<Vec<usize>> {
    let mut shapes = Vec::with_capacity(PARAM_TENSORS);
    for layer in 0..CONV_LAYERS {
        let c_in = if layer == 0 { 1 } else { filters };
        shapes.push(vec![KERNEL, KERNEL, c_in, filters]);
        shapes.push(vec![filters]);
    }
    shapes.push(vec![FINAL_SPATIAL * filters, HIDDEN_UNITS]);
    shapes.push(vec![HIDDEN_UNITS]);
    shapes.push(vec![HIDDEN_UNITS, Class::COUNT]);
    shapes.push(vec![Class::COUNT]);
    shapes
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParasNet<T> {
    filters: usize,
    params: Vec<Tensor<T>>,
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Output<T> {
    pub probs: Tensor<T>,
    /// Dense1 activation after ReLU, before dropout.
    pub hidden: Tensor<T>,
}

/// A forward pass with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub output: Output<T>,
    input: Tensor<T>,
    conv_relu: Vec<Tensor<T>>,
    pools: Vec<Pooled<T>>,
    dense1_pre: Tensor<T>,
    dropped: Dropped<T>,
}

impl<T: Real> ForwardPass<T> {
    /// Output shape of every layer in order: conv1, pool1, …, conv5,
    /// pool5, dense1, dense2.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut trace = Vec::new();
        for (conv, pool) in self.conv_relu.iter().zip(&self.pools) {
            trace.push(conv.shape().to_vec());
            trace.push(pool.output.shape().to_vec());
        }
        trace.push(self.dense1_pre.shape().to_vec());
        trace.push(self.output.probs.shape().to_vec());
        trace
    }

    /// True when both passes took the same branch at every ReLU and max-pool,
    /// i.e. the loss is smooth on the segment between them.
    pub fn same_kinks(&self, other: &Self) -> bool {
        let signs = |a: &Tensor<T>, b: &Tensor<T>| {
            a.data().iter().zip(b.data()).all(|(x, y)| (*x > T::zero()) == (*y > T::zero()))
        };
        self.conv_relu.iter().zip(&other.conv_relu).all(|(a, b)| signs(a, b))
            && self.pools.iter().zip(&other.pools).all(|(a, b)| a.argmax == b.argmax)
            && signs(&self.dense1_pre, &other.dense1_pre)
    }
}

impl<T: Real> ParasNet<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn build(filters: usize, seed: u64) -> Result<Self> {
        if filters == 0 {
            return Err(Error::InvalidArgument("filter count must be at least 1".into()));
        }
        let mut rng = rng::stream(seed, &[0x1417]);
        let params = param_shapes(filters)
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Ok(Tensor::zeros(shape));
                }
                let (fan_in, fan_out) = if shape.len() == 4 {
                    let field = shape[0] * shape[1];
                    (field * shape[2], field * shape[3])
                } else {
                    (shape[0], shape[1])
                };
                let bound = glorot_bound(fan_in, fan_out)?;
                let n = shape.iter().product();
                Tensor::new(shape, glorot_samples(bound, n, &mut rng).map(T::of).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { filters, params })
    }

    /// Wraps existing parameter tensors, checking their shapes.
    pub fn from_params(filters: usize, params: Vec<Tensor<T>>) -> Result<Self> {
        if filters == 0 {
            return Err(Error::InvalidArgument("filter count must be at least 1".into()));
        }
        let shapes = param_shapes(filters);
        if params.len() != shapes.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter().zip(&shapes) {
            p.expect_shape("ParasNet parameter", s)?;
        }
        Ok(Self { filters, params })
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameter count per named layer (weights + bias).
    pub fn layer_param_counts(&self) -> Vec<(&'static str, usize)> {
        LAYER_NAMES
            .iter()
            .zip(self.params.chunks_exact(2))
            .map(|(&name, pair)| (name, pair[0].len() + pair[1].len()))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParasNet<U> {
        ParasNet {
            filters: self.filters,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn forward<R: Rng + ?Sized>(&self, image: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Output<T>> {
        Ok(self.forward_pass(image, mode, rng)?.output)
    }

    /// Inference-mode forward pass (dropout off).
    pub fn infer(&self, image: &Tensor<T>) -> Result<Output<T>> {
        self.forward(image, Mode::Infer, &mut rng::stream(0, &[]))
    }

    pub fn forward_pass<R: Rng + ?Sized>(
        &self,
        image: &Tensor<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass<T>> {
        image.expect_shape("ParasNet input", &INPUT_SHAPE)?;
        let mut conv_relu = Vec::with_capacity(CONV_LAYERS);
        let mut pools: Vec<Pooled<T>> = Vec::with_capacity(CONV_LAYERS);
        for layer in 0..CONV_LAYERS {
            let x = pools.last().map_or(image, |p| &p.output);
            let mut a = layers::conv2d_valid(x, &self.params[2 * layer], &self.params[2 * layer + 1])?;
            for v in a.data_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
            pools.push(layers::maxpool_2x2(&a)?);
            conv_relu.push(a);
        }
        let last = &pools[CONV_LAYERS - 1].output;
        let flat = Tensor::vector(last.data().to_vec());
        let dense1_pre = layers::dense(&flat, &self.params[10], &self.params[11])?;
        let hidden = layers::relu(&dense1_pre);
        let dropped = layers::dropout(&hidden, DROPOUT_RATE, mode, rng)?;
        let logits = layers::dense(&dropped.output, &self.params[12], &self.params[13])?;
        let probs = layers::softmax(&logits)?;
        Ok(ForwardPass {
            output: Output { probs, hidden },
            input: image.clone(),
            conv_relu,
            pools,
            dense1_pre,
            dropped,
        })
    }

    /// Parameter gradients given `d_probs`, the loss gradient w.r.t. the
    /// softmax output. Returned in parameter storage order.
    pub fn backward(&self, pass: &ForwardPass<T>, d_probs: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut grads: Vec<Tensor<T>> = vec![Tensor::zeros([0]); PARAM_TENSORS];
        let d_logits = layers::softmax_backward(&pass.output.probs, d_probs)?;
        let g = layers::dense_backward(&pass.dropped.output, &self.params[12], &d_logits)?;
        let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("dense has two parameters");
        grads[12] = dw;
        grads[13] = db;
        let d_hidden = layers::dropout_backward(&pass.dropped, &g.d_input)?;
        let d_pre = layers::relu_backward(&pass.dense1_pre, &d_hidden)?;
        let last = &pass.pools[CONV_LAYERS - 1].output;
        let flat = Tensor::vector(last.data().to_vec());
        let g = layers::dense_backward(&flat, &self.params[10], &d_pre)?;
        let [dw, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("dense has two parameters");
        grads[10] = dw;
        grads[11] = db;
        let mut upstream = g.d_input.reshape(last.shape())?;
        for layer in (0..CONV_LAYERS).rev() {
            let act = &pass.conv_relu[layer];
            let d_act = layers::maxpool_backward(act.shape(), &pass.pools[layer], &upstream)?;
            let d_conv = layers::relu_backward(act, &d_act)?;
            let x = if layer == 0 {
                &pass.input
            } else {
                &pass.pools[layer - 1].output
            };
            let g = layers::conv2d_backward_impl(x, &self.params[2 * layer], &d_conv, layer > 0)?;
            let [dk, db]: [Tensor<T>; 2] = g.d_params.try_into().expect("conv has two parameters");
            grads[2 * layer] = dk;
            grads[2 * layer + 1] = db;
            upstream = g.d_input;
        }
        Ok(grads)
    }
}

fn glorot_samples<R: Rng + ?Sized>(bound: f64, n: usize, rng: &mut R) -> impl Iterator<Item = f64> + '_ {
    let dist = Uniform::new(-bound, bound).expect("bound is positive");
    // Uniform::new is half-open; reject the lower endpoint so samples lie strictly inside.
    (0..n).map(move |_| loop {
        let v = dist.sample(rng);
        if v > -bound {
            break v;
        }
    })
}

/// Draws `n` Glorot-uniform samples at the given bound.
pub fn sample_glorot(bound: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[0x61]);
    glorot_samples(bound, n, &mut rng).collect()
}

/// Human-readable per-layer description (name, output shape, params).
pub fn describe(filters: usize) -> Vec<(String, Vec<usize>, usize)> {
    let f = filters;
    let mut rows = Vec::new();
    let (mut h, mut w) = (INPUT_HEIGHT, INPUT_WIDTH);
    for layer in 0..CONV_LAYERS {
        let c_in = if layer == 0 { 1 } else { f };
        h -= 2;
        w -= 2;
        rows.push((alloc::format!("CONV{}", layer + 1), vec![h, w, f], 9 * c_in * f + f));
        h /= 2;
        w /= 2;
        rows.push((alloc::format!("POOLING{}", layer + 1), vec![h, w, f], 0));
    }
    rows.push(("DENSE1".into(), vec![HIDDEN_UNITS], h * w * f * HIDDEN_UNITS + HIDDEN_UNITS));
    rows.push(("DROPOUT".into(), vec![HIDDEN_UNITS], 0));
    rows.push(("DENSE2".into(), vec![3], HIDDEN_UNITS * 3 + 3));
    rows.push(("SOFTMAX".into(), vec![3], 0));
    rows
}
