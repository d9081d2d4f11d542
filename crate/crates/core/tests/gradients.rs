//! Finite-difference gradient checks and a naive reference for the convolution.

#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{random, INSTANCES};
use parasnet_core::layers::{self, Pooled};
use parasnet_core::rng;
use parasnet_core::Tensor;
use rand::Rng;

#[test]
fn conv2d_gradients_match_finite_differences() {
    gradcheck::conv2d_gradients_match_finite_differences();
}

#[test]
fn relu_gradients_match_finite_differences() {
    gradcheck::relu_gradients_match_finite_differences();
}

#[test]
fn maxpool_gradients_match_finite_differences() {
    gradcheck::maxpool_gradients_match_finite_differences();
}

#[test]
fn dense_gradients_match_finite_differences() {
    gradcheck::dense_gradients_match_finite_differences();
}

#[test]
fn dropout_gradients_match_finite_differences() {
    gradcheck::dropout_gradients_match_finite_differences();
}

#[test]
fn softmax_gradients_match_finite_differences() {
    gradcheck::softmax_gradients_match_finite_differences();
}

#[test]
fn bce_gradients_match_finite_differences() {
    gradcheck::bce_gradients_match_finite_differences();
}

#[test]
fn end_to_end_loss_gradient_matches_finite_differences() {
    gradcheck::end_to_end_loss_gradient_matches_finite_differences();
}

#[test]
fn maxpool_backward_conserves_gradient_mass() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[4]);
        let x = random(&[7, 9, 2], &mut r);
        let pooled: Pooled<f64> = layers::maxpool_2x2(&x).unwrap();
        let probe = random(pooled.output.shape(), &mut r);
        let g = layers::maxpool_backward(x.shape(), &pooled, &probe).unwrap();
        assert!((g.sum() - probe.sum()).abs() < 1e-12);
        // Odd trailing row and column receive nothing.
        for j in 0..9 {
            assert_eq!(g.data()[(6 * 9 + j) * 2], 0.0);
        }
    }
}

/// Quadruple-loop reference with the same accumulation order as the kernel.
fn naive_conv(x: &Tensor<f32>, k: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let f = k.shape()[3];
    let mut out = vec![0.0f32; (h - 2) * (w - 2) * f];
    for i in 0..h - 2 {
        for j in 0..w - 2 {
            for o in 0..f {
                let mut acc = b.data()[o];
                for ky in 0..3 {
                    for kx in 0..3 {
                        for ci in 0..c {
                            acc += x.data()[((i + ky) * w + j + kx) * c + ci] * k.data()[((ky * 3 + kx) * c + ci) * f + o];
                        }
                    }
                }
                out[((i * (w - 2)) + j) * f + o] = acc;
            }
        }
    }
    Tensor::new([h - 2, w - 2, f], out).unwrap()
}

#[test]
fn conv_matches_naive_reference_bitwise() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[10]);
        let c = r.random_range(1..5);
        let f = [1, 2, 3, 4, 8, 16][seed as usize % 6];
        let (h, w) = (r.random_range(3..20), r.random_range(3..20));
        let x = random(&[h, w, c], &mut r).cast::<f32>();
        let k = random(&[3, 3, c, f], &mut r).cast::<f32>();
        let b = random(&[f], &mut r).cast::<f32>();
        let fast = layers::conv2d_valid(&x, &k, &b).unwrap();
        let slow = naive_conv(&x, &k, &b);
        let same = fast.data().iter().zip(slow.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "seed {seed}: conv differs from reference");
    }
}
