//! Central finite-difference checks (f64, step 1e-5) of every layer and of the
//! end-to-end loss. Each check panics on the first mismatch.

use parasnet_core::layers;
use parasnet_core::loss::{bce_loss, one_hot};
use parasnet_core::model::{ForwardPass, INPUT_SHAPE};
use parasnet_core::rng::{self, StreamRng};
use parasnet_core::{Class, Mode, ParasNet, Tensor};
use rand::Rng;

const STEP: f64 = 1e-5;
pub const INSTANCES: u64 = 20;
/// Every check here is kink-free: ReLU inputs are kept off zero, pooling
/// windows never tie, and end-to-end probes that cross a kink are redrawn.
const SMOOTH_TOL: f64 = 1e-6;
/// Denominator floor so gradients that are zero up to round-off compare absolutely.
const FLOOR: f64 = 1e-7;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

pub fn random(shape: &[usize], r: &mut StreamRng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` against central differences of `f` for every entry of `x`.
fn check_all(x: &Tensor<f64>, analytic: &Tensor<f64>, tol: f64, what: &str, f: impl Fn(&Tensor<f64>) -> f64) {
    assert_eq!(x.shape(), analytic.shape(), "{what}: gradient shape");
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
        let e = rel_err(analytic.data()[i], numeric);
        assert!(e < tol, "{what}[{i}]: analytic {} numeric {numeric} rel {e:e}", analytic.data()[i]);
    }
}

pub fn conv2d_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[1]);
        let (h, w) = (r.random_range(3..8), r.random_range(3..8));
        let (c, f) = (r.random_range(1..4), [1, 2, 3, 8][r.random_range(0..4)]);
        let x = random(&[h, w, c], &mut r);
        let k = random(&[3, 3, c, f], &mut r);
        let b = random(&[f], &mut r);
        let probe = random(&[h - 2, w - 2, f], &mut r);
        let g = layers::conv2d_backward(&x, &k, &probe).unwrap();
        check_all(&x, &g.d_input, SMOOTH_TOL, "conv d_input", |x| {
            dot(&layers::conv2d_valid(x, &k, &b).unwrap(), &probe)
        });
        check_all(&k, &g.d_params[0], SMOOTH_TOL, "conv d_kernel", |k| {
            dot(&layers::conv2d_valid(&x, k, &b).unwrap(), &probe)
        });
        check_all(&b, &g.d_params[1], SMOOTH_TOL, "conv d_bias", |b| {
            dot(&layers::conv2d_valid(&x, &k, b).unwrap(), &probe)
        });
    }
}

pub fn relu_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[2]);
        // Keep inputs at least 1e-3 from the kink.
        let mut x = random(&[4, 5, 3], &mut r);
        x.data_mut().iter_mut().for_each(|v| {
            if v.abs() < 1e-3 {
                *v = 1e-3_f64.copysign(*v);
            }
        });
        let probe = random(&[4, 5, 3], &mut r);
        let g = layers::relu_backward(&x, &probe).unwrap();
        check_all(&x, &g, SMOOTH_TOL, "relu", |x| dot(&layers::relu(x), &probe));
    }
}

pub fn maxpool_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[3]);
        let (h, w, c) = (r.random_range(2..9), r.random_range(2..9), r.random_range(1..4));
        let x = random(&[h, w, c], &mut r);
        let pooled = layers::maxpool_2x2(&x).unwrap();
        let probe = random(pooled.output.shape(), &mut r);
        let g = layers::maxpool_backward(x.shape(), &pooled, &probe).unwrap();
        check_all(&x, &g, SMOOTH_TOL, "maxpool", |x| dot(&layers::maxpool_2x2(x).unwrap().output, &probe));
    }
}

pub fn dense_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[5]);
        let (n_in, n_out) = (r.random_range(1..12), r.random_range(1..6));
        let x = random(&[n_in], &mut r);
        let wt = random(&[n_in, n_out], &mut r);
        let b = random(&[n_out], &mut r);
        let probe = random(&[n_out], &mut r);
        let g = layers::dense_backward(&x, &wt, &probe).unwrap();
        check_all(&x, &g.d_input, SMOOTH_TOL, "dense d_input", |x| {
            dot(&layers::dense(x, &wt, &b).unwrap(), &probe)
        });
        check_all(&wt, &g.d_params[0], SMOOTH_TOL, "dense d_weights", |wt| {
            dot(&layers::dense(&x, wt, &b).unwrap(), &probe)
        });
        check_all(&b, &g.d_params[1], SMOOTH_TOL, "dense d_bias", |b| {
            dot(&layers::dense(&x, &wt, b).unwrap(), &probe)
        });
    }
}

pub fn dropout_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[6]);
        let x = random(&[16], &mut r);
        let probe = random(&[16], &mut r);
        let run = |x: &Tensor<f64>| layers::dropout(x, 0.5, Mode::Train, &mut rng::stream(seed, &[60])).unwrap();
        let g = layers::dropout_backward(&run(&x), &probe).unwrap();
        check_all(&x, &g, SMOOTH_TOL, "dropout", |x| dot(&run(x).output, &probe));
    }
}

pub fn softmax_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[7]);
        let z = random(&[3], &mut r).map(|v| 4.0 * v);
        let probe = random(&[3], &mut r);
        let p = layers::softmax(&z).unwrap();
        let g = layers::softmax_backward(&p, &probe).unwrap();
        check_all(&z, &g, SMOOTH_TOL, "softmax", |z| dot(&layers::softmax(z).unwrap(), &probe));
    }
}

pub fn bce_gradients_match_finite_differences() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[8]);
        let p = Tensor::new([3], (0..3).map(|_| r.random_range(0.05..0.95)).collect()).unwrap();
        let y = one_hot::<f64>(Class::ALL[seed as usize % 3]);
        let (_, g) = bce_loss(&p, &y).unwrap();
        check_all(&p, &g, SMOOTH_TOL, "bce", |p| bce_loss(p, &y).unwrap().0);
    }
}

/// Training-mode pass with the dropout mask fixed by reseeding the same stream.
fn e2e_pass(model: &ParasNet<f64>, image: &Tensor<f64>, seed: u64) -> ForwardPass<f64> {
    model.forward_pass(image, Mode::Train, &mut rng::stream(seed, &[90])).unwrap()
}

fn e2e_loss(pass: &ForwardPass<f64>, label: Class) -> f64 {
    bce_loss(&pass.output.probs, &one_hot(label)).unwrap().0
}

/// Probes per instance, and redraws allowed when a probe's finite-difference
/// segment crosses a ReLU or max-pool kink (where the difference quotient is
/// not an estimate of the derivative).
const E2E_PROBES: usize = 3;
const E2E_REDRAWS: usize = 40;

pub fn end_to_end_loss_gradient_matches_finite_differences() {
    let (mut worst, mut redrawn, mut checked): (f64, usize, usize) = (0.0, 0, 0);
    let mut covered = [false; 14];
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, &[9]);
        let model = ParasNet::<f64>::build(8, seed).unwrap();
        let n: usize = INPUT_SHAPE.iter().product();
        let image = Tensor::new(INPUT_SHAPE.to_vec(), (0..n).map(|_| r.random::<f64>()).collect()).unwrap();
        let label = Class::ALL[seed as usize % 3];
        let pass = e2e_pass(&model, &image, seed);
        let (_, d_probs) = bce_loss(&pass.output.probs, &one_hot(label)).unwrap();
        let grads = model.backward(&pass, &d_probs).unwrap();
        let mut done = 0;
        for attempt in 0..E2E_PROBES + E2E_REDRAWS {
            if done == E2E_PROBES {
                break;
            }
            // Rotate through every parameter tensor over the run.
            let t = (seed as usize * E2E_PROBES + attempt) % grads.len();
            let i = r.random_range(0..grads[t].len());
            let mut plus = model.clone();
            plus.params_mut()[t].data_mut()[i] += STEP;
            let mut minus = model.clone();
            minus.params_mut()[t].data_mut()[i] -= STEP;
            let (pp, pm) = (e2e_pass(&plus, &image, seed), e2e_pass(&minus, &image, seed));
            if !(pp.same_kinks(&pass) && pm.same_kinks(&pass)) {
                redrawn += 1;
                continue;
            }
            let numeric = (e2e_loss(&pp, label) - e2e_loss(&pm, label)) / (2.0 * STEP);
            let analytic = grads[t].data()[i];
            let e = rel_err(analytic, numeric);
            worst = worst.max(e);
            assert!(e < SMOOTH_TOL, "tensor {t} index {i}: analytic {analytic} numeric {numeric} rel {e:e}");
            covered[t] = true;
            done += 1;
            checked += 1;
        }
        assert_eq!(done, E2E_PROBES, "instance {seed}: too many kink crossings");
    }
    eprintln!("end-to-end: {checked} probes, worst relative error {worst:e}, {redrawn} kink-crossing draws replaced");
    let uncovered: Vec<usize> = (0..14).filter(|&t| !covered[t]).collect();
    eprintln!("tensors without a kink-free probe: {uncovered:?}");
    assert!(uncovered.len() <= 2, "too few tensors covered: missing {uncovered:?}");
}
