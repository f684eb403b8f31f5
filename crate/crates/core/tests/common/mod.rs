//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use ctsr::model::Layer;
use ctsr::tensor::{conv2d_backward, conv2d_forward, mse_loss};
use ctsr::{Kernel, Network, RngState, Tensor4, Widths};

pub fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut RngState) -> Tensor4 {
    let data = (0..n * c * h * w).map(|_| rng.uniform() as f32 * 2.0 - 1.0).collect();
    Tensor4::from_vec(n, c, h, w, data).unwrap()
}

pub fn random_kernel(out: usize, inp: usize, k: usize, rng: &mut RngState) -> Kernel {
    let data = (0..out * inp * k * k).map(|_| rng.uniform() as f32 * 2.0 - 1.0).collect();
    Kernel::from_vec(out, inp, k, data).unwrap()
}

/// A family member with unit-gain weights and small random biases, so
/// activations stay O(1) at any depth.
pub fn unit_gain_net(depth: usize, widths: Widths, rng: &mut RngState) -> Network {
    let net = Network::with_depth(depth, widths, rng).unwrap();
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            let sigma = (2.0 / l.kernel.filter_len() as f64).sqrt();
            l.kernel.data_mut().iter_mut().for_each(|w| *w = rng.normal(sigma));
            l.bias.iter_mut().for_each(|b| *b = rng.normal(0.1));
            l
        })
        .collect();
    Network::from_layers(layers, net.scale()).unwrap()
}

/// Zeroes the weights and biases of the given filters of `layer`, leaving
/// every shape unchanged.
pub fn mask_filters(net: &Network, layer: usize, filters: &[usize]) -> Network {
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let l = &mut layers[layer];
    let len = l.kernel.filter_len();
    for &j in filters {
        l.kernel.data_mut()[j * len..(j + 1) * len].fill(0.0);
        l.bias[j] = 0.0;
    }
    Network::from_layers(layers, net.scale()).unwrap()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

/// ||a - b|| / ||b||, with the denominator floored at `floor`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Power-of-two step, so `x +- STEP` changes few mantissa bits; the
/// difference quotient divides by the realized step anyway.
const STEP: f32 = 1.0 / 64.0;

fn central<F: FnMut(f32) -> f64>(x: f32, mut f: F) -> f64 {
    let (up, down) = (x + STEP, x - STEP);
    (f(up) - f(down)) / (up as f64 - down as f64)
}

/// Worst relative error of the analytic conv gradients (input, kernel,
/// bias) against central differences of `L = sum(r * conv(x))`. `L` is
/// linear in each argument, so the difference quotient is exact up to
/// rounding.
pub fn conv_gradient_error(x: &Tensor4, kernel: &Kernel, bias: &[f32], pad: usize, r: &Tensor4) -> f64 {
    let loss = |x: &Tensor4, k: &Kernel, b: &[f32]| -> f64 {
        let y = conv2d_forward(x, k, b, pad).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| *a as f64 * *b as f64).sum()
    };
    let g = conv2d_backward(x, kernel, r, pad).unwrap();

    let mut fd = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        fd.push(central(x.data()[i], |v| {
            let mut p = x.clone();
            p.data_mut()[i] = v;
            loss(&p, kernel, bias)
        }));
    }
    let an: Vec<f64> = g.grad_input.data().iter().map(|&v| v as f64).collect();
    let e_input = rel_err(&fd, &an, 1e-6);

    let mut fd = Vec::with_capacity(kernel.len());
    for i in 0..kernel.len() {
        fd.push(central(kernel.data()[i], |v| {
            let mut k = kernel.clone();
            k.data_mut()[i] = v;
            loss(x, &k, bias)
        }));
    }
    let an: Vec<f64> = g.grad_kernel.data().iter().map(|&v| v as f64).collect();
    let e_kernel = rel_err(&fd, &an, 1e-6);

    let mut fd = Vec::with_capacity(bias.len());
    for i in 0..bias.len() {
        fd.push(central(bias[i], |v| {
            let mut b = bias.to_vec();
            b[i] = v;
            loss(x, kernel, &b)
        }));
    }
    let an: Vec<f64> = g.grad_bias.iter().map(|&v| v as f64).collect();
    let e_bias = rel_err(&fd, &an, 1e-6);
    e_input.max(e_kernel).max(e_bias)
}

/// Relative error of the MSE gradient against central differences. The
/// loss is quadratic, so again the quotient is exact up to rounding.
pub fn mse_gradient_error(pred: &Tensor4, target: &Tensor4) -> f64 {
    let (_, g) = mse_loss(pred, target).unwrap();
    let mut fd = Vec::with_capacity(pred.len());
    for i in 0..pred.len() {
        fd.push(central(pred.data()[i], |v| {
            let mut p = pred.clone();
            p.data_mut()[i] = v;
            mse_loss(&p, target).unwrap().0
        }));
    }
    let an: Vec<f64> = g.data().iter().map(|&v| v as f64).collect();
    rel_err(&fd, &an, 1e-12)
}

/// Independent multiply count: `n_{i-1} * k_i^2 * n_i * h_i * w_i` summed
/// over layers, with `h_i, w_i` each layer's output size.
pub fn multiplies(net: &Network, h: usize, w: usize) -> u64 {
    let (mut h, mut w) = (h as i64, w as i64);
    let mut total = 0u64;
    for l in net.layers() {
        let s = &l.spec;
        let k = s.kernel_size as i64;
        h = h + 2 * s.pad as i64 - k + 1;
        w = w + 2 * s.pad as i64 - k + 1;
        total += (s.in_channels as i64 * k * k * s.out_filters as i64 * h * w) as u64;
    }
    total
}
