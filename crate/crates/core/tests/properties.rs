mod common;

use common::*;
use ctsr::data::{bicubic_resize, degrade, extract_patches, psnr, ssim, PatchParams, PatchSet};
use ctsr::model::LayerSpec;
use ctsr::tensor::{conv2d_forward, relu_backward, relu_forward};
use ctsr::trim::{importance_scores, lowest_scoring, trim_filters};
use ctsr::{Exec, Kernel, Network, RngState, Tensor4, Widths};
use proptest::prelude::*;

/// Direct six-loop convolution with zero padding, accumulated in f64.
fn naive_conv(x: &Tensor4, k: &Kernel, bias: &[f32], pad: usize) -> Vec<f64> {
    let (n, c, h, w) = x.dims();
    let ks = k.size();
    let (oh, ow) = (h + 2 * pad + 1 - ks, w + 2 * pad + 1 - ks);
    let mut out = Vec::with_capacity(n * k.out_filters() * oh * ow);
    for s in 0..n {
        for o in 0..k.out_filters() {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias[o] as f64;
                    for ci in 0..c {
                        for dy in 0..ks {
                            for dx in 0..ks {
                                let (iy, ix) = ((y + dy) as isize - pad as isize, (xx + dx) as isize - pad as isize);
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x.get(s, ci, iy as usize, ix as usize) as f64 * k.get(o, ci, dy, dx) as f64;
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, u64)> {
    (1usize..=9, 0usize..=4, 1usize..=3, 1usize..=3, 1usize..=2, 0usize..=8, 0usize..=8, any::<u64>()).prop_filter_map(
        "input too small",
        |(k, pad, cin, cout, n, dh, dw, seed)| {
            let pad = pad.min(k - 1);
            let (h, w) = (dh.max(1), dw.max(1));
            (h + 2 * pad >= k && w + 2 * pad >= k).then_some((k, pad, cin, cout, n, h, w, seed))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_naive((k, pad, cin, cout, n, h, w, seed) in conv_case()) {
        let mut rng = RngState::new(seed);
        let x = random_tensor(n, cin, h, w, &mut rng);
        let kernel = random_kernel(cout, cin, k, &mut rng);
        let bias: Vec<f32> = (0..cout).map(|_| rng.uniform() as f32 - 0.5).collect();
        let got = conv2d_forward(&x, &kernel, &bias, pad).unwrap();
        let want = naive_conv(&x, &kernel, &bias, pad);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert!((*g as f64 - w).abs() <= 1e-5 * (1.0 + w.abs()), "{} vs {}", g, w);
        }
    }

    #[test]
    fn conv_gradients_match_differences((k, pad, cin, cout, n, h, w, seed) in conv_case()) {
        let mut rng = RngState::new(seed);
        let x = random_tensor(n, cin, h, w, &mut rng);
        let kernel = random_kernel(cout, cin, k, &mut rng);
        let bias: Vec<f32> = (0..cout).map(|_| rng.uniform() as f32 - 0.5).collect();
        let (oh, ow) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
        let r = random_tensor(n, cout, oh, ow, &mut rng);
        let e = conv_gradient_error(&x, &kernel, &bias, pad, &r);
        prop_assert!(e < 1e-4, "relative error {}", e);
    }

    #[test]
    fn mse_gradient_matches_differences(len in 1usize..40, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let p = random_tensor(1, 1, 1, len, &mut rng);
        let t = random_tensor(1, 1, 1, len, &mut rng);
        prop_assert!(mse_gradient_error(&p, &t) < 1e-4);
    }

    #[test]
    fn relu_gradient_is_a_mask(len in 1usize..64, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let x = random_tensor(1, 1, 1, len, &mut rng);
        let g = random_tensor(1, 1, 1, len, &mut rng);
        let y = relu_forward(&x);
        let back = relu_backward(&x, &g).unwrap();
        for i in 0..len {
            let xi = x.data()[i];
            prop_assert_eq!(y.data()[i], xi.max(0.0));
            prop_assert_eq!(back.data()[i], if xi > 0.0 { g.data()[i] } else { 0.0 });
        }
    }

    #[test]
    fn trimming_equals_masking(depth in prop::sample::select(vec![3usize, 5, 7]), first in 2usize..10, hidden in 2usize..8,
                               seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let net = unit_gain_net(depth, Widths { first, hidden }, &mut rng);
        let layer = rng.below(depth - 1);
        let width = net.layer(layer).spec.out_filters;
        let count = 1 + rng.below(width - 1);
        let drop = rng.choose_distinct(width, count);
        let trimmed = trim_filters(&net, layer, &drop).unwrap();
        let masked = mask_filters(&net, layer, &drop);
        let x = random_tensor(1, 1, 20, 20, &mut rng);
        let (a, b) = (trimmed.forward(&x).unwrap(), masked.forward(&x).unwrap());
        let scale = b.data().iter().fold(1.0f64, |m, v| m.max(v.abs() as f64));
        prop_assert!(max_abs_diff(a.data(), b.data()) <= 1e-6 * scale);
        prop_assert_eq!(trimmed.layer(layer).spec.out_filters, width - count);
        prop_assert_eq!(trimmed.layer(layer + 1).spec.in_channels, width - count);
    }

    #[test]
    fn trimming_saves_the_two_layer_multiplies(depth in prop::sample::select(vec![3usize, 5, 7, 9]), seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let net = Network::with_depth(depth, Widths::STANDARD, &mut rng).unwrap();
        let layer = rng.below(depth - 1);
        let t = trim_filters(&net, layer, &[0]).unwrap();
        prop_assert_eq!(net.multiply_count(40, 40).unwrap(), multiplies(&net, 40, 40));
        prop_assert_eq!(t.multiply_count(40, 40).unwrap(), multiplies(&t, 40, 40));
        prop_assert!(t.param_count() < net.param_count());
    }

    #[test]
    fn lowest_scores_are_dropped(scores in prop::collection::vec(0.0f64..10.0, 1..40), frac in 0.0f64..1.0) {
        let count = (frac * scores.len() as f64) as usize;
        let drop = lowest_scoring(&scores, count);
        prop_assert_eq!(drop.len(), count);
        prop_assert!(drop.windows(2).all(|w| w[0] < w[1]));
        let kept_min = (0..scores.len()).filter(|i| !drop.contains(i)).map(|i| scores[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(drop.iter().all(|&i| scores[i] <= kept_min));
    }

    #[test]
    fn bicubic_preserves_constants(h in 1usize..40, w in 1usize..40, oh in 1usize..80, ow in 1usize..80, v in 0.0f32..1.0) {
        let out = bicubic_resize(&Tensor4::filled(1, 1, h, w, v), oh, ow).unwrap();
        prop_assert_eq!(out.dims(), (1, 1, oh, ow));
        prop_assert!(out.data().iter().all(|x| (x - v).abs() < 1e-5));
    }

    #[test]
    fn degrade_keeps_unit_range(size in 8usize..48, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let img = random_tensor(1, 1, size, size, &mut rng);
        let lr = degrade(&img, 2).unwrap();
        prop_assert_eq!(lr.h(), size - size % 2);
        prop_assert!(lr.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(size in 11usize..24, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let a = random_tensor(1, 1, size, size, &mut rng);
        let b = random_tensor(1, 1, size, size, &mut rng);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        prop_assert_eq!(s, ssim(&b, &a).unwrap());
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn patches_fit_every_depth(h in 34usize..90, w in 34usize..90, seed in any::<u64>()) {
        let mut rng = RngState::new(seed);
        let img = random_tensor(1, 1, h, w, &mut rng);
        let set = extract_patches(&img, 2, &PatchParams::default()).unwrap();
        let (hh, ww) = (h - h % 2, w - w % 2);
        prop_assert_eq!(set.len(), (1 + (hh - 33) / 33) * (1 + (ww - 33) / 33));
        for depth in [3, 5, 7, 19] {
            let net = Network::with_depth(depth, Widths::STANDARD, &mut rng).unwrap();
            prop_assert_eq!(net.output_size(set.lr_size(), set.lr_size()).unwrap(), (set.hr_size(), set.hr_size()));
        }
        let bytes = set.to_bytes();
        prop_assert_eq!(PatchSet::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn model_bytes_round_trip(depth in prop::sample::select(vec![3usize, 5, 9]), seed in any::<u64>()) {
        let net = Network::with_depth(depth, Widths::STANDARD, &mut RngState::new(seed)).unwrap();
        let bytes = net.to_bytes();
        prop_assert_eq!(Network::from_bytes(&bytes).unwrap().to_bytes(), bytes.clone());
        prop_assert_eq!(Network::with_depth(depth, Widths::STANDARD, &mut RngState::new(seed)).unwrap().to_bytes(), bytes);
    }
}

#[test]
fn parallel_and_sequential_gradients_agree() {
    let mut rng = RngState::new(21);
    let net = unit_gain_net(5, Widths::STANDARD, &mut rng);
    let x = random_tensor(6, 1, 33, 33, &mut rng);
    let y = random_tensor(6, 1, 17, 17, &mut rng);
    let (gp, sp) = net.batch_gradients(&x, &y, Exec::Parallel).unwrap();
    let (gs, ss) = net.batch_gradients(&x, &y, Exec::Sequential).unwrap();
    assert_eq!(sp.to_bits(), ss.to_bits());
    assert_eq!(gp.kernels, gs.kernels);
    assert_eq!(gp.biases, gs.biases);
    assert_eq!(net.forward_with(&x, Exec::Parallel).unwrap().data(), net.forward_with(&x, Exec::Sequential).unwrap().data());
}

#[test]
fn importance_orders_by_energy() {
    let mut rng = RngState::new(4);
    let net = unit_gain_net(3, Widths { first: 6, hidden: 4 }, &mut rng);
    let scores = importance_scores(&net, 0).unwrap();
    let energy: Vec<f64> = (0..6).map(|j| net.layer(0).kernel.filter(j).iter().map(|w| (*w as f64).powi(2)).sum()).collect();
    for (s, e) in scores.iter().zip(&energy) {
        assert!((s - e).abs() < 1e-9 * e.max(1.0));
    }
    assert_eq!(LayerSpec::new(3, 32, 32, ctsr::model::Activation::Rectifier).pad, 1);
}
