//! Sequential vs data-parallel execution of the hot paths: per-sample batch
//! gradients, whole-image inference and per-image evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ctsr::data::{evaluate_images, synth};
use ctsr::{Exec, Network, RngState, Tensor4, Widths};

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn batch_gradients(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    let mut rng = RngState::new(1);
    let x = Tensor4::from_vec(16, 1, 33, 33, (0..16 * 33 * 33).map(|_| rng.uniform() as f32).collect()).unwrap();
    let y = Tensor4::from_vec(16, 1, 17, 17, (0..16 * 17 * 17).map(|_| rng.uniform() as f32).collect()).unwrap();
    for depth in [3, 7] {
        let net = Network::with_depth(depth, Widths::STANDARD, &mut rng).unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, depth), &exec, |b, &exec| b.iter(|| net.batch_gradients(&x, &y, exec).unwrap()));
        }
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_4x96x96");
    group.sample_size(10);
    let mut rng = RngState::new(2);
    let net = Network::with_depth(7, Widths::STANDARD, &mut rng).unwrap();
    let x = Tensor4::filled(4, 1, 96, 96, 0.5);
    for (name, exec) in modes() {
        group.bench_function(name, |b| b.iter(|| net.forward_with(&x, exec).unwrap()));
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_6_images");
    group.sample_size(10);
    let net = Network::with_depth(5, Widths::STANDARD, &mut RngState::new(3)).unwrap();
    let images: Vec<(String, Tensor4)> = synth::corpus(6, 96, 96, 4).into_iter().enumerate().map(|(i, t)| (format!("img{i}"), t)).collect();
    for (name, exec) in modes() {
        group.bench_function(name, |b| b.iter(|| evaluate_images(Some(&net), &images, 2, exec)));
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, inference, evaluation);
criterion_main!(benches);
