use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use scatter_core::bench::random_batch;
use scatter_core::scattering::plan_for;
use scatter_core::{
    backward, forward_batch, forward_oracle, BoundaryMode, ColorSpace, FilterBank, ImageGrid,
    Precision, ScatteringConfig, Transform,
};

fn bank(cfg: &ScatteringConfig, n: usize) -> FilterBank {
    let plan = plan_for(n, cfg).unwrap();
    FilterBank::build(plan.padded, cfg.j, cfg.l, cfg.params).unwrap()
}

fn gray(n: usize) -> ImageGrid {
    let img = random_batch(1, n, 1).remove(0);
    ImageGrid::new(n, n, 1, ColorSpace::Gray, img.channel(0).to_vec()).unwrap()
}

fn batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_batch");
    g.sample_size(10);
    for (n, boundary) in [
        (32, BoundaryMode::Periodic),
        (32, BoundaryMode::Reflect),
        (128, BoundaryMode::Periodic),
    ] {
        let count = if n == 32 { 128 } else { 16 };
        let cfg = ScatteringConfig::new(2, 8).with_boundary(boundary);
        let fb = bank(&cfg, n);
        let imgs = random_batch(count, n, 7);
        g.throughput(Throughput::Elements(count as u64));
        g.bench_with_input(
            BenchmarkId::new(format!("{boundary}"), format!("{count}x3x{n}x{n}")),
            &imgs,
            |b, imgs| b.iter(|| forward_batch(black_box(imgs), &fb, &cfg, 1).unwrap()),
        );
    }
    g.finish();
}

fn scales(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_scales");
    let img = gray(64);
    for j in [2, 3, 4] {
        let cfg = ScatteringConfig::new(j, 8).with_boundary(BoundaryMode::Periodic);
        let t = Transform::new(&bank(&cfg, 64), &cfg, 64).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(j), &img, |b, img| {
            b.iter(|| t.forward(black_box(img)).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("fft_vs_oracle_64");
    g.sample_size(10);
    let cfg = ScatteringConfig::new(2, 8)
        .with_boundary(BoundaryMode::Periodic)
        .with_precision(Precision::Double);
    let fb = bank(&cfg, 64);
    let img = gray(64);
    let t = Transform::new(&fb, &cfg, 64).unwrap();
    g.bench_function("fft", |b| b.iter(|| t.forward(black_box(&img)).unwrap()));
    g.bench_function("oracle", |b| {
        b.iter(|| forward_oracle(black_box(&img), &fb, &cfg).unwrap())
    });
    g.finish();
}

fn adjoint(c: &mut Criterion) {
    let cfg = ScatteringConfig::new(2, 8).with_boundary(BoundaryMode::Periodic);
    let t = Transform::new(&bank(&cfg, 64), &cfg, 64).unwrap();
    let img = random_batch(1, 64, 3).remove(0);
    let (s, tape) = t.forward_with_tape(&img).unwrap();
    c.bench_function("backward_64_rgb", |b| {
        b.iter(|| backward(black_box(&tape), &s).unwrap())
    });
}

criterion_group!(benches, batch, scales, oracle, adjoint);
criterion_main!(benches);
