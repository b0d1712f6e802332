use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use vestibular::memory::{analytic_curve, memory_curve, stochastic_input, MemoryMethod};
use vestibular::readout::{augment, ridge_fit};
use vestibular::reservoir::{drive_open_loop, ReservoirState};
use vestibular::rng_from_seed;
use vestibular_bench::{lorenz_series, reservoir};

fn open_loop(c: &mut Criterion) {
    let input = lorenz_series(1000).unwrap();
    let mut group = c.benchmark_group("drive_open_loop_1000");
    for &n in &[10usize, 30, 60] {
        for coupled in [true, false] {
            let cfg = reservoir(n, 3, coupled, 1).unwrap();
            let label = if coupled { "coupled" } else { "uncoupled" };
            group.bench_with_input(BenchmarkId::new(label, n), &cfg, |b, cfg| {
                b.iter(|| {
                    let mut s = ReservoirState::zeros(cfg.n());
                    black_box(drive_open_loop(cfg, &input, &mut s).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn readout(c: &mut Criterion) {
    let input = lorenz_series(5001).unwrap();
    let cfg = reservoir(30, 3, true, 2).unwrap();
    let states = drive_open_loop(&cfg, &input.slice(0, 5000), &mut ReservoirState::zeros(30)).unwrap();
    let r = augment(&states);
    let y = input.values().rows(1, 5000).transpose();
    c.bench_function("ridge_fit_n30_l5000", |b| b.iter(|| black_box(ridge_fit(&r, &y, 1e-4).unwrap())));
}

fn memory(c: &mut Criterion) {
    let eigs: Vec<f64> = (0..20).map(|i| -0.9 + 0.08 * i as f64).collect();
    c.bench_function("analytic_curve_n20", |b| b.iter(|| black_box(analytic_curve(&eigs, 500, 100).unwrap())));
    let u = stochastic_input(700, &mut rng_from_seed(3)).unwrap();
    let cfg = reservoir(20, 1, true, 4).unwrap();
    let states = augment(&drive_open_loop(&cfg, &u, &mut ReservoirState::zeros(20)).unwrap());
    let uv = u.channel(0);
    c.bench_function("refined_curve_n20", |b| {
        b.iter(|| black_box(memory_curve(&states, &uv, 100, MemoryMethod::Refined, 200, 500, 1e-8).unwrap()))
    });
}

criterion_group!(benches, open_loop, readout, memory);
criterion_main!(benches);
