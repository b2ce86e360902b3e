use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use macf_core::rng::CounterRng;
use macf_core::scheme::{uniform_times, RunOptions};
use macf_core::semigroup::{resolvent_solve, FrozenOperator};
use macf_core::{Mobility, ModeTable, Scheme, SchemeConfig, SpectralField};

fn field(dim: usize, n: usize) -> SpectralField {
    let rng = CounterRng::new(1, 0);
    SpectralField::random(dim, n, &rng, 0, 1.0, 0.5).unwrap()
}

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    for (dim, n) in [(1, 1024), (2, 128), (3, 32)] {
        let u = field(dim, n);
        let x = u.from_fourier();
        g.bench_with_input(BenchmarkId::new("forward", format!("d{dim}n{n}")), &x, |b, x| {
            b.iter(|| SpectralField::to_fourier(black_box(x), dim, n).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dealiased_product", format!("d{dim}n{n}")), &u, |b, u| {
            b.iter(|| black_box(u).product(u).unwrap())
        });
    }
    g.finish();
}

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("wiener_increment");
    for (dim, n) in [(1, 128), (2, 32)] {
        let cfg = SchemeConfig {
            dim,
            grid: n,
            ..SchemeConfig::default()
        };
        let path = cfg.noise_path(0, 0).unwrap();
        let table = ModeTable::new(dim, n).unwrap();
        g.bench_function(format!("d{dim}n{n}_8steps"), |b| {
            b.iter(|| path.wiener_increment(&table, 8, 16).unwrap())
        });
    }
    g.finish();
}

fn scheme(c: &mut Criterion) {
    let mut g = c.benchmark_group("scheme");
    for (dim, n) in [(1, 128), (2, 64)] {
        let cfg = SchemeConfig {
            dim,
            grid: n,
            ..SchemeConfig::default()
        };
        let scheme = Scheme::new(cfg.clone()).unwrap();
        let u0 = field(dim, n);
        let state = scheme.initial_state(&u0).unwrap();
        let path = cfg.noise_path(0, 0).unwrap();
        let dw = path.wiener_increment(scheme.mode_table(), 0, 1).unwrap();
        g.bench_function(format!("inner_step_d{dim}n{n}"), |b| {
            b.iter_batched_ref(
                || state.clone(),
                |s| scheme.inner_step(s, &dw).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    let cfg = SchemeConfig::default();
    let scheme = Scheme::new(cfg.clone()).unwrap();
    let u0 = SpectralField::from_cosines(1, cfg.grid, &[(&[1], 0.6), (&[3], 0.2)]).unwrap();
    let path = cfg.noise_path(0, 0).unwrap();
    let times = uniform_times(cfg.horizon, 32);
    g.sample_size(10);
    g.bench_function("run_default_d1", |b| {
        b.iter(|| scheme.run(&u0, &path, &times, RunOptions::default()).unwrap())
    });
    g.finish();
}

fn semigroup(c: &mut Criterion) {
    let n = 128;
    let v = SpectralField::from_cosines(1, n, &[(&[1], 1.0), (&[3], 0.3)]).unwrap();
    let op = FrozenOperator::new(&v, 0.0, &Mobility::default_mobility()).unwrap();
    let f = field(1, n);
    c.bench_function("resolvent_solve_d1n128", |b| {
        b.iter(|| resolvent_solve(&op, 1.0, 2.0, black_box(&f)).unwrap())
    });
}

criterion_group!(benches, transforms, noise, scheme, semigroup);
criterion_main!(benches);
