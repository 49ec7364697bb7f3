use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parglm_bench::{methods, ORDERS};
use parglm_core::stability::{constrained_region, GridSpec, StabilityPencil};
use parglm_core::{StiffValue, C64};

fn spectral_radius(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_radius");
    let w = C64::new(-0.7, 0.4);
    let z = StiffValue::Finite(C64::new(-30.0, 5.0));
    for order in ORDERS {
        for (name, spec) in methods(order) {
            let t = spec.build().unwrap();
            let pencil = StabilityPencil::new(&t).unwrap();
            group.bench_function(BenchmarkId::new(name, order), |b| {
                b.iter(|| pencil.spectral_radius(black_box(w), black_box(z)).unwrap())
            });
        }
    }
    group.finish();
}

fn region(c: &mut Criterion) {
    let mut group = c.benchmark_group("constrained_region_41x41");
    group.sample_size(10);
    let grid = GridSpec::default().with_resolution(41, 41);
    for (name, spec) in methods(4) {
        let t = spec.build().unwrap();
        group.bench_function(name, |b| {
            b.iter(|| constrained_region(&t, std::f64::consts::FRAC_PI_2, grid, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spectral_radius, region);
criterion_main!(benches);
