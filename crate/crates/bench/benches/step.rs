use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parglm_bench::{allen_cahn, methods, ORDERS};
use parglm_core::Integrator;

fn step_cost(c: &mut Criterion) {
    let problem = allen_cahn(24);
    let sys = problem.system().unwrap();
    let mut group = c.benchmark_group("allen_cahn_step");
    for order in ORDERS {
        for (name, spec) in methods(order) {
            let t = spec.build().unwrap();
            for workers in [1, order] {
                let cfg = problem.config(20).unwrap().with_workers(workers);
                let integ = Integrator::new(&t, sys.as_ref(), cfg).unwrap();
                let x = integ.start().unwrap();
                let id = BenchmarkId::new(format!("{name}{order}"), format!("w{workers}"));
                group.bench_with_input(id, &x, |b, x| b.iter(|| integ.step(x).unwrap()));
            }
        }
    }
    group.finish();
}

criterion_group!(benches, step_cost);
criterion_main!(benches);
