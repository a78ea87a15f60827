use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use silnikov_core::cascade::scan_with;
use silnikov_core::integrator::TimeDirection;
use silnikov_core::manifold::{
    sample_aclass_with, sweep_manifold_with, AClassOptions, ManifoldOptions,
};
use silnikov_core::model::equilibria;
use silnikov_core::orbit::OrbitSearchOptions;
use silnikov_core::par::Execution;
use silnikov_core::SystemParams;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn scan(c: &mut Criterion) {
    let search = OrbitSearchOptions::default();
    let mut g = c.benchmark_group("scan");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "0.46..0.38"), |bch| {
            bch.iter(|| scan_with(black_box(0.46), 0.38, 0.01, &search, exec).unwrap())
        });
    }
    g.finish();
}

fn manifold(c: &mut Criterion) {
    let p = SystemParams::with_b(0.4).unwrap();
    let [p0, ..] = equilibria(&p);
    let opts = ManifoldOptions {
        seed_count: 32,
        horizon: 30.0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("manifold");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "p0 forward"), |bch| {
            bch.iter(|| sweep_manifold_with(&p0, TimeDirection::Forward, &p, &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn aclass(c: &mut Criterion) {
    let p = SystemParams::with_b(0.35).unwrap();
    let opts = AClassOptions {
        transient_cut: 200.0,
        total_time: 400.0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("aclass");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "b=0.35"), |bch| {
            bch.iter(|| sample_aclass_with(&p, &opts, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scan, manifold, aclass);
criterion_main!(benches);
