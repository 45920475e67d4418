//! Same workloads on a one-thread pool and on the default pool.

use criterion::{criterion_group, criterion_main, Criterion};
use cylscat::channels::assemble_pair;
use cylscat::classical_flow::{boundary_grid, domain_scan, FlowOptions};
use cylscat::phasespace::{center_lattice, fio_check};
use cylscat::{End, ModelSpec, PotentialSpec, Profile};
use rayon::ThreadPoolBuilder;

fn bulge(h: f64) -> ModelSpec {
    ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), h).unwrap()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("seq", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("par", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn bench_assemble(c: &mut Criterion) {
    let model = bulge(0.01);
    let mut g = c.benchmark_group("assemble_h0.01");
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| assemble_pair(&model).unwrap())));
    }
    g.finish();
}

fn bench_domain(c: &mut Criterion) {
    let model = bulge(0.1);
    let grid = boundary_grid(End::Left, 16, 21, 0.95);
    let opts = FlowOptions::default();
    let mut g = c.benchmark_group("domain_scan_336");
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| domain_scan(&model, &grid, &opts).unwrap())));
    }
    g.finish();
}

fn bench_fio(c: &mut Criterion) {
    let model = bulge(0.02);
    let (_, su) = assemble_pair(&model).unwrap();
    let centers = center_lattice(End::Left, 6, &[-0.4, -0.15, 0.15, 0.4]);
    let mut g = c.benchmark_group("fio_check_24");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(name, |b| b.iter(|| pool.install(|| fio_check(&centers, &model, &su).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, bench_assemble, bench_domain, bench_fio);
criterion_main!(benches);
