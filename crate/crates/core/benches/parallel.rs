//! Parallel-vs-sequential comparison of the data-parallel kernels.
//!
//! With the default `parallel` feature the public entry points run on rayon
//! and the `*_seq` twins run plain iterators, so each group shows the
//! speedup directly. Built with `--no-default-features` both sides collapse
//! to the sequential path:
//!
//!   cargo bench -p metastab-core
//!   cargo bench -p metastab-core --no-default-features

use criterion::{criterion_group, criterion_main, Criterion};
use metastab_core::chain::{self, ScopedFlows};
use metastab_core::convergence::DensePowers;
use metastab_core::{exec, sim, zoo, SubsetMask};

/// Exhaustive bottleneck scan over every subset of a 16-state scope.
fn bench_subset_scan(c: &mut Criterion) {
    let g = zoo::make_curie_weiss(4).unwrap();
    let p = chain::build_chain(&g, 1.5).unwrap();
    let scope = SubsetMask::full(16);
    let flows = ScopedFlows::new(&p, &scope, 22).unwrap();
    let total = flows.patterns() as usize;
    let score = |pattern: usize| -> Option<(f64, f64, usize)> {
        let (b, mass) = flows.eval(pattern as u64)?;
        if mass > 0.5 {
            return None;
        }
        Some((b, mass, pattern))
    };
    let mut group = c.benchmark_group("subset_scan_2^16");
    group.bench_function("dispatch", |b| {
        b.iter(|| exec::argmin_indexed(total, score))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::argmin_indexed_seq(total, score))
    });
    group.finish();
}

/// Distribution evolution over the Curie-Weiss chain (1024 states).
fn bench_distribution_steps(c: &mut Criterion) {
    let g = zoo::make_curie_weiss(10).unwrap();
    let p = chain::build_chain(&g, 0.4).unwrap();
    let mu0 = p.pi().values().to_vec();
    let mut group = c.benchmark_group("distribution_steps_cw10");
    group.bench_function("dispatch", |b| {
        b.iter(|| {
            let mut mu = mu0.clone();
            for _ in 0..20 {
                mu = p.step_distribution(&mu);
            }
            mu
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let mut mu = mu0.clone();
            for _ in 0..20 {
                mu = p.step_distribution_seq(&mu);
            }
            mu
        })
    });
    group.finish();
}

/// Worst-start total variation from cached powers (per-start parallel map).
fn bench_row_evolution(c: &mut Criterion) {
    let g = zoo::make_pure_coordination(8).unwrap();
    let p = chain::build_chain(&g, 2.0).unwrap();
    let starts: Vec<usize> = (0..p.size()).collect();
    let pi = p.pi().clone();
    let mut group = c.benchmark_group("row_evolution_256");
    group.bench_function("dispatch", |b| {
        b.iter(|| {
            let mut dp = DensePowers::new(&p).unwrap();
            metastab_core::convergence::max_tv_to(&mut dp, &starts, 64, &pi).unwrap()
        })
    });
    group.finish();
}

/// Trajectory batches: the public batch entry point against a plain loop
/// over the identical per-stream simulations.
fn bench_trajectories(c: &mut Criterion) {
    let g = zoo::make_curie_weiss(8).unwrap();
    let tracked = vec![SubsetMask::singleton(256, 0)];
    let mut group = c.benchmark_group("trajectories_256x2000");
    group.sample_size(10);
    group.bench_function("dispatch", |b| {
        b.iter(|| sim::simulate_batch(&g, 0.4, 128, 2000, 9, 256, &tracked, false).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            (0..256u64)
                .map(|k| sim::simulate(&g, 0.4, 128, 2000, 9, k, &tracked, false).unwrap())
                .collect::<Vec<_>>()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_subset_scan,
    bench_distribution_steps,
    bench_row_evolution,
    bench_trajectories
);
criterion_main!(benches);
