//! Benchmarks for the hot kernels: the compiled right-hand side, a full RK4
//! step, and batched thermodynamic post-processing with the data-parallel
//! path compared against the sequential fallback.
//!
//! Run with `cargo bench -p mixbath`; add `--no-default-features` to build
//! without the parallel feature entirely.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mixbath::dynamics::{assemble_generator, rk4_step, GeneratorBundle};
use mixbath::exec;
use mixbath::model::{initial_joint_state, SimulationConfig};
use mixbath::qmath::{c, QOperator};
use mixbath::runner::preset;
use mixbath::thermo::ThermoEngine;

fn setup(name: &str) -> (SimulationConfig, GeneratorBundle, QOperator) {
    let cfg = preset(name).expect("known preset");
    let bundle = assemble_generator(&cfg).expect("generator");
    let rho = initial_joint_state(&cfg, &bundle.layout).expect("initial state");
    (cfg, bundle, rho)
}

/// A correlated, strictly positive state so post-processing hits the generic
/// code paths (no floored logs, nonzero currents).
fn evolved_state(bundle: &GeneratorBundle, rho0: &QOperator) -> QOperator {
    let mut rho = rho0.clone();
    for _ in 0..50 {
        rho = rk4_step(bundle, &rho, 2e-4).expect("step");
    }
    rho
}

fn bench_rhs_apply(crit: &mut Criterion) {
    let mut group = crit.benchmark_group("rhs_apply");
    for name in ["all_markov", "fig2a", "fig2b", "fig2c"] {
        let (_, bundle, rho) = setup(name);
        let d = bundle.joint_dim();
        let input = rho.data().as_slice().to_vec();
        let mut out = vec![c(0.0, 0.0); d * d];
        group.bench_with_input(BenchmarkId::new(name, d), &d, |b, _| {
            b.iter(|| bundle.rhs_into(&input, &mut out))
        });
    }
    group.finish();
}

fn bench_rk4_step(crit: &mut Criterion) {
    let mut group = crit.benchmark_group("rk4_step");
    for name in ["fig2a", "fig2c"] {
        let (_, bundle, rho) = setup(name);
        let d = bundle.joint_dim();
        group.bench_with_input(BenchmarkId::new(name, d), &d, |b, _| {
            b.iter(|| rk4_step(&bundle, &rho, 2e-4).expect("step"))
        });
    }
    group.finish();
}

fn bench_record_batch(crit: &mut Criterion) {
    let mut group = crit.benchmark_group("record_batch");
    group.sample_size(20);
    let batch = 16usize;
    for name in ["fig2a", "fig2b"] {
        let (_, bundle, rho0) = setup(name);
        let engine = ThermoEngine::new(&bundle).expect("engine");
        let state = evolved_state(&bundle, &rho0);
        let samples: Vec<(f64, QOperator, f64)> =
            (0..batch).map(|i| (i as f64, state.clone(), 0.0)).collect();
        for (label, parallel) in [("parallel", true), ("sequential", false)] {
            let d = bundle.joint_dim();
            group.bench_function(BenchmarkId::new(format!("{name}_{label}"), d), |b| {
                b.iter(|| {
                    exec::set_parallel(parallel);
                    let recs = exec::map_slice(&samples, |(t, st, dr)| {
                        engine.record_at(*t, st, *dr).expect("record")
                    });
                    exec::set_parallel(true);
                    recs
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_rhs_apply, bench_rk4_step, bench_record_batch);
criterion_main!(benches);
