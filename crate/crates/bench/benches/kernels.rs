use std::hint::black_box;

use compositeflow::dynamics::{sde1_step, FlowConfig};
use compositeflow::solvers::{lp_sadmm_step, validate, IterateState};
use compositeflow::{Algorithm, NoiseSpec, SolverParams};
use compositeflow_bench::mcp_instance;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn prox(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox");
    for m in [64usize, 512] {
        let problem = mcp_instance(m, m, 20);
        let w = DVector::from_fn(m, |i, _| (i as f64 * 0.37).sin() * 2.0);
        group.bench_with_input(BenchmarkId::new("mcp", m), &w, |b, w| {
            b.iter(|| problem.h().prox(0.1, black_box(w)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mcp_envelope", m), &w, |b, w| {
            b.iter(|| problem.envelope().prox(0.1, black_box(w)).unwrap())
        });
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let problem = mcp_instance(64, 48, 100);
    let params = validate(&SolverParams::new(10.0, 0.05, 1), Algorithm::LpSadmm, problem.operator(), problem.h()).unwrap();
    let noise = NoiseSpec::gaussian(0.5, 1);
    let state = IterateState::initial(DVector::from_element(64, 0.5), problem.operator(), false).unwrap();
    c.bench_function("lp_sadmm_step/64x48", |b| {
        b.iter(|| lp_sadmm_step(black_box(&state), &problem, &params, &noise).unwrap())
    });

    let lambda = 1.1 * problem.operator().gram_norm();
    let cfg = FlowConfig::new(lambda, lambda / problem.smoothness(), 1.0);
    let x = DVector::from_element(64, 0.5);
    c.bench_function("sde1_step/64x48", |b| b.iter(|| sde1_step(black_box(&x), &problem, &cfg, 7).unwrap()));
}

criterion_group!(benches, prox, steps);
criterion_main!(benches);
