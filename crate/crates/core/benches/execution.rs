//! Sequential against data-parallel execution for the embarrassingly
//! parallel workloads: simulation replicates, oracle enumeration and the
//! golden-section probes.

use bsgs::design::{preprocess, GroupedDesign};
use bsgs::oracle::exhaustive_bsgs;
use bsgs::selector::{ggsplicing_fit, SelectorConfig};
use bsgs::splicing::{gsplicing_fit, GSplicingConfig};
use bsgs::study::{simulate, Method, MethodConfig};
use bsgs::synth::{generate, Structure, SyntheticSpec};
use bsgs::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn spec(n: usize, j: usize) -> SyntheticSpec {
    SyntheticSpec {
        n,
        num_groups: j,
        group_size: 3,
        rho: 0.3,
        structure: Structure::Exponential,
        sigma1: 1.0,
        s_star: 4,
        seed: 17,
        true_support: None,
        fixed_coefficient: None,
    }
}

fn prepared(spec: &SyntheticSpec) -> GroupedDesign {
    let truth = generate(spec).unwrap();
    preprocess(
        &truth.design_raw,
        &truth.response,
        spec.structure_of_groups(),
    )
    .unwrap()
}

fn replicates(c: &mut Criterion) {
    let spec = spec(150, 60);
    let method = MethodConfig::new(Method::Sgs).with_t_max(8);
    let mut g = c.benchmark_group("simulate_8_replicates");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(simulate(&spec, &method, 8, exec)))
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let d = prepared(&spec(120, 16));
    let mut g = c.benchmark_group("oracle_enumeration");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(name, "J16_T4"), &d, |b, d| {
            b.iter(|| black_box(exhaustive_bsgs(d, 4, exec).unwrap()))
        });
    }
    g.finish();
}

fn golden(c: &mut Criterion) {
    let d = prepared(&spec(300, 200));
    let cfg = SelectorConfig::new(&d).with_t_max(20);
    let mut g = c.benchmark_group("golden_section");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| black_box(ggsplicing_fit(&d, &cfg, exec).unwrap()))
        });
    }
    g.finish();
}

fn single_fit(c: &mut Criterion) {
    let d = prepared(&spec(300, 200));
    let cfg = GSplicingConfig::new(&d, 4).unwrap();
    c.bench_function("gsplicing_fit_J200_T4", |b| {
        b.iter(|| black_box(gsplicing_fit(&d, &cfg).unwrap()))
    });
}

criterion_group!(benches, replicates, oracle, golden, single_fit);
criterion_main!(benches);
