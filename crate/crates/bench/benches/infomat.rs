use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use crossover_core::covmodels::markov_case;
use crossover_core::efficiency::relative_difference;
use crossover_core::fixtures;
use crossover_core::infomat::{info_markov, Method, Representation, TraceEvaluator};
use crossover_core::matlib::Tolerance;
use crossover_core::search::{enumerate_binary, DEFAULT_CAP};

fn info_paths(c: &mut Criterion) {
    let tol = Tolerance::default();
    let s = markov_case(7, 0.5, 1.0, 1.0, 0.5).unwrap();
    let d = fixtures::dstar_t4();
    let mut g = c.benchmark_group("info_markov_t4_n12");
    g.bench_function("brute", |b| {
        b.iter(|| info_markov(black_box(&d), &s, Method::Brute, Representation::Z43, tol).unwrap())
    });
    g.bench_function("closed", |b| {
        b.iter(|| info_markov(black_box(&d), &s, Method::Closed, Representation::Z43, tol).unwrap())
    });
    let ev = TraceEvaluator::markov(&s, 4, 12, 4, tol).unwrap();
    g.bench_function("evaluator", |b| b.iter(|| ev.trace(black_box(&d)).unwrap()));
    g.finish();
}

fn sweep_cell(c: &mut Criterion) {
    let tol = Tolerance::default();
    let s = markov_case(3, 0.4, 1.0, 1.0, -0.6).unwrap();
    let d = fixtures::dstar_t3();
    c.bench_function("rd_cell_t3", |b| b.iter(|| relative_difference(black_box(&d), &s, tol).unwrap()));
}

fn enumeration(c: &mut Criterion) {
    let tol = Tolerance::default();
    let s = markov_case(7, 0.5, 1.0, 1.0, 0.5).unwrap();
    let ev = TraceEvaluator::markov(&s, 3, 6, 3, tol).unwrap();
    let mut g = c.benchmark_group("exhaustive_t3_n6");
    g.sample_size(10);
    g.bench_function("serial_traces", |b| {
        b.iter(|| enumerate_binary(3, 6, DEFAULT_CAP).unwrap().map(|d| ev.trace(&d).unwrap()).fold(0.0, f64::max))
    });
    g.finish();
}

criterion_group!(benches, info_paths, sweep_cell, enumeration);
criterion_main!(benches);
