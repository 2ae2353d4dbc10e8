use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rsvd::completion::{em_complete_with, CompletionConfig, InitFill};
use rsvd::datasets::{binarize, mask_out};
use rsvd::evaluation::{evaluate_scores, EvalOptions};
use rsvd::synthetic::{hide_entries, implicit_ratings, low_rank_matrix, uniform_matrix, ImplicitSpec};
use rsvd::Execution;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn products(c: &mut Criterion) {
    let a = uniform_matrix(600, 400, -1.0, 1.0, 1);
    let b = uniform_matrix(400, 300, -1.0, 1.0, 2);
    let mut group = c.benchmark_group("matmul_600x400x300");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| black_box(a.matmul_with(&b, exec).unwrap()))
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let o = binarize(&implicit_ratings(&ImplicitSpec::movielens_like(1)).unwrap()).unwrap();
    let masked = mask_out(&o, 100, 90, 0).unwrap();
    let m = masked.train.m_items();
    let score = |u: usize| Ok((0..m).map(|i| ((u * 31 + i * 17) % 97) as f64).collect());
    let mut group = c.benchmark_group("evaluate_movielens_shape");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| black_box(evaluate_scores(&masked, score, EvalOptions::default(), exec).unwrap()))
        });
    }
    group.finish();
}

fn completion(c: &mut Criterion) {
    let truth = low_rank_matrix(320, 240, 4, 3);
    let inst = hide_entries(&truth, 0.5, 5, 4).unwrap();
    let mut cfg = CompletionConfig::new(4, 1.0);
    cfg.em_max_iter = 5;
    cfg.init_fill = InitFill::ColumnMean;
    let mut group = c.benchmark_group("em_5_steps_320x240");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| black_box(em_complete_with(&inst.observed, &cfg, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, products, evaluation, completion);
criterion_main!(benches);
