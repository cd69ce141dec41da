use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use semrel::data::{encode_pairs_with, EmbeddingTable, Relation, WordPair};
use semrel::exec::Execution;
use semrel::multitask::MultiTaskModel;
use semrel::nn::Matrix;
use semrel::seed::rng_from_seed;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let a = random_matrix(2048, 600, 1);
    let w = random_matrix(50, 600, 2);
    let d = random_matrix(2048, 50, 3);
    let mut group = c.benchmark_group("matmul");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("nt", name), &exec, |b, &e| b.iter(|| black_box(a.matmul_nt(&w, e))));
        group.bench_with_input(BenchmarkId::new("tn", name), &exec, |b, &e| b.iter(|| black_box(d.matmul_tn(&a, e))));
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let model = MultiTaskModel::new(600, &[50, 50], &[2, 2], 7, Default::default()).unwrap();
    let x = random_matrix(8192, 600, 4);
    let mut group = c.benchmark_group("predict");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(model.predict_with(0, &x, e).unwrap()))
        });
    }
    group.finish();
}

fn encode(c: &mut Criterion) {
    let mut rng = rng_from_seed(5);
    let mut table = EmbeddingTable::new(300);
    let words: Vec<String> = (0..2000).map(|i| format!("w{i}")).collect();
    for w in &words {
        table.insert(w.clone(), (0..300).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap();
    }
    let pairs: Vec<WordPair> = (0..20_000)
        .map(|i| WordPair::new(words[i % 2000].clone(), words[(i * 7 + 1) % 2000].clone(), Relation::Random))
        .filter_map(Result::ok)
        .collect();
    let mut group = c.benchmark_group("encode_pairs");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(encode_pairs_with(&table, &pairs, e).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, predict, encode);
criterion_main!(benches);
