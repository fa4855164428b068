use authornorm_core::ann::{exact_knn, RpForestIndex, DEFAULT_LEAF_CAPACITY, DEFAULT_N_TREES};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const DIM: usize = 256;
const N: usize = 5_000;

fn random_vectors(n: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            (format!("item-{i}"), v)
        })
        .collect()
}

fn bench_ann(c: &mut Criterion) {
    let items = random_vectors(N, 1);
    let queries = random_vectors(32, 2);
    let index =
        RpForestIndex::build(items.clone(), DEFAULT_N_TREES, DEFAULT_LEAF_CAPACITY, 3).unwrap();
    let k = 10;
    let budget = 32 * k * DEFAULT_N_TREES;

    c.bench_function("rp-forest/query-k10", |b| {
        b.iter(|| {
            for (_, q) in &queries {
                black_box(index.query(q, k, budget).unwrap());
            }
        })
    });

    c.bench_function("exact-knn/k10", |b| {
        b.iter(|| {
            for (_, q) in &queries {
                black_box(exact_knn(&items, q, k));
            }
        })
    });
}

criterion_group!(benches, bench_ann);
criterion_main!(benches);
