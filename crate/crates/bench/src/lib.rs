//! Shared helpers for the criterion benchmarks.

use authornorm_core::dataset::synthetic::{self, CorpusConfig};
use authornorm_core::NameEntity;

/// A small deterministic entity set for benchmark inputs.
pub fn bench_entities(n: usize) -> Vec<NameEntity> {
    synthetic::generate(&CorpusConfig { n_entities: n, seed: 0x2026, ..Default::default() })
        .entities
}
