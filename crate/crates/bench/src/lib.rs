//! Criterion benchmarks for `eqcd-core`; see `benches/`.
