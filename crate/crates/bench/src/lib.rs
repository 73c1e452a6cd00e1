//! Criterion benchmarks for sectsum; see `benches/`.
