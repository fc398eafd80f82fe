//! Criterion benchmarks for the iqnet engine live in `benches/`.
