//! Criterion benchmarks for the model pipeline live in `benches/`.
