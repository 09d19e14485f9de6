//! Criterion benchmarks for the top-K bandit algorithms live in `benches/`.
