//! Criterion benchmarks for `pseudospec`; see `benches/`.
