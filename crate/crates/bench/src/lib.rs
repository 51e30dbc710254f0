//! Criterion benchmarks for the clusterkv crate live under `benches/`.
