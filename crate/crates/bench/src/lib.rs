//! Benchmarks for the engine; see `benches/`.
