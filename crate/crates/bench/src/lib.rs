//! Criterion benchmarks for `helidock-core`; see `benches/closed_loop.rs`.
