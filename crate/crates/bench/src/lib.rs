//! Criterion benchmarks for `spi-core` live under `benches/`.
