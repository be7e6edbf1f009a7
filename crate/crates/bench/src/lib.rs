//! Criterion benchmarks for the kodaira engine live in `benches/`.
