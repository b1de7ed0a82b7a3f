//! Criterion benchmarks for the numerical kernels. Run with `cargo bench -p cascade-bench`.
