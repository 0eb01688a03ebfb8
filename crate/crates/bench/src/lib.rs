//! Benchmarks for the sampling, eigendecomposition and overlap kernels; see `benches/`.
