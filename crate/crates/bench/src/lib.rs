//! Criterion benchmarks for the floquet-core kernels; see `benches/`.
