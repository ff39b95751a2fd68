//! Criterion benchmarks for the solvers and the simulator live in `benches/`.
