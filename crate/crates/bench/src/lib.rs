//! Criterion benchmarks for the control path; see `benches/control.rs`.
