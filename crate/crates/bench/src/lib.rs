//! Benchmark-only crate; the measurements live in `benches/core_ops.rs`.
//! Run them with `cargo bench -p georate-bench`.
