//! Criterion benchmarks for the block store, index build and job execution.
//! Run with `cargo bench -p adaptidx-bench`.
