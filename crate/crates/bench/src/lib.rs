//! Criterion benchmarks for rydkick live in `benches/`; run them with
//! `cargo bench -p rydkick-bench`.
