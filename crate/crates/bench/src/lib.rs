//! Benchmarks live in `benches/`; run them with `cargo bench -p emerge-bench`.
