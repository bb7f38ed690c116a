//! Empty library crate; the benchmarks under `benches/` are the content.
