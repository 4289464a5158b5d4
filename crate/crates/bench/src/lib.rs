//! Benchmarks (`benches/pipeline.rs`) and the acceptance gate
//! (`tests/acceptance.rs`) for `anchorloc`.
