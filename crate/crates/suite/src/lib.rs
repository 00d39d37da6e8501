//! Acceptance checks for `smoothcert`.
//!
//! The crate has no library code; `tests/acceptance.rs` runs every
//! acceptance criterion against independent oracles and prints one
//! `PASS`/`FAIL` line per criterion.
