//! Holds the acceptance suite; see `tests/acceptance.rs` in the core crate.
