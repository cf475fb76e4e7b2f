//! Holds the acceptance gate in `tests/acceptance.rs`; there is no library
//! code. Run it with `cargo test -p moe-lab-gate`.
