//! Subcommand implementations.

pub mod data;
pub mod train;
pub mod verify;
