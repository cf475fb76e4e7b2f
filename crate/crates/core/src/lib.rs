//! Mixture-of-experts layers, dictionary-sparse constructions and
//! MLP-to-MoE distillation.

pub mod dictionary;
pub mod distillation;
pub mod error;
pub mod io;
pub mod layers;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
