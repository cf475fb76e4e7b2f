//! MLP, router and mixture-of-experts layers with manual backpropagation.

mod activation;
mod adam;
pub mod backward;
mod gated;
mod mlp;
mod model;
mod moe;
mod router;

pub use activation::Activation;
pub use adam::{adam_step, cosine_lr, AdamHyper, AdamState};
pub use backward::{backward, backward_rows, batch_loss, Batch};
pub use gated::GatedMlp;
pub use mlp::{MlpCache, MlpParams};
pub use model::{Model, Parameters};
pub use moe::{MoeOutput, MoeParams};
pub use router::{top_k, top_k_margin, GateResult, Router, RouterForm};
