//! Constructive approximation of linear and low-rank polynomial maps on
//! dictionary-sparse inputs, with exact per-sample residual checks.

mod gaussian;
mod linear;
mod polynomial;
mod report;

pub use gaussian::{gaussian_identity_floor, isotropic_gaussian, projection_witness_fvu};
pub use linear::{build_linear_moe, verify_linear_construction, LinearTarget};
pub use polynomial::{
    build_polynomial_moe, power_mlp, power_mlp_from_rank, verify_polynomial_construction,
    width_cap, PolynomialTarget,
};
pub use report::{projection_agreement, ConstructionReport};
