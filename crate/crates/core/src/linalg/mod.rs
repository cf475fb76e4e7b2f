//! Dense linear and multilinear algebra.

pub mod matrix;
pub mod tensor;

pub use matrix::{axpy, dot, norm, orthonormal_basis, sub, DenseMatrix};
pub use tensor::{
    interpolation_coefficients, last_symmetric_decompose, symmetric_rank_factor,
    symmetric_tail_terms, symmetrized_decomposition, DenseTensor, LastSymmetricDecomposition,
    RankDecomposition,
};
