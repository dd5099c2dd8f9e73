//! Dense complex Hermitian linear algebra.

mod eig;
mod matrix;
mod project;

pub use eig::{eig_herm, eig_herm_warm, Eigen, MAX_SWEEPS};
pub use matrix::{hermitian_basis, ComplexMatrix, HermMatrix, MatrixJson, C64, HERMITIAN_TOL, ONE, ZERO};
pub use project::{
    affine_project, op_norm, orthonormalize, orthonormalize_with, psd_part, psd_project, AffineSpace, AFFINE_INCONSISTENCY_TOL,
    GRAM_SCHMIDT_DROP,
};
