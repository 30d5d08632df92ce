//! Dense linear algebra, PCA, a finite-difference oracle and a small
//! reverse-mode engine for layered networks.

pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod nn;
pub mod pca;
pub mod stats;
mod rng;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use matrix::{matmul, Matrix};
pub use pca::{effective_dimensionality, pca_fit, PcaModel};
pub use rng::Rng;
