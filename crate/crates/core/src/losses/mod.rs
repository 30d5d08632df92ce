//! Every training objective, each returning its value together with the
//! analytic gradient with respect to its latent or prediction argument, plus
//! the target-similarity graphs the Laplacian and contrastive objectives use.

mod center;
mod classification;
mod contrastive;
mod graph;
mod laplacian;
mod pca_cosine;
mod regression;

pub use center::{center_loss, update_centers, ClassCenters};
pub use classification::{cross_entropy_loss, cross_entropy_probs, hinge_loss, softmax_rows};
pub use contrastive::{cosine_sim_scaled, info_nce_loss, r_nce_loss};
pub use graph::{
    build_dense_graph, build_knn_graph, sigma_auto, similarity_kernel, Edge, GraphForm,
    SimilarityGraph, SymMode,
};
pub use laplacian::{laplacian_loss_dense, laplacian_loss_sparse, laplacian_loss_trace};
pub use pca_cosine::pca_cosine_loss;
pub use regression::{huber_loss, mae_loss, ols_loss};

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;

/// Loss value and its gradient with respect to the loss argument.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Matrix,
}

/// Largest batch for which the dense Laplacian is accepted.
pub const DENSE_LAPLACIAN_MAX_BATCH: usize = 1024;

/// The four objective weights and per-loss hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_recon: f64,
    pub lambda_repr: f64,
    pub lambda_pred: f64,
    pub lambda_reg: f64,
    /// Kernel bandwidth.
    pub sigma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Huber knee.
    pub delta: f64,
    /// Neighbors per node for the sparsified Laplacian.
    pub k: usize,
    pub sym_mode: SymMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_recon: 0.0,
            lambda_repr: 1.0,
            lambda_pred: 1.0,
            lambda_reg: 0.1,
            sigma: 1.0,
            tau: 0.5,
            delta: 1.0,
            k: 10,
            sym_mode: SymMode::Union,
        }
    }
}

impl LossWeights {
    /// Every violated constraint, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("lambda_recon", self.lambda_recon),
            ("lambda_repr", self.lambda_repr),
            ("lambda_pred", self.lambda_pred),
            ("lambda_reg", self.lambda_reg),
        ] {
            if !(val >= 0.0 && val.is_finite()) {
                v.push(format!("{name} must be a finite non-negative number (got {val})"));
            }
        }
        if !(self.lambda_repr > 0.0 || self.lambda_pred > 0.0 || self.lambda_recon > 0.0) {
            v.push("at least one of lambda_repr, lambda_pred, lambda_recon must be positive".into());
        }
        for (name, val) in [("sigma", self.sigma), ("tau", self.tau), ("delta", self.delta)] {
            if !(val > 0.0 && val.is_finite()) {
                v.push(format!("{name} must be positive (got {val})"));
            }
        }
        if self.k == 0 {
            v.push("k must be at least 1".into());
        }
        v
    }
}
