use serde::{Deserialize, Serialize};

use super::model::EncoderModel;
use super::spec::{EncoderSpec, Head};
use crate::data::Targets;
use crate::error::{dim_err, Result, VeilError};
use crate::losses::{
    build_dense_graph, build_knn_graph, center_loss, cross_entropy_loss, hinge_loss, huber_loss, info_nce_loss,
    laplacian_loss_dense, laplacian_loss_sparse, mae_loss, ols_loss, pca_cosine_loss, r_nce_loss, LossGrad,
    LossWeights, DENSE_LAPLACIAN_MAX_BATCH,
};
use crate::numeric::nn::OptimizerKind;
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprLoss {
    Center,
    LaplacianDense,
    LaplacianKnn,
    InfoNce,
    RNce,
}

impl ReprLoss {
    fn needs_labels(self) -> bool {
        matches!(self, ReprLoss::Center | ReprLoss::InfoNce)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredLoss {
    CrossEntropy,
    Hinge,
    Ols,
    Mae,
    Huber,
}

impl PredLoss {
    fn is_classification(self) -> bool {
        matches!(self, PredLoss::CrossEntropy | PredLoss::Hinge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub repr_loss: ReprLoss,
    pub pred_loss: PredLoss,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Pick the kernel bandwidth from the training targets instead of
    /// `weights.sigma`.
    pub sigma_auto: bool,
    /// Damping of the per-batch class-center update.
    pub center_alpha: f64,
    pub collapse_threshold: f64,
    /// Run the regression diagnostics on the validation set every epoch.
    pub diagnostics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            repr_loss: ReprLoss::LaplacianKnn,
            pred_loss: PredLoss::Huber,
            batch_size: 128,
            epochs: 20,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdaptiveMoments,
            seed: 0,
            sigma_auto: false,
            center_alpha: 0.5,
            collapse_threshold: 1e-6,
            diagnostics: true,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, including mismatches with `spec`.
    pub fn violations(&self, spec: Option<&EncoderSpec>) -> Vec<String> {
        let mut v = self.weights.violations();
        if self.batch_size < 2 {
            v.push(format!("batch_size must be at least 2 (got {})", self.batch_size));
        }
        if self.repr_loss == ReprLoss::LaplacianDense && self.batch_size > DENSE_LAPLACIAN_MAX_BATCH {
            v.push(format!(
                "dense Laplacian is limited to batches of {DENSE_LAPLACIAN_MAX_BATCH}; use laplacian_knn for batch_size {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            v.push("epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate must be positive (got {})", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.center_alpha) {
            v.push(format!("center_alpha must lie in [0, 1] (got {})", self.center_alpha));
        }
        if !(self.collapse_threshold >= 0.0) {
            v.push("collapse_threshold must be non-negative".into());
        }
        if let Some(spec) = spec {
            v.extend(spec.violations());
            let classifier = matches!(spec.head, Head::Classifier { .. });
            if self.pred_loss.is_classification() != classifier {
                v.push(format!("pred_loss {:?} does not match the {:?} head", self.pred_loss, spec.head));
            }
            if self.repr_loss.needs_labels() && !classifier {
                v.push(format!("repr_loss {:?} needs class labels", self.repr_loss));
            }
        }
        v
    }

    pub fn validate(&self, spec: &EncoderSpec) -> Result<()> {
        let v = self.violations(Some(spec));
        if v.is_empty() {
            Ok(())
        } else {
            Err(VeilError::Config(v))
        }
    }
}

/// One mini-batch with its regularizer targets (top-2 principal scores).
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub targets: Targets,
    pub x_pca: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub recon: f64,
    pub repr: f64,
    pub pred: f64,
    pub reg: f64,
}

impl Components {
    /// `Σ λ·L` over the components with a non-zero weight.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        [
            (w.lambda_recon, self.recon),
            (w.lambda_repr, self.repr),
            (w.lambda_pred, self.pred),
            (w.lambda_reg, self.reg),
        ]
        .iter()
        .filter(|(l, _)| *l != 0.0)
        .map(|(l, v)| l * v)
        .sum()
    }
}

#[derive(Debug, Clone)]
pub struct CompositeLoss {
    pub total: f64,
    pub components: Components,
    /// Gradient per parameter, in [`EncoderModel::params`] order.
    pub grads: Vec<Matrix>,
    pub forward: super::model::ForwardPass,
}

/// A weighted component's error aborts; an unweighted one is only logged
/// and reported as NaN.
fn component(name: &'static str, lambda: f64, r: Result<LossGrad>) -> Result<LossGrad> {
    match r {
        Ok(v) => Ok(v),
        Err(e) if lambda == 0.0 => {
            log::debug!("{name} loss (weight 0) not evaluated: {e}");
            Ok(LossGrad {
                value: f64::NAN,
                grad: Matrix::zeros(0, 0),
            })
        }
        Err(e) => Err(VeilError::Component {
            component: name,
            source: Box::new(e),
        }),
    }
}

fn repr_loss(model: &EncoderModel, psi: &Matrix, targets: &Targets, cfg: &TrainConfig) -> Result<LossGrad> {
    let w = &cfg.weights;
    match cfg.repr_loss {
        ReprLoss::Center => {
            let labels = targets
                .labels()
                .ok_or_else(|| VeilError::InvalidArgument("center loss needs class labels".into()))?;
            let centers = model
                .centers
                .as_ref()
                .ok_or_else(|| VeilError::InvalidArgument("class centers are not initialized".into()))?;
            center_loss(psi, labels, centers)
        }
        ReprLoss::InfoNce => {
            let labels = targets
                .labels()
                .ok_or_else(|| VeilError::InvalidArgument("InfoNCE needs class labels".into()))?;
            info_nce_loss(psi, labels, w.tau)
        }
        ReprLoss::LaplacianDense => {
            let g = build_dense_graph(&targets.as_matrix(), w.sigma)?;
            laplacian_loss_dense(psi, &g)
        }
        ReprLoss::LaplacianKnn => {
            let k = w.k.min(psi.rows().saturating_sub(1)).max(1);
            let g = build_knn_graph(&targets.as_matrix(), w.sigma, k, w.sym_mode)?;
            laplacian_loss_sparse(psi, &g)
        }
        ReprLoss::RNce => r_nce_loss(psi, &targets.as_matrix(), w.sigma, w.tau),
    }
}

fn pred_loss(y_hat: &Matrix, targets: &Targets, cfg: &TrainConfig) -> Result<LossGrad> {
    match (cfg.pred_loss, targets) {
        (PredLoss::CrossEntropy, Targets::Labels { labels, .. }) => cross_entropy_loss(labels, y_hat),
        (PredLoss::Hinge, Targets::Labels { labels, .. }) => hinge_loss(y_hat, labels),
        (PredLoss::Ols, Targets::Values(y)) => ols_loss(y, y_hat),
        (PredLoss::Mae, Targets::Values(y)) => mae_loss(y, y_hat),
        (PredLoss::Huber, Targets::Values(y)) => huber_loss(y, y_hat, cfg.weights.delta),
        (p, _) => Err(VeilError::InvalidArgument(format!("{p:?} does not match the target type"))),
    }
}

/// Weighted sum of the four objectives and its gradient with respect to
/// every model parameter. Each component is evaluated for logging even when its weight
/// is zero; only weighted components are backpropagated.
pub fn composite_loss(model: &EncoderModel, batch: &Batch, cfg: &TrainConfig) -> Result<CompositeLoss> {
    let n = batch.x.rows();
    if batch.targets.len() != n || batch.x_pca.rows() != n {
        return Err(dim_err("composite_loss", n, batch.targets.len()));
    }
    let w = &cfg.weights;
    let fp = model.forward(&batch.x)?;

    let recon = component("reconstruction", w.lambda_recon, ols_loss(&batch.x, &fp.x_hat))?;
    let repr = component("representation", w.lambda_repr, repr_loss(model, &fp.psi, &batch.targets, cfg))?;
    let pred = component("prediction", w.lambda_pred, pred_loss(&fp.y_hat, &batch.targets, cfg))?;
    let reg = component("regularizer", w.lambda_reg, pca_cosine_loss(&fp.psi2, &batch.x_pca))?;
    let components = Components {
        recon: recon.value,
        repr: repr.value,
        pred: pred.value,
        reg: reg.value,
    };

    let mut dpsi = if w.lambda_repr != 0.0 {
        repr.grad.scale(w.lambda_repr)
    } else {
        Matrix::zeros(n, fp.psi.cols())
    };
    let n_enc = model.encoder.len();
    let n_dec = model.decoder.layers.len();
    let mut grads = model.zero_grads();

    let mut dz = None;
    if w.lambda_recon != 0.0 {
        let (dec, gz) = model.backward_decoder(&fp, &recon.grad.scale(w.lambda_recon))?;
        for (i, g) in dec.into_iter().enumerate() {
            grads[2 * (n_enc + i)] = g.weights;
            grads[2 * (n_enc + i) + 1] = g.bias;
        }
        dz = Some(gz);
    }
    let head_slot = 2 * (n_enc + n_dec);
    if w.lambda_pred != 0.0 {
        let (gin, g) = model.head.backward(&fp.psi, &fp.y_hat, &pred.grad.scale(w.lambda_pred), true)?;
        dpsi.add_assign(&gin.expect("requested"))?;
        grads[head_slot] = g.weights;
        grads[head_slot + 1] = g.bias;
    }
    if w.lambda_reg != 0.0 {
        let (gin, g) = model.projection.backward(&fp.psi, &fp.psi2, &reg.grad.scale(w.lambda_reg), true)?;
        dpsi.add_assign(&gin.expect("requested"))?;
        grads[head_slot + 2] = g.weights;
        grads[head_slot + 3] = g.bias;
    }
    for (i, g) in model.backward_encoder(&batch.x, &fp, &dpsi, dz.as_ref())?.into_iter().enumerate() {
        grads[2 * i] = g.weights;
        grads[2 * i + 1] = g.bias;
    }

    Ok(CompositeLoss {
        total: components.weighted_total(w),
        components,
        grads,
        forward: fp,
    })
}
