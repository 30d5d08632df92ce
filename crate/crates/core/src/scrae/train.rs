use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, TrainMeta};
use super::objective::{composite_loss, Batch, Components, ReprLoss, TrainConfig};
use super::spec::EncoderSpec;
use crate::data::{Dataset, Targets};
use crate::diagnostics::DiagnosticsReport;
use crate::error::{Result, VeilError};
use crate::losses::{sigma_auto, update_centers, ClassCenters};
use crate::numeric::matrix::sq_dist;
use crate::numeric::nn::Optimizer;
use crate::numeric::{pca_fit, Matrix, Rng};

/// Rows used for the per-epoch collapse and diagnostics passes.
const EVAL_ROWS: usize = 2000;
/// Rows used for the mean pairwise distance in the collapse check.
const COLLAPSE_PAIR_ROWS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub mean_variance: f64,
    pub mean_pairwise_distance: f64,
    pub mean_row_norm: f64,
    pub collapsed: bool,
}

/// Flags a batch whose mean per-dimension variance falls below `threshold`,
/// or whose mean pairwise distance falls below `threshold` times the mean
/// row norm. A threshold of zero never flags.
pub fn detect_collapse(psi: &Matrix, threshold: f64) -> CollapseReport {
    let n = psi.rows();
    if n < 2 || psi.cols() == 0 {
        return CollapseReport {
            mean_variance: 0.0,
            mean_pairwise_distance: 0.0,
            mean_row_norm: 0.0,
            collapsed: false,
        };
    }
    let stds = psi.column_stds();
    let mean_variance = stds.iter().map(|s| s * s).sum::<f64>() / stds.len() as f64;
    let m = n.min(COLLAPSE_PAIR_ROWS);
    let mut sum = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            sum += sq_dist(psi.row(i), psi.row(j)).sqrt();
        }
    }
    let mean_pairwise_distance = sum / (m * (m - 1) / 2) as f64;
    let mean_row_norm = psi.iter_rows().map(crate::numeric::matrix::norm).sum::<f64>() / n as f64;
    let collapsed = mean_variance < threshold || mean_pairwise_distance < threshold * mean_row_norm;
    CollapseReport {
        mean_variance,
        mean_pairwise_distance,
        mean_row_norm,
        collapsed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size weighted means over the epoch.
    pub components: Components,
    pub total: f64,
    pub collapse: CollapseReport,
    /// Validation accuracy (classifier) or R² (regressor) of the head.
    pub validation_metric: Option<f64>,
    pub diagnostics: Option<DiagnosticsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub sigma: f64,
    pub warnings: Vec<String>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from(
            "epoch,total,recon,repr,pred,reg,mean_variance,collapsed,validation_metric,spearman_rho,knn_r2_mean,downstream_r2\n",
        );
        for e in &self.epochs {
            let d = e.diagnostics.as_ref();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.total,
                e.components.recon,
                e.components.repr,
                e.components.pred,
                e.components.reg,
                e.collapse.mean_variance,
                e.collapse.collapsed,
                opt(e.validation_metric),
                opt(d.and_then(|d| d.spearman_rho)),
                opt(d.and_then(|d| d.knn_r2_mean)),
                opt(d.and_then(|d| d.downstream_r2)),
            ));
        }
        s
    }
}

fn head_metric(model: &EncoderModel, ds: &Dataset) -> Result<Option<f64>> {
    let out = model.predict(&ds.x)?;
    Ok(match &ds.targets {
        Targets::Labels { labels, .. } => {
            let pred: Vec<usize> = out.iter_rows().map(crate::downstream::argmax).collect();
            Some(crate::downstream::accuracy(&pred, labels))
        }
        Targets::Values(y) => crate::downstream::pooled_r2(y, &out).ok(),
    })
}

fn first_rows(ds: &Dataset, n: usize) -> Dataset {
    ds.select(&(0..ds.len().min(n)).collect::<Vec<_>>())
}

/// Mini-batch training of the composite objective.
///
/// The input PCA for the regularizer targets is fitted once on the training
/// rows. For center loss the class centers start at the class means of the
/// initial latents and then follow damped batch-mean updates.
pub fn train(
    train: &Dataset,
    validation: Option<&Dataset>,
    spec: &EncoderSpec,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, TrainingLog)> {
    cfg.validate(spec)?;
    if train.dim() != spec.input_dim {
        return Err(crate::error::dim_err("train", spec.input_dim, train.dim()));
    }
    if train.len() < 2 {
        return Err(VeilError::InvalidArgument("training needs at least two rows".into()));
    }
    train.x.ensure_finite("training inputs")?;
    let mut cfg = cfg.clone();
    let sigma = if cfg.sigma_auto {
        sigma_auto(&train.targets.as_matrix())?
    } else {
        cfg.weights.sigma
    };
    cfg.weights.sigma = sigma;

    let pca = pca_fit(&train.x, 2.min(train.dim()).min(train.len()))?;
    let mut x_pca = pca.transform(&train.x)?;
    if x_pca.cols() < 2 {
        x_pca = Matrix::hcat(&[&x_pca, &Matrix::zeros(x_pca.rows(), 2 - x_pca.cols())])?;
    }

    let mut model = EncoderModel::init(spec, cfg.seed)?;
    model.meta = TrainMeta {
        seed: cfg.seed,
        epochs: 0,
        weights: cfg.weights.clone(),
        repr_loss: Some(cfg.repr_loss),
        pred_loss: Some(cfg.pred_loss),
        sigma: Some(sigma),
        run_config: None,
    };
    let uses_centers = cfg.repr_loss == ReprLoss::Center;
    if let (true, Targets::Labels { labels, n_classes }) = (uses_centers, &train.targets) {
        model.centers = Some(ClassCenters::from_batch(&model.psi(&train.x)?, labels, *n_classes)?);
    }

    let mut log = TrainingLog {
        sigma,
        ..Default::default()
    };
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order_rng = Rng::derive(cfg.seed, 0x7a1);
    let eval = validation.map(|v| first_rows(v, EVAL_ROWS));
    let collapse_rows = first_rows(eval.as_ref().unwrap_or(train), EVAL_ROWS);
    let n = train.len();

    for epoch in 1..=cfg.epochs {
        let perm = order_rng.permutation(n);
        let mut sums = Components::default();
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, chunk) in perm.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let batch = Batch {
                x: train.x.select_rows(chunk),
                targets: train.targets.select(chunk),
                x_pca: x_pca.select_rows(chunk),
            };
            let out = composite_loss(&model, &batch, &cfg).map_err(|e| VeilError::TrainingAborted {
                epoch,
                batch: b,
                reason: e.to_string(),
            })?;
            if !out.total.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
                return Err(VeilError::TrainingAborted {
                    epoch,
                    batch: b,
                    reason: format!("non-finite loss or gradient (loss = {})", out.total),
                });
            }
            let m = chunk.len() as f64;
            sums.recon += m * out.components.recon;
            sums.repr += m * out.components.repr;
            sums.pred += m * out.components.pred;
            sums.reg += m * out.components.reg;
            total += m * out.total;
            seen += chunk.len();

            opt.step(&mut model.params_mut(), &out.grads)?;
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(VeilError::TrainingAborted {
                    epoch,
                    batch: b,
                    reason: "parameters became non-finite after the optimizer step".into(),
                });
            }
            if let (Some(centers), Some(labels)) = (model.centers.as_ref(), batch.targets.labels()) {
                let updated = update_centers(centers, &out.forward.psi, labels, cfg.center_alpha)?;
                model.centers = Some(updated);
            }
        }
        let seen = seen.max(1) as f64;
        let components = Components {
            recon: sums.recon / seen,
            repr: sums.repr / seen,
            pred: sums.pred / seen,
            reg: sums.reg / seen,
        };
        let collapse = detect_collapse(&model.psi(&collapse_rows.x)?, cfg.collapse_threshold);
        if collapse.collapsed {
            let msg = format!(
                "epoch {epoch}: latent collapse detected (mean variance {:.3e}); raise lambda_recon or switch repr_loss to a contrastive objective",
                collapse.mean_variance
            );
            log::warn!("{msg}");
            log.warnings.push(msg);
        }
        let (validation_metric, diagnostics) = match &eval {
            Some(v) => {
                let metric = head_metric(&model, v)?;
                let diag = match (&v.targets, cfg.diagnostics) {
                    (Targets::Values(y), true) => {
                        let fp = model.forward(&v.x)?;
                        DiagnosticsReport::compute(epoch, &fp.psi, y, &fp.y_hat, cfg.seed).ok()
                    }
                    _ => None,
                };
                (metric, diag)
            }
            None => (None, None),
        };
        log::info!(
            "epoch {epoch}: total {:.6} recon {:.6} repr {:.6} pred {:.6} reg {:.6} val {:?} rho {:?} knn_r2 {:?}",
            total / seen,
            components.recon,
            components.repr,
            components.pred,
            components.reg,
            validation_metric,
            diagnostics.as_ref().and_then(|d| d.spearman_rho),
            diagnostics.as_ref().and_then(|d| d.knn_r2_mean),
        );
        log.epochs.push(EpochLog {
            epoch,
            components,
            total: total / seen,
            collapse,
            validation_metric,
            diagnostics,
        });
        model.meta.epochs = epoch;
    }
    Ok((model, log))
}
