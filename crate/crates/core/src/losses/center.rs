use serde::{Deserialize, Serialize};

use super::LossGrad;
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::Matrix;

/// One latent center per class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCenters {
    pub centers: Matrix,
    /// Observations folded into each center so far; zero means uninitialized.
    pub counts: Vec<u64>,
}

impl ClassCenters {
    pub fn empty(n_classes: usize, dim: usize) -> Self {
        Self {
            centers: Matrix::zeros(n_classes, dim),
            counts: vec![0; n_classes],
        }
    }

    /// Class means of `psi`; classes absent from `labels` stay uninitialized.
    pub fn from_batch(psi: &Matrix, labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut c = Self::empty(n_classes, psi.cols());
        c = update_centers(&c, psi, labels, 1.0)?;
        Ok(c)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }
}

/// `(1/2N)·Σ‖μ_{yᵢ} − Ψᵢ‖²` with the centers held fixed.
pub fn center_loss(psi: &Matrix, labels: &[usize], centers: &ClassCenters) -> Result<LossGrad> {
    if labels.len() != psi.rows() {
        return Err(dim_err("center_loss", psi.rows(), labels.len()));
    }
    if centers.centers.cols() != psi.cols() {
        return Err(dim_err("center_loss", centers.centers.cols(), psi.cols()));
    }
    let n = psi.rows().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(psi.rows(), psi.cols());
    for (i, &l) in labels.iter().enumerate() {
        if l >= centers.n_classes() || centers.counts[l] == 0 {
            return Err(VeilError::InvalidArgument(format!(
                "center_loss: no center for label {l}"
            )));
        }
        let mu = centers.centers.row(l);
        let g = grad.row_mut(i);
        for ((gv, &p), &m) in g.iter_mut().zip(psi.row(i)).zip(mu) {
            let d = p - m;
            value += d * d;
            *gv = d / n;
        }
    }
    Ok(LossGrad {
        value: value / (2.0 * n),
        grad,
    })
}

/// Damped batch-mean update `μ_c ← μ_c − α·mean_{i∈c}(μ_c − Ψᵢ)`. Classes
/// absent from the batch are unchanged; an uninitialized center jumps to its
/// batch mean.
pub fn update_centers(centers: &ClassCenters, psi: &Matrix, labels: &[usize], alpha: f64) -> Result<ClassCenters> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VeilError::InvalidArgument(format!("center rate {alpha} outside [0, 1]")));
    }
    if labels.len() != psi.rows() {
        return Err(dim_err("update_centers", psi.rows(), labels.len()));
    }
    let k = centers.n_classes();
    let dim = psi.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut batch_counts = vec![0u64; k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(VeilError::InvalidArgument(format!("update_centers: label {l} >= {k}")));
        }
        batch_counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(psi.row(i)) {
            *s += v;
        }
    }
    let mut out = centers.clone();
    for c in 0..k {
        let m = batch_counts[c];
        if m == 0 {
            continue;
        }
        let rate = if centers.counts[c] == 0 { 1.0 } else { alpha };
        let row = out.centers.row_mut(c);
        for (mu, s) in row.iter_mut().zip(sums.row(c)) {
            let batch_mean = s / m as f64;
            *mu -= rate * (*mu - batch_mean);
        }
        out.counts[c] += m;
    }
    Ok(out)
}
