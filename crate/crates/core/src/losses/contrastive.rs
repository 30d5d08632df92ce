//! InfoNCE over class labels and its kernel-weighted regression variant.

use super::graph::similarity_kernel;
use super::LossGrad;
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::matrix::{dot, norm};
use crate::numeric::Matrix;

const RATIO_FLOOR: f64 = 1e-12;

/// `ΨᵢᵀΨⱼ / (τ‖Ψᵢ‖‖Ψⱼ‖)`.
pub fn cosine_sim_scaled(psi_i: &[f64], psi_j: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(VeilError::InvalidArgument(format!("tau must be positive (got {tau})")));
    }
    let (a, b) = (norm(psi_i), norm(psi_j));
    if a == 0.0 || b == 0.0 {
        return Err(VeilError::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    Ok(dot(psi_i, psi_j) / (tau * a * b))
}

/// Shared body: `−(1/N)Σᵢ ln(Σ_{j≠i} wᵢⱼ e^{sᵢⱼ} / Σ_{k≠i} e^{sᵢₖ})`.
/// Rows with no positive weight are skipped.
fn weighted_contrastive(psi: &Matrix, tau: f64, weight: impl Fn(usize, usize) -> f64, op: &str) -> Result<LossGrad> {
    if !(tau > 0.0) {
        return Err(VeilError::InvalidArgument(format!("tau must be positive (got {tau})")));
    }
    let (n, e) = psi.shape();
    if n < 2 {
        return Err(VeilError::InvalidArgument(format!("{op} needs at least two rows")));
    }
    let norms: Vec<f64> = psi.iter_rows().map(norm).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(VeilError::InvalidArgument(format!("{op}: latent row {i} has zero norm")));
    }
    let mut unit = psi.clone();
    for (r, &nr) in norms.iter().enumerate() {
        unit.row_mut(r).iter_mut().for_each(|v| *v /= nr);
    }
    let cos = unit.matmul_t(&unit)?;

    let nf = n as f64;
    let mut value = 0.0;
    let mut skipped = 0usize;
    // coefficient of ∂s_ij in the loss, accumulated per ordered pair
    let mut coef = Matrix::zeros(n, n);
    for i in 0..n {
        let s: Vec<f64> = (0..n).map(|j| cos.get(i, j) / tau).collect();
        let w: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { weight(i, j) }).collect();
        if w.iter().all(|&v| v <= 0.0) {
            skipped += 1;
            continue;
        }
        let m = (0..n).filter(|&k| k != i).map(|k| s[k]).fold(f64::NEG_INFINITY, f64::max);
        let mut den = 0.0;
        let mut num = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let ex = (s[k] - m).exp();
            den += ex;
            num += w[k] * ex;
        }
        let ratio = num / den;
        if ratio < RATIO_FLOOR {
            value -= RATIO_FLOOR.ln();
            continue;
        }
        value -= ratio.ln();
        for k in 0..n {
            if k == i {
                continue;
            }
            let ex = (s[k] - m).exp();
            let p = ex / den;
            let q = w[k] * ex / num;
            coef.set(i, k, (p - q) / nf);
        }
    }
    if skipped > 0 {
        log::warn!("{op}: {skipped} observations without a positive partner were skipped");
    }

    let mut grad = Matrix::zeros(n, e);
    for i in 0..n {
        for j in 0..n {
            let c = coef.get(i, j);
            if c == 0.0 {
                continue;
            }
            let cij = cos.get(i, j);
            let g = c / tau;
            let (ui, uj) = (unit.row(i).to_vec(), unit.row(j).to_vec());
            // ∂cos/∂Ψᵢ = (ûⱼ − cos·ûᵢ)/‖Ψᵢ‖, symmetric for Ψⱼ
            let si = g / norms[i];
            for ((gv, a), b) in grad.row_mut(i).iter_mut().zip(&uj).zip(&ui) {
                *gv += si * (a - cij * b);
            }
            let sj = g / norms[j];
            for ((gv, a), b) in grad.row_mut(j).iter_mut().zip(&ui).zip(&uj) {
                *gv += sj * (a - cij * b);
            }
        }
    }
    Ok(LossGrad { value: value / nf, grad })
}

/// InfoNCE with same-label positives.
pub fn info_nce_loss(psi: &Matrix, labels: &[usize], tau: f64) -> Result<LossGrad> {
    if labels.len() != psi.rows() {
        return Err(dim_err("info_nce_loss", psi.rows(), labels.len()));
    }
    weighted_contrastive(
        psi,
        tau,
        |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 },
        "info_nce_loss",
    )
}

/// Regression-adapted InfoNCE: positives weighted by the target kernel.
pub fn r_nce_loss(psi: &Matrix, y: &Matrix, sigma: f64, tau: f64) -> Result<LossGrad> {
    if y.rows() != psi.rows() {
        return Err(dim_err("r_nce_loss", psi.rows(), y.rows()));
    }
    if !(sigma > 0.0) {
        return Err(VeilError::InvalidArgument(format!("sigma must be positive (got {sigma})")));
    }
    weighted_contrastive(psi, tau, |i, j| similarity_kernel(y.row(i), y.row(j), sigma), "r_nce_loss")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
    use crate::numeric::Rng;

    #[test]
    fn cosine_cases() {
        assert!((cosine_sim_scaled(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim_scaled(&[1.0, 0.0], &[0.0, 3.0], 1.0).unwrap(), 0.0);
        let a = cosine_sim_scaled(&[1.0, 2.0], &[0.3, 2.0], 1.0).unwrap();
        let b = cosine_sim_scaled(&[1.0, 2.0], &[0.3, 2.0], 0.5).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(cosine_sim_scaled(&[0.0, 0.0], &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn single_class_gives_zero() {
        let mut rng = Rng::new(1);
        let psi = rng.normal_matrix(6, 3);
        assert!(info_nce_loss(&psi, &[0; 6], 0.5).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn separated_classes_beat_mixed_classes() {
        let labels = [0, 1, 0, 1];
        let mixed = Matrix::from_rows(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]]).unwrap();
        let separated = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.1, 0.9]]).unwrap();
        let a = info_nce_loss(&mixed, &labels, 0.5).unwrap().value;
        let b = info_nce_loss(&separated, &labels, 0.5).unwrap().value;
        assert!(b < a, "{b} !< {a}");
    }

    #[test]
    fn small_step_against_gradient_lowers_loss() {
        let mut rng = Rng::new(9);
        let psi = rng.normal_matrix(6, 3);
        let labels = [0, 1, 0, 1, 2, 2];
        let lg = info_nce_loss(&psi, &labels, 0.5).unwrap();
        let mut moved = psi.clone();
        moved.add_scaled(&lg.grad, -1e-3).unwrap();
        assert!(info_nce_loss(&moved, &labels, 0.5).unwrap().value < lg.value);
    }

    #[test]
    fn info_nce_gradient_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let psi = rng.normal_matrix(8, 3);
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let g = info_nce_loss(&psi, &labels, 0.7).unwrap().grad;
        let fd = finite_diff_grad(|p| info_nce_loss(p, &labels, 0.7).unwrap().value, &psi, DEFAULT_STEP).unwrap();
        assert!(max_relative_error(&g, &fd, 1e-7) < 1e-4);
    }

    #[test]
    fn lonely_observation_is_skipped() {
        let mut rng = Rng::new(3);
        let psi = rng.normal_matrix(5, 2);
        let lg = info_nce_loss(&psi, &[0, 0, 1, 1, 2], 1.0).unwrap();
        assert!(lg.value.is_finite());
        assert!(lg.grad.is_finite());
    }

    #[test]
    fn r_nce_equal_targets_give_zero() {
        let mut rng = Rng::new(4);
        let psi = rng.normal_matrix(6, 3);
        let y = Matrix::filled(6, 1, 2.5);
        assert!(r_nce_loss(&psi, &y, 1.0, 0.5).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn r_nce_is_non_negative_and_gradient_checks() {
        let mut rng = Rng::new(5);
        for _ in 0..5 {
            let psi = rng.normal_matrix(7, 3);
            let y = rng.normal_matrix(7, 1);
            let lg = r_nce_loss(&psi, &y, 0.8, 0.5).unwrap();
            assert!(lg.value >= 0.0);
            let fd = finite_diff_grad(|p| r_nce_loss(p, &y, 0.8, 0.5).unwrap().value, &psi, DEFAULT_STEP).unwrap();
            assert!(max_relative_error(&lg.grad, &fd, 1e-7) < 1e-4);
        }
    }
}
