use super::LossGrad;
use crate::error::Result;
use crate::numeric::matrix::{dot, norm};
use crate::numeric::Matrix;

/// `(1/N)·Σ(1 − cos(f₂(Ψᵢ), x_PCAᵢ))`, gradient with respect to the
/// projected latents. A zero-norm row contributes 1 with zero gradient.
pub fn pca_cosine_loss(psi2: &Matrix, x_pca: &Matrix) -> Result<LossGrad> {
    psi2.same_shape(x_pca, "pca_cosine_loss")?;
    let n = psi2.rows().max(1) as f64;
    let mut value = 0.0;
    let mut degenerate = 0usize;
    let mut grad = Matrix::zeros(psi2.rows(), psi2.cols());
    for i in 0..psi2.rows() {
        let a = psi2.row(i);
        let b = x_pca.row(i);
        let na = norm(a);
        let nb = norm(b);
        if na == 0.0 || nb == 0.0 {
            degenerate += 1;
            value += 1.0;
            continue;
        }
        let cos = dot(a, b) / (na * nb);
        value += 1.0 - cos;
        for ((g, &av), &bv) in grad.row_mut(i).iter_mut().zip(a).zip(b) {
            // ∂cos/∂a = b/(|a||b|) − cos·a/|a|²
            *g = -(bv / (na * nb) - cos * av / (na * na)) / n;
        }
    }
    if degenerate > 0 {
        log::warn!("pca cosine loss: {degenerate} zero-norm rows treated as orthogonal");
    }
    Ok(LossGrad { value: value / n, grad })
}
