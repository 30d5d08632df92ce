use super::LossGrad;
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::Matrix;

const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    p
}

fn check_labels(labels: &[usize], rows: usize, classes: usize, op: &'static str) -> Result<()> {
    if labels.len() != rows {
        return Err(dim_err(op, rows, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(VeilError::InvalidArgument(format!(
            "{op}: label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Cross-entropy of already normalized probabilities, `−(1/N)Σ ln p_{i,yᵢ}`.
/// Probabilities below 1e-12 are clamped.
pub fn cross_entropy_probs(labels: &[usize], probs: &Matrix) -> Result<f64> {
    check_labels(labels, probs.rows(), probs.cols(), "cross_entropy_probs")?;
    let n = probs.rows().max(1) as f64;
    let mut clamped = false;
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let p = probs.get(i, l);
        if p < PROB_FLOOR {
            clamped = true;
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    if clamped {
        log::warn!("cross-entropy: probability of the true class clamped at {PROB_FLOOR}");
    }
    Ok(total / n)
}

/// Cross-entropy through a softmax of `logits`; gradient with respect to the
/// logits is `(p − onehot)/N`.
pub fn cross_entropy_loss(labels: &[usize], logits: &Matrix) -> Result<LossGrad> {
    check_labels(labels, logits.rows(), logits.cols(), "cross_entropy_loss")?;
    let probs = softmax_rows(logits);
    let value = cross_entropy_probs(labels, &probs)?;
    let n = logits.rows().max(1) as f64;
    let mut grad = probs;
    for (i, &l) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        row[l] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n);
    }
    Ok(LossGrad { value, grad })
}

/// Multi-class hinge: `(1/N)ΣᵢΣ_{k≠yᵢ} max{0, 1 + s_ik − s_{i,yᵢ}}`.
pub fn hinge_loss(scores: &Matrix, labels: &[usize]) -> Result<LossGrad> {
    let k = scores.cols();
    if k < 2 {
        return Err(VeilError::InvalidArgument("hinge loss needs at least two classes".into()));
    }
    check_labels(labels, scores.rows(), k, "hinge_loss")?;
    let n = scores.rows().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(scores.rows(), k);
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i);
        let true_score = row[y];
        for c in 0..k {
            if c == y {
                continue;
            }
            let margin = 1.0 + row[c] - true_score;
            if margin > 0.0 {
                value += margin;
                let g = grad.row_mut(i);
                g[c] += 1.0 / n;
                g[y] -= 1.0 / n;
            }
        }
    }
    Ok(LossGrad { value: value / n, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
    use crate::numeric::Rng;

    #[test]
    fn certain_prediction_has_zero_loss() {
        let p = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert_eq!(cross_entropy_probs(&[1], &p).unwrap(), 0.0);
    }

    #[test]
    fn coin_flip_is_ln2() {
        let p = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!((cross_entropy_probs(&[0], &p).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let logits = Matrix::from_rows(&[[3.0, 3.0]]).unwrap();
        assert!((cross_entropy_loss(&[1], &logits).unwrap().value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let v = cross_entropy_probs(&[1], &p).unwrap();
        assert!((v - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let logits = rng.normal_matrix(6, 4);
        let labels = [0, 1, 2, 3, 1, 0];
        let g = cross_entropy_loss(&labels, &logits).unwrap().grad;
        let fd = finite_diff_grad(|z| cross_entropy_loss(&labels, z).unwrap().value, &logits, DEFAULT_STEP).unwrap();
        assert!(max_relative_error(&g, &fd, 1e-7) < 1e-4);
    }

    #[test]
    fn hinge_hand_values() {
        let s = Matrix::from_rows(&[[0.5, 2.0]]).unwrap();
        assert_eq!(hinge_loss(&s, &[1]).unwrap().value, 0.0);
        let s = Matrix::from_rows(&[[1.5, 2.0]]).unwrap();
        assert!((hinge_loss(&s, &[1]).unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hinge_label_out_of_range() {
        let s = Matrix::zeros(1, 2);
        assert!(hinge_loss(&s, &[2]).is_err());
        assert!(hinge_loss(&Matrix::zeros(1, 1), &[0]).is_err());
    }
}
