use super::LossGrad;
use crate::error::{Result, VeilError};
use crate::numeric::Matrix;

/// `(1/2N)·Σ‖xᵢ − x̂ᵢ‖²`, gradient with respect to `x_hat`.
pub fn ols_loss(x: &Matrix, x_hat: &Matrix) -> Result<LossGrad> {
    x.same_shape(x_hat, "ols_loss")?;
    let n = x.rows().max(1) as f64;
    let mut grad = x_hat.sub(x)?;
    let value = grad.data().iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
    grad.data_mut().iter_mut().for_each(|g| *g /= n);
    Ok(LossGrad { value, grad })
}

/// `(1/N)·Σ‖yᵢ − ŷᵢ‖₁`; subgradient 0 at exact ties.
pub fn mae_loss(y: &Matrix, y_hat: &Matrix) -> Result<LossGrad> {
    y.same_shape(y_hat, "mae_loss")?;
    let n = y.rows().max(1) as f64;
    let diff = y_hat.sub(y)?;
    let value = diff.data().iter().map(|r| r.abs()).sum::<f64>() / n;
    let grad = diff.map(|r| {
        if r > 0.0 {
            1.0 / n
        } else if r < 0.0 {
            -1.0 / n
        } else {
            0.0
        }
    });
    Ok(LossGrad { value, grad })
}

/// Mean over samples of the Huber penalty (summed over output columns):
/// quadratic inside `|r| < δ`, linear outside.
pub fn huber_loss(y: &Matrix, y_hat: &Matrix, delta: f64) -> Result<LossGrad> {
    if !(delta > 0.0) {
        return Err(VeilError::InvalidArgument(format!("huber delta must be positive (got {delta})")));
    }
    y.same_shape(y_hat, "huber_loss")?;
    let n = y.rows().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    for ((g, &t), &p) in grad.data_mut().iter_mut().zip(y.data()).zip(y_hat.data()) {
        let r = p - t;
        if r.abs() < delta {
            value += 0.5 * r * r;
            *g = r / n;
        } else {
            value += r.abs() * delta - 0.5 * delta * delta;
            *g = delta * r.signum() / n;
        }
    }
    Ok(LossGrad { value: value / n, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::gradcheck::{finite_diff_grad, max_relative_error, DEFAULT_STEP};
    use crate::numeric::Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn ols_hand_values() {
        let x = m(&[&[0.0, 0.0]]);
        assert_eq!(ols_loss(&x, &x).unwrap().value, 0.0);
        assert_eq!(ols_loss(&x, &m(&[&[3.0, 4.0]])).unwrap().value, 12.5);
    }

    #[test]
    fn ols_gradient_matches_finite_differences() {
        let mut rng = Rng::new(1);
        let x = rng.normal_matrix(5, 3);
        let xh = rng.normal_matrix(5, 3);
        let g = ols_loss(&x, &xh).unwrap().grad;
        let fd = finite_diff_grad(|p| ols_loss(&x, p).unwrap().value, &xh, DEFAULT_STEP).unwrap();
        assert!(max_relative_error(&g, &fd, 1e-7) < 1e-4);
    }

    #[test]
    fn mae_hand_values_and_signs() {
        let y = m(&[&[0.0], &[0.0]]);
        let yh = m(&[&[1.0], &[-3.0]]);
        let lg = mae_loss(&y, &yh).unwrap();
        assert_eq!(lg.value, 2.0);
        assert_eq!(lg.grad.data(), &[0.5, -0.5]);
        assert_eq!(mae_loss(&y, &y).unwrap().grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn huber_hand_values() {
        let y = m(&[&[0.0]]);
        assert_eq!(huber_loss(&y, &y, 1.0).unwrap().value, 0.0);
        assert!((huber_loss(&y, &m(&[&[0.5]]), 1.0).unwrap().value - 0.125).abs() < 1e-15);
        assert!((huber_loss(&y, &m(&[&[2.0]]), 1.0).unwrap().value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huber_gradient_is_continuous_at_knee() {
        let y = m(&[&[0.0]]);
        let eps = 1e-7;
        let below = huber_loss(&y, &m(&[&[1.0 - eps]]), 1.0).unwrap().grad.data()[0];
        let above = huber_loss(&y, &m(&[&[1.0 + eps]]), 1.0).unwrap().grad.data()[0];
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn huber_rejects_non_positive_delta() {
        let y = m(&[&[0.0]]);
        assert!(huber_loss(&y, &y, 0.0).is_err());
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(2, 3);
        assert!(ols_loss(&a, &b).is_err());
        assert!(mae_loss(&a, &b).is_err());
        assert!(huber_loss(&a, &b, 1.0).is_err());
    }
}
