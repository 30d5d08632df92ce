//! Central finite differences, the reference every analytic gradient is
//! checked against.

use super::Matrix;
use crate::error::{Result, VeilError};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Entrywise `(f(x + h·e) − f(x − h·e)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.data().len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let up = f(&probe);
        probe.data_mut()[idx] = orig - h;
        let down = f(&probe);
        probe.data_mut()[idx] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(VeilError::NonFinite(format!(
                "objective not finite around entry {idx}"
            )));
        }
        grad.data_mut()[idx] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Largest entrywise error, relative to `max(|a|, |b|)` with an absolute floor.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, abs_floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, b)| {
            let diff = (a - b).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(b.abs())
            }
        })
        .fold(0.0, f64::max)
}
