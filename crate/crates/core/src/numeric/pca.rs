//! Principal component analysis.

use serde::{Deserialize, Serialize};

use super::linalg::{power_iteration_eigen, symmetric_eigen, SymmetricEigen};
use super::Matrix;
use crate::error::{Result, VeilError};

/// Above this input width the covariance is never formed; eigenpairs come
/// from power iteration with deflation instead.
pub const DENSE_EIGEN_MAX_DIM: usize = 2048;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// q × D, orthonormal rows, descending variance.
    pub components: Matrix,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    /// Projects rows of `x` onto the components.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let centered = center(x, &self.mean)?;
        centered.matmul_t(&self.components)
    }

    /// Maps scores back into input space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let mut back = scores.matmul(&self.components)?;
        back.add_row_vector(&self.mean)?;
        Ok(back)
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }
}

fn center(x: &Matrix, mean: &[f64]) -> Result<Matrix> {
    let neg: Vec<f64> = mean.iter().map(|m| -m).collect();
    let mut c = x.clone();
    c.add_row_vector(&neg)?;
    Ok(c)
}

fn spectrum(x: &Matrix, q: usize) -> Result<(Vec<f64>, SymmetricEigen, f64)> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(VeilError::InvalidArgument(
            "PCA needs at least two rows (covariance undefined)".into(),
        ));
    }
    x.ensure_finite("PCA input")?;
    let mean = x.column_means();
    let centered = center(x, &mean)?;
    let denom = (n - 1) as f64;
    let total: f64 = centered.data().iter().map(|v| v * v).sum::<f64>() / denom;
    let eig = if d <= DENSE_EIGEN_MAX_DIM {
        let cov = centered.t_matmul(&centered)?.scale(1.0 / denom);
        let mut full = symmetric_eigen(&cov)?;
        if q < d {
            full = SymmetricEigen {
                values: full.values[..q].to_vec(),
                vectors: full.vectors.select_rows(&(0..q).collect::<Vec<_>>()),
            };
        }
        full
    } else {
        power_iteration_eigen(&centered, q, POWER_TOL, POWER_MAX_ITER, 0)?
    };
    Ok((mean, eig, total))
}

/// Fits the top-`q` principal directions of the column-centered data. Each
/// component's first non-negligible coordinate is made positive.
pub fn pca_fit(x: &Matrix, q: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if q == 0 || q > d || q > n {
        return Err(VeilError::InvalidArgument(format!(
            "PCA component count {q} must be in 1..=min(N={n}, D={d})"
        )));
    }
    let (mean, eig, total) = spectrum(x, q)?;
    let mut components = eig.vectors;
    for r in 0..components.rows() {
        let row = components.row_mut(r);
        if let Some(first) = row.iter().copied().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let explained_variance_ratio = eig
        .values
        .iter()
        .map(|&lam| {
            if total > 0.0 {
                (lam.max(0.0) / total).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio,
    })
}

/// Smallest component count whose cumulative explained variance reaches
/// `threshold`.
pub fn effective_dimensionality(x: &Matrix, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(VeilError::InvalidArgument(format!(
            "threshold {threshold} must lie in (0, 1]"
        )));
    }
    let (n, d) = x.shape();
    let q = d.min(n);
    if n < 2 {
        return Err(VeilError::InvalidArgument(
            "effective dimensionality needs at least two rows".into(),
        ));
    }
    if d > DENSE_EIGEN_MAX_DIM {
        // grow the spectrum in chunks instead of extracting every component
        let mut k = 16.min(q);
        loop {
            let (_, eig, total) = spectrum(x, k)?;
            if let Some(hit) = cumulative_hit(&eig.values, total, threshold) {
                return Ok(hit);
            }
            if k == q {
                return Ok(q);
            }
            k = (k * 2).min(q);
        }
    }
    let (_, eig, total) = spectrum(x, d)?;
    Ok(cumulative_hit(&eig.values, total, threshold).unwrap_or(q))
}

fn cumulative_hit(values: &[f64], total: f64, threshold: f64) -> Option<usize> {
    if total <= 0.0 {
        return Some(1);
    }
    let mut acc = 0.0;
    for (k, &lam) in values.iter().enumerate() {
        acc += lam.max(0.0) / total;
        // tolerate rounding just below the threshold
        if acc >= threshold - 1e-12 {
            return Some(k + 1);
        }
    }
    None
}
