//! Latent-space diagnostics for regression training: rank agreement between
//! latent and target distances, cross-validated k-NN R², and calibration
//! binning.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, VeilError};
use crate::numeric::matrix::sq_dist;
use crate::numeric::stats::{average_ranks, pearson};
use crate::numeric::{Matrix, Rng};

pub const DEFAULT_MAX_PAIRS: usize = 100_000;
pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_KNN_FOLDS: usize = 5;
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    /// `None` when either distance list has zero variance.
    pub rho: Option<f64>,
    pub pairs: usize,
    pub sampled: bool,
}

/// Spearman correlation between pairwise latent distances and pairwise
/// target distances. All pairs are used when there are at most `max_pairs`
/// of them, otherwise a seeded uniform sample of `max_pairs` pairs.
pub fn spearman_latent_target(psi: &Matrix, y: &Matrix, max_pairs: usize, seed: u64) -> Result<SpearmanResult> {
    let n = psi.rows();
    if y.rows() != n {
        return Err(dim_err("spearman_latent_target", n, y.rows()));
    }
    if n < 3 {
        return Err(VeilError::InvalidArgument("Spearman diagnostic needs at least 3 rows".into()));
    }
    if max_pairs == 0 {
        return Err(VeilError::InvalidArgument("max_pairs must be positive".into()));
    }
    let total = n * (n - 1) / 2;
    let mut dl = Vec::with_capacity(total.min(max_pairs));
    let mut dy = Vec::with_capacity(total.min(max_pairs));
    let mut push = |i: usize, j: usize| {
        dl.push(sq_dist(psi.row(i), psi.row(j)).sqrt());
        dy.push(sq_dist(y.row(i), y.row(j)).sqrt());
    };
    let sampled = total > max_pairs;
    if sampled {
        let mut rng = Rng::derive(seed, 0x5ea);
        for _ in 0..max_pairs {
            let i = rng.below(n);
            let mut j = rng.below(n - 1);
            if j >= i {
                j += 1;
            }
            push(i, j);
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                push(i, j);
            }
        }
    }
    let pairs = dl.len();
    let rho = pearson(&average_ranks(&dl), &average_ranks(&dy));
    if rho.is_none() {
        log::warn!("Spearman diagnostic undefined: a distance list has zero variance");
    }
    Ok(SpearmanResult { rho, pairs, sampled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnR2 {
    /// Out-of-fold R² per fold; `None` marks a fold with constant targets.
    pub folds: Vec<Option<f64>>,
    /// Mean over the defined folds.
    pub mean: Option<f64>,
}

/// Out-of-fold R² of a uniform-weight k-NN regressor on `psi` (Euclidean,
/// ties broken by smaller index).
pub fn knn_r2(psi: &Matrix, y: &Matrix, k: usize, folds: usize, seed: u64) -> Result<KnnR2> {
    let n = psi.rows();
    if y.rows() != n {
        return Err(dim_err("knn_r2", n, y.rows()));
    }
    if folds < 2 || k == 0 {
        return Err(VeilError::InvalidArgument("knn_r2 needs folds >= 2 and k >= 1".into()));
    }
    if n < folds * (k + 1) {
        return Err(VeilError::InvalidArgument(format!(
            "knn_r2 needs at least folds·(k+1) = {} rows, got {n}",
            folds * (k + 1)
        )));
    }
    let perm = Rng::derive(seed, 0x2b2).permutation(n);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let q = y.cols();
    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let mut pred = Matrix::zeros(test.len(), q);
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.len());
        for (t, &i) in test.iter().enumerate() {
            dist.clear();
            dist.extend(train.iter().map(|&j| (sq_dist(psi.row(i), psi.row(j)), j)));
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let row = pred.row_mut(t);
            for &(_, j) in &dist[..k] {
                for (p, v) in row.iter_mut().zip(y.row(j)) {
                    *p += v / k as f64;
                }
            }
        }
        let truth = y.select_rows(&test);
        match crate::downstream::pooled_r2(&truth, &pred) {
            Ok(r2) => out.push(Some(r2)),
            Err(_) => {
                log::warn!("knn_r2: fold {f} has constant targets, R² undefined");
                out.push(None);
            }
        }
    }
    let defined: Vec<f64> = out.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(KnnR2 { folds: out, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub index: usize,
    pub mean_predicted: f64,
    pub mean_observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bins: Vec<CalibrationBin>,
    /// `max_b |mean ŷ_b − mean y_b|`.
    pub gap: f64,
    /// Set when ties in the predictions forced adjacent bins to merge.
    pub merged: bool,
}

/// Equal-frequency bins over sorted predictions. Bin sizes differ by at most
/// one unless tied predictions straddle a boundary, in which case the tie
/// group stays in one bin and the result is flagged.
pub fn calibration_bins(y: &[f64], y_hat: &[f64], n_bins: usize) -> Result<Calibration> {
    let n = y.len();
    if y_hat.len() != n {
        return Err(dim_err("calibration_bins", n, y_hat.len()));
    }
    if n_bins < 2 || n < n_bins {
        return Err(VeilError::InvalidArgument(format!(
            "calibration needs n_bins >= 2 and N >= n_bins (n_bins={n_bins}, N={n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y_hat[a].total_cmp(&y_hat[b]).then(a.cmp(&b)));
    let mut bounds = Vec::with_capacity(n_bins + 1);
    bounds.push(0);
    let mut merged = false;
    for b in 1..n_bins {
        let mut cut = b * n / n_bins;
        while cut < n && cut > 0 && y_hat[order[cut]] == y_hat[order[cut - 1]] {
            cut += 1;
            merged = true;
        }
        if cut > *bounds.last().unwrap() && cut < n {
            bounds.push(cut);
        } else if cut != *bounds.last().unwrap() || cut == n {
            merged = true;
        }
    }
    bounds.push(n);
    bounds.dedup();
    if merged {
        log::warn!("calibration: tied predictions merged bins ({} remain)", bounds.len() - 1);
    }
    let mut bins = Vec::with_capacity(bounds.len() - 1);
    let mut gap = 0.0f64;
    for (index, w) in bounds.windows(2).enumerate() {
        let idx = &order[w[0]..w[1]];
        let count = idx.len();
        let mean_predicted = idx.iter().map(|&i| y_hat[i]).sum::<f64>() / count as f64;
        let mean_observed = idx.iter().map(|&i| y[i]).sum::<f64>() / count as f64;
        gap = gap.max((mean_predicted - mean_observed).abs());
        bins.push(CalibrationBin {
            index,
            mean_predicted,
            mean_observed,
            count,
        });
    }
    Ok(Calibration { bins, gap, merged })
}

/// One epoch's diagnostics snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub epoch: usize,
    pub spearman_rho: Option<f64>,
    pub knn_r2_folds: Vec<Option<f64>>,
    pub knn_r2_mean: Option<f64>,
    pub downstream_r2: Option<f64>,
    pub calibration_bins: Vec<CalibrationBin>,
    pub calibration_gap: Option<f64>,
}

impl DiagnosticsReport {
    /// Runs every diagnostic with default settings on a latent batch and
    /// the matching predictions.
    pub fn compute(epoch: usize, psi: &Matrix, y: &Matrix, y_hat: &Matrix, seed: u64) -> Result<Self> {
        let spearman = spearman_latent_target(psi, y, DEFAULT_MAX_PAIRS, seed)?;
        let knn = knn_r2(psi, y, DEFAULT_KNN_K, DEFAULT_KNN_FOLDS, seed)?;
        let downstream_r2 = crate::downstream::pooled_r2(y, y_hat).ok();
        let (calibration_bins, calibration_gap) = if y.cols() == 1 && y.rows() >= DEFAULT_CALIBRATION_BINS {
            let c = calibration_bins(y.data(), y_hat.data(), DEFAULT_CALIBRATION_BINS)?;
            (c.bins, Some(c.gap))
        } else {
            (Vec::new(), None)
        };
        Ok(Self {
            epoch,
            spearman_rho: spearman.rho,
            knn_r2_folds: knn.folds,
            knn_r2_mean: knn.mean,
            downstream_r2,
            calibration_bins,
            calibration_gap,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Flat per-epoch table for external plotting.
pub fn reports_to_csv(reports: &[DiagnosticsReport]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut s = String::from("epoch,spearman_rho,knn_r2_mean,downstream_r2,calibration_gap\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            fmt(r.spearman_rho),
            fmt(r.knn_r2_mean),
            fmt(r.downstream_r2),
            fmt(r.calibration_gap)
        ));
    }
    s
}
