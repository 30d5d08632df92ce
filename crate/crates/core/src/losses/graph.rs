//! Target-similarity kernel and the dense / k-NN graphs built from it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VeilError};
use crate::numeric::matrix::sq_dist;
use crate::numeric::stats::quantile;
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymMode {
    /// Every `i → j` with `j ∈ N_k(i)`, kept one-way.
    Directed,
    /// `{i, j}` if either endpoint lists the other.
    Union,
    /// `{i, j}` only if both endpoints list each other.
    Mutual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphForm {
    Dense,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Weighted edges over a batch. Undirected edges of the symmetrized modes are
/// stored as both ordered pairs.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub form: GraphForm,
    pub sym_mode: SymMode,
    /// Neighbor count for k-NN graphs.
    pub k: Option<usize>,
}

impl SimilarityGraph {
    /// Unordered `{i, j}` pairs (with `i < j`) present in either direction.
    pub fn undirected_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.i.min(e.j), e.i.max(e.j))).collect()
    }

    pub fn directed_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }
}

/// `exp(−‖yᵢ − yⱼ‖² / σ²)`.
pub fn similarity_kernel(y_i: &[f64], y_j: &[f64], sigma: f64) -> f64 {
    (-sq_dist(y_i, y_j) / (sigma * sigma)).exp()
}

/// Half the interquartile range of the standardized targets (all target
/// columns pooled). Falls back to 1 for degenerate targets.
pub fn sigma_auto(y: &Matrix) -> Result<f64> {
    if y.rows() < 4 {
        return Err(VeilError::InvalidArgument(format!(
            "sigma_auto needs at least 4 targets (got {})",
            y.rows()
        )));
    }
    let means = y.column_means();
    let stds = y.column_stds();
    let mut standardized = Vec::with_capacity(y.data().len());
    for row in y.iter_rows() {
        for ((v, m), s) in row.iter().zip(&means).zip(&stds) {
            if *s > 1e-300 {
                standardized.push((v - m) / s);
            }
        }
    }
    let sigma = if standardized.len() >= 4 {
        0.5 * (quantile(&standardized, 0.75) - quantile(&standardized, 0.25))
    } else {
        0.0
    };
    if !(sigma > 1e-12) {
        log::warn!("sigma_auto: degenerate target spread, falling back to sigma = 1");
        return Ok(1.0);
    }
    Ok(sigma)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(VeilError::InvalidArgument(format!("sigma must be positive (got {sigma})")))
    }
}

/// All `n(n−1)` ordered pairs.
pub fn build_dense_graph(y: &Matrix, sigma: f64) -> Result<SimilarityGraph> {
    check_sigma(sigma)?;
    let n = y.rows();
    if n < 2 {
        return Err(VeilError::InvalidArgument("dense graph needs at least two nodes".into()));
    }
    let mut edges = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push(Edge {
                    i,
                    j,
                    weight: similarity_kernel(y.row(i), y.row(j), sigma),
                });
            }
        }
    }
    Ok(SimilarityGraph {
        n,
        edges,
        form: GraphForm::Dense,
        sym_mode: SymMode::Directed,
        k: None,
    })
}

/// `k` nearest target neighbors of every node; ties on distance go to the
/// smaller index.
pub fn knn_lists(y: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = y.rows();
    if k == 0 || k >= n {
        return Err(VeilError::InvalidArgument(format!(
            "k = {k} must satisfy 1 <= k <= N-1 = {}",
            n.saturating_sub(1)
        )));
    }
    if y.cols() == 1 {
        Ok(knn_scalar(y.data(), k))
    } else {
        Ok(knn_exhaustive(y, k))
    }
}

fn knn_exhaustive(y: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = y.rows();
    (0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(y.row(i), y.row(j)), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// One sort, then a two-pointer window around each node. Candidates tied with
/// the k-th distance are all collected before the final index tie-break.
fn knn_scalar(y: &[f64], k: usize) -> Vec<Vec<usize>> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut out = vec![Vec::new(); n];
    for p in 0..n {
        let i = order[p];
        let yi = y[i];
        let mut left = p as isize - 1;
        let mut right = p + 1;
        let mut picked: Vec<(f64, usize)> = Vec::with_capacity(k + 4);
        let dist_left = |l: isize| (yi - y[order[l as usize]]).abs();
        let dist_right = |r: usize| (y[order[r]] - yi).abs();
        while picked.len() < k {
            let dl = if left >= 0 { Some(dist_left(left)) } else { None };
            let dr = if right < n { Some(dist_right(right)) } else { None };
            match (dl, dr) {
                (Some(a), Some(b)) if a <= b => {
                    picked.push((a, order[left as usize]));
                    left -= 1;
                }
                (_, Some(b)) => {
                    picked.push((b, order[right]));
                    right += 1;
                }
                (Some(a), None) => {
                    picked.push((a, order[left as usize]));
                    left -= 1;
                }
                (None, None) => break,
            }
        }
        let kth = picked.iter().map(|c| c.0).fold(0.0, f64::max);
        while left >= 0 && dist_left(left) <= kth {
            picked.push((dist_left(left), order[left as usize]));
            left -= 1;
        }
        while right < n && dist_right(right) <= kth {
            picked.push((dist_right(right), order[right]));
            right += 1;
        }
        picked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        picked.truncate(k);
        out[i] = picked.into_iter().map(|(_, j)| j).collect();
    }
    out
}

/// Sparsified graph keeping each node's `k` strongest target neighbors,
/// symmetrized per `sym_mode`. Scalar targets use the sorted window; vector
/// targets use exhaustive search.
pub fn build_knn_graph(y: &Matrix, sigma: f64, k: usize, sym_mode: SymMode) -> Result<SimilarityGraph> {
    check_sigma(sigma)?;
    let n = y.rows();
    let lists = knn_lists(y, k)?;
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    match sym_mode {
        SymMode::Directed => {
            for (i, nb) in lists.iter().enumerate() {
                for &j in nb {
                    pairs.insert((i, j));
                }
            }
        }
        SymMode::Union => {
            for (i, nb) in lists.iter().enumerate() {
                for &j in nb {
                    pairs.insert((i, j));
                    pairs.insert((j, i));
                }
            }
        }
        SymMode::Mutual => {
            for (i, nb) in lists.iter().enumerate() {
                for &j in nb {
                    if lists[j].contains(&i) {
                        pairs.insert((i, j));
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(VeilError::InvalidArgument(format!(
            "mutual k-NN graph is empty at k = {k}; increase k or switch to union mode"
        )));
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            i,
            j,
            weight: similarity_kernel(y.row(i), y.row(j), sigma),
        })
        .collect();
    Ok(SimilarityGraph {
        n,
        edges,
        form: GraphForm::Knn,
        sym_mode,
        k: Some(k),
    })
}
