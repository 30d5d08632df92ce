//! In-memory datasets, splitting helpers and the seeded synthetic fixtures.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, VeilError};
use crate::numeric::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
}

/// Supervision attached to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels { labels: Vec<usize>, n_classes: usize },
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels { labels, .. } => labels.len(),
            Targets::Values(y) => y.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Labels { labels, n_classes } => Targets::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(y) => Targets::Values(y.select_rows(idx)),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Targets::Labels { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&Matrix> {
        match self {
            Targets::Values(y) => Some(y),
            Targets::Labels { .. } => None,
        }
    }

    /// Labels as one-hot rows, values unchanged.
    pub fn as_matrix(&self) -> Matrix {
        match self {
            Targets::Labels { labels, n_classes } => {
                let mut m = Matrix::zeros(labels.len(), *n_classes);
                for (i, &l) in labels.iter().enumerate() {
                    m.set(i, l, 1.0);
                }
                m
            }
            Targets::Values(y) => y.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
    pub kinds: Vec<ColumnKind>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with column kinds inferred from the values.
    pub fn new(x: Matrix, targets: Targets) -> Result<Self> {
        if targets.len() != x.rows() {
            return Err(dim_err("Dataset::new", x.rows(), targets.len()));
        }
        if let Targets::Labels { labels, n_classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(VeilError::InvalidArgument(format!(
                    "label {bad} outside 0..{n_classes}"
                )));
            }
        }
        let kinds = infer_kinds(&x);
        let feature_names = (0..x.cols()).map(|c| format!("x{c}")).collect();
        Ok(Self {
            x,
            targets,
            kinds,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            targets: self.targets.select(idx),
            kinds: self.kinds.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Seeded shuffle split; the first part holds `round(fraction·N)` rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(VeilError::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
        }
        let perm = Rng::new(seed).permutation(self.len());
        let cut = ((self.len() as f64) * fraction).round() as usize;
        Ok((self.select(&perm[..cut]), self.select(&perm[cut..])))
    }
}

/// A column whose values all lie in {0, 1} is binary.
pub fn infer_kinds(x: &Matrix) -> Vec<ColumnKind> {
    (0..x.cols())
        .map(|c| {
            let binary = x.rows() > 0 && (0..x.rows()).all(|r| matches!(x.get(r, c), v if v == 0.0 || v == 1.0));
            if binary {
                ColumnKind::Binary
            } else {
                ColumnKind::Numeric
            }
        })
        .collect()
}

/// Per-class index lists, each shuffled with `rng`, in class order.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(VeilError::InvalidArgument("need at least two folds".into()));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(VeilError::InvalidArgument(format!("label {l} outside 0..{n_classes}")));
        }
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < folds {
            return Err(VeilError::InvalidArgument(format!(
                "class {c} has {} rows, fewer than the {folds} folds required for a valid stratified split",
                members.len()
            )));
        }
    }
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for members in &mut by_class {
        rng.shuffle(members);
        for (k, &i) in members.iter().enumerate() {
            out[(offset + k) % folds].push(i);
        }
        offset += members.len();
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Smooth nonlinear regression problem: isotropic Gaussian inputs and a
/// target driven by one dense direction, `sin(u) + 0.5u + ε`.
pub fn synthetic_regression(n: usize, d: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = Rng::derive(seed, 0x5e9);
    let x = rng.normal_matrix(n, d);
    let mut w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let nw = crate::numeric::matrix::norm(&w);
    w.iter_mut().for_each(|v| *v /= nw);
    let y: Vec<f64> = x
        .iter_rows()
        .map(|r| {
            let u = crate::numeric::matrix::dot(r, &w);
            u.sin() + 0.5 * u + noise * rng.normal()
        })
        .collect();
    Dataset::new(x, Targets::Values(Matrix::column(&y))).expect("shapes agree by construction")
}

/// `n` rows lying exactly on a random `rank`-dimensional subspace of R^d.
pub fn low_rank_matrix(n: usize, d: usize, rank: usize, seed: u64) -> Matrix {
    let mut rng = Rng::derive(seed, 0x10e);
    let scores = rng.normal_matrix(n, rank);
    let basis = rng.normal_matrix(rank, d);
    scores.matmul(&basis).expect("inner dims agree")
}
