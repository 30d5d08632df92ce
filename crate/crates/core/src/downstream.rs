//! Downstream models fitted on exported latents: multinomial logistic
//! regression and ridge-regularized least squares.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, VeilError};
use crate::losses::{cross_entropy_loss, softmax_rows};
use crate::numeric::linalg::cholesky_solve;
use crate::numeric::nn::{Optimizer, OptimizerKind};
use crate::numeric::{Matrix, Rng};

/// Column standardizer; zero-variance columns get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let mean = x.column_means();
        let scale = x
            .column_stds()
            .into_iter()
            .map(|s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(dim_err("Standardizer::transform", self.mean.len(), x.cols()));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient of `½‖W‖²`, averaged per sample.
    pub l2: f64,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-2,
            l2: 1e-4,
            standardize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub standardizer: Standardizer,
    /// D × K
    pub weights: Matrix,
    /// 1 × K
    pub bias: Matrix,
}

impl LogisticRegression {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, cfg: &LogisticConfig) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(dim_err("LogisticRegression::fit", x.rows(), labels.len()));
        }
        if n_classes < 2 || x.rows() == 0 || cfg.batch_size == 0 {
            return Err(VeilError::InvalidArgument(
                "logistic regression needs rows, a positive batch size and at least two classes".into(),
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(VeilError::InvalidArgument(format!("label {l} outside 0..{n_classes}")));
        }
        let standardizer = if cfg.standardize {
            Standardizer::fit(x)
        } else {
            Standardizer::identity(x.cols())
        };
        let xs = standardizer.transform(x)?;
        let mut model = Self {
            standardizer,
            weights: Matrix::zeros(x.cols(), n_classes),
            bias: Matrix::zeros(1, n_classes),
        };
        let mut rng = Rng::derive(cfg.seed, 0x109);
        let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoments, cfg.learning_rate);
        let n = x.rows();
        for _ in 0..cfg.epochs {
            let perm = rng.permutation(n);
            for chunk in perm.chunks(cfg.batch_size) {
                let xb = xs.select_rows(chunk);
                let lb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let mut logits = xb.matmul(&model.weights)?;
                logits.add_row_vector(model.bias.data())?;
                let lg = cross_entropy_loss(&lb, &logits)?;
                let mut gw = xb.t_matmul(&lg.grad)?;
                gw.add_scaled(&model.weights, cfg.l2)?;
                let gb = Matrix::new(1, n_classes, lg.grad.column_sums())?;
                opt.step(&mut [&mut model.weights, &mut model.bias], &[gw, gb])?;
            }
        }
        if !model.weights.is_finite() {
            return Err(VeilError::NonFinite("logistic regression weights diverged".into()));
        }
        Ok(model)
    }

    pub fn n_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let xs = self.standardizer.transform(x)?;
        let mut out = xs.matmul(&self.weights)?;
        out.add_row_vector(self.bias.data())?;
        Ok(out)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    /// Arg-max class, smallest index on ties.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.logits(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.rows() {
            return Err(dim_err("LogisticRegression::accuracy", x.rows(), labels.len()));
        }
        let pred = self.predict(x)?;
        Ok(accuracy(&pred, labels))
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Least squares with an intercept and optional ridge penalty, solved in
/// closed form on centered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegression {
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    /// D × q
    pub coef: Matrix,
}

impl LinearRegression {
    pub fn fit(x: &Matrix, y: &Matrix, ridge: f64) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(dim_err("LinearRegression::fit", x.rows(), y.rows()));
        }
        if !(ridge >= 0.0) || x.rows() < 2 {
            return Err(VeilError::InvalidArgument(
                "linear regression needs two rows and a non-negative ridge".into(),
            ));
        }
        let x_mean = x.column_means();
        let y_mean = y.column_means();
        let xc = center(x, &x_mean);
        let yc = center(y, &y_mean);
        let mut gram = xc.t_matmul(&xc)?;
        // a tiny jitter keeps rank-deficient designs (dead latent units) solvable
        let jitter = ridge.max(1e-9 * (1.0 + gram.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        for i in 0..gram.rows() {
            gram.set(i, i, gram.get(i, i) + jitter);
        }
        let coef = cholesky_solve(&gram, &xc.t_matmul(&yc)?)?;
        Ok(Self { x_mean, y_mean, coef })
    }

    pub fn input_dim(&self) -> usize {
        self.coef.rows()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.x_mean.len() {
            return Err(dim_err("LinearRegression::predict", self.x_mean.len(), x.cols()));
        }
        let mut out = center(x, &self.x_mean).matmul(&self.coef)?;
        out.add_row_vector(&self.y_mean)?;
        Ok(out)
    }

    /// Pooled R² over all target columns.
    pub fn r2(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        let pred = self.predict(x)?;
        pooled_r2(y, &pred)
    }
}

/// `1 − ΣSS_res / ΣSS_tot` summed over target columns.
pub fn pooled_r2(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    y.same_shape(y_hat, "pooled_r2")?;
    let means = y.column_means();
    let mut res = 0.0;
    let mut tot = 0.0;
    for r in 0..y.rows() {
        for c in 0..y.cols() {
            let v = y.get(r, c);
            res += (v - y_hat.get(r, c)).powi(2);
            tot += (v - means[c]).powi(2);
        }
    }
    if tot <= 0.0 {
        return Err(VeilError::InvalidArgument("R² undefined for constant targets".into()));
    }
    Ok(1.0 - res / tot)
}

fn center(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    out
}

/// A fitted downstream model as served behind the trust boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DownstreamModel {
    Logistic(LogisticRegression),
    Linear(LinearRegression),
}

impl DownstreamModel {
    pub fn input_dim(&self) -> usize {
        match self {
            DownstreamModel::Logistic(m) => m.input_dim(),
            DownstreamModel::Linear(m) => m.input_dim(),
        }
    }

    /// Class probabilities or regression outputs, one row per input row.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            DownstreamModel::Logistic(m) => m.predict_proba(x),
            DownstreamModel::Linear(m) => m.predict(x),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
