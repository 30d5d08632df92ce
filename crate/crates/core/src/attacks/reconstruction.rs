//! Learned inversion: an MLP decoder trained on paired (latent, raw) rows and
//! scored on held-out rows against mean/mode baselines.

use serde::{Deserialize, Serialize};

use super::permutation::{permutation_p_value, PermutationTest};
use super::{AttackKind, AttackReport};
use crate::data::ColumnKind;
use crate::downstream::Standardizer;
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::nn::{Activation, Mlp, Optimizer, OptimizerKind};
use crate::numeric::{stats, Matrix, Rng};

pub const MIN_RECONSTRUCTION_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    /// Decoder hidden widths; `[2E, 2E]` when unset.
    pub hidden: Option<Vec<usize>>,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub test_fraction: f64,
    /// Share of the training rows held back for early stopping.
    pub validation_fraction: f64,
    pub permutation: PermutationTest,
    pub practical_threshold: f64,
    pub seed: u64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            epochs: 200,
            patience: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            test_fraction: 0.25,
            validation_fraction: 0.2,
            permutation: PermutationTest::fixed(20),
            practical_threshold: super::PRACTICAL_THRESHOLD,
            seed: 0,
        }
    }
}

struct Split {
    fit: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

/// Per-column targets in training units: numeric columns standardized with
/// training statistics, binary columns left as 0/1.
struct TargetScaler {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl TargetScaler {
    fn fit(x: &Matrix, kinds: &[ColumnKind]) -> Self {
        let s = Standardizer::fit(x);
        let (mut mean, mut scale) = (s.mean, s.scale);
        for (c, k) in kinds.iter().enumerate() {
            if *k == ColumnKind::Binary {
                mean[c] = 0.0;
                scale[c] = 1.0;
            }
        }
        Self { mean, scale }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Standardizer {
            mean: self.mean.clone(),
            scale: self.scale.clone(),
        }
        .transform(x)
    }

    fn inverse(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
        out
    }
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.data().len().max(1) as f64
}

/// Trains a decoder with early stopping; returns the best-validation weights.
fn fit_decoder(z_fit: &Matrix, x_fit: &Matrix, z_val: &Matrix, x_val: &Matrix, widths: &[usize], cfg: &ReconstructionConfig, seed: u64) -> Result<Mlp> {
    let mut rng = Rng::derive(seed, 0xdec);
    let mut net = Mlp::new(widths, Activation::Relu, Activation::Identity, &mut rng);
    let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoments, cfg.learning_rate);
    let mut best = net.clone();
    let mut best_loss = mse(&net.forward(z_val)?, x_val);
    let mut stale = 0;
    let n = z_fit.rows();
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let zb = z_fit.select_rows(chunk);
            let xb = x_fit.select_rows(chunk);
            let outs = net.forward_cached(&zb)?;
            let pred = outs.last().expect("decoder has layers");
            let scale = 2.0 / (pred.rows() * pred.cols()) as f64;
            let grad = pred.sub(&xb)?.scale(scale);
            let grads = Mlp::flatten_grads(net.backward(&zb, &outs, &grad)?);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(VeilError::NonFinite("reconstruction decoder gradient".into()));
            }
            opt.step(&mut net.params_mut(), &grads)?;
        }
        let loss = mse(&net.forward(z_val)?, x_val);
        if loss < best_loss {
            best_loss = loss;
            best = net.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// Per-column (score, baseline) on held-out rows.
fn score_columns(pred: &Matrix, x: &Matrix, train: &Matrix, kinds: &[ColumnKind]) -> Vec<(f64, f64)> {
    let means = train.column_means();
    (0..x.cols())
        .map(|c| {
            let truth = x.col_values(c);
            let guess = pred.col_values(c);
            match kinds[c] {
                ColumnKind::Numeric => {
                    let base: f64 = truth.iter().map(|t| (t - means[c]).powi(2)).sum();
                    let model: f64 = truth.iter().zip(&guess).map(|(t, g)| (t - g).powi(2)).sum();
                    let score = if base > 0.0 { 1.0 - model / base } else { 0.0 };
                    (score, 0.0)
                }
                ColumnKind::Binary => {
                    let ones = train.col_values(c).iter().filter(|&&v| v >= 0.5).count();
                    let mode = if 2 * ones >= train.rows() { 1.0 } else { 0.0 };
                    let hit = |p: f64, t: &f64| f64::from(p == *t);
                    let acc = truth.iter().zip(&guess).map(|(t, g)| hit(if *g >= 0.5 { 1.0 } else { 0.0 }, t)).sum::<f64>() / truth.len() as f64;
                    let base = truth.iter().map(|t| hit(mode, t)).sum::<f64>() / truth.len() as f64;
                    (acc, base)
                }
            }
        })
        .collect()
}

struct Prepared {
    z_fit: Matrix,
    z_val: Matrix,
    z_test: Matrix,
    t_fit: Matrix,
    t_val: Matrix,
    x_train: Matrix,
    x_test: Matrix,
    scaler: TargetScaler,
    widths: Vec<usize>,
}

fn split(n: usize, cfg: &ReconstructionConfig) -> Split {
    let mut rng = Rng::derive(cfg.seed, 0x5b1);
    let order = rng.permutation(n);
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).clamp(1, n - 2);
    let (test, train) = order.split_at(n_test);
    let n_val = ((train.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, train.len() - 1);
    let (val, fit) = train.split_at(n_val);
    Split {
        fit: fit.to_vec(),
        val: val.to_vec(),
        test: test.to_vec(),
    }
}

fn prepare(latents: &Matrix, x: &Matrix, kinds: &[ColumnKind], cfg: &ReconstructionConfig) -> Result<Prepared> {
    let s = split(latents.rows(), cfg);
    let train_rows: Vec<usize> = s.fit.iter().chain(&s.val).copied().collect();
    let zs = Standardizer::fit(&latents.select_rows(&train_rows));
    let x_train = x.select_rows(&train_rows);
    let scaler = TargetScaler::fit(&x_train, kinds);
    let e = latents.cols();
    let hidden = cfg.hidden.clone().unwrap_or_else(|| vec![2 * e, 2 * e]);
    let mut widths = vec![e];
    widths.extend(hidden);
    widths.push(x.cols());
    Ok(Prepared {
        z_fit: zs.transform(&latents.select_rows(&s.fit))?,
        z_val: zs.transform(&latents.select_rows(&s.val))?,
        z_test: zs.transform(&latents.select_rows(&s.test))?,
        t_fit: scaler.forward(&x.select_rows(&s.fit))?,
        t_val: scaler.forward(&x.select_rows(&s.val))?,
        x_train,
        x_test: x.select_rows(&s.test),
        scaler,
        widths,
    })
}

impl Prepared {
    fn evaluate(&self, net: &Mlp, kinds: &[ColumnKind]) -> Result<Vec<(f64, f64)>> {
        let pred = self.scaler.inverse(&net.forward(&self.z_test)?);
        Ok(score_columns(&pred, &self.x_test, &self.x_train, kinds))
    }
}

fn advantage(cols: &[(f64, f64)]) -> f64 {
    cols.iter().map(|(s, b)| s - b).sum::<f64>() / cols.len() as f64
}

/// Decoder-based inversion attack. Numeric columns are scored by
/// `1 − MSE/MSE(mean)`, binary columns by accuracy against the mode; the
/// overall advantage is the column-count-weighted mean. The null
/// distribution retrains the decoder on correspondence-shuffled pairs.
pub fn reconstruction_attack(latents: &Matrix, x_raw: &Matrix, kinds: &[ColumnKind], cfg: &ReconstructionConfig) -> Result<AttackReport> {
    let n = latents.rows();
    if x_raw.rows() != n {
        return Err(dim_err("reconstruction_attack rows", n, x_raw.rows()));
    }
    if kinds.len() != x_raw.cols() {
        return Err(dim_err("reconstruction_attack feature kinds", x_raw.cols(), kinds.len()));
    }
    if n < MIN_RECONSTRUCTION_ROWS {
        return Err(VeilError::InvalidArgument(format!(
            "reconstruction attack needs at least {MIN_RECONSTRUCTION_ROWS} paired rows, got {n}"
        )));
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0 && cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(VeilError::InvalidArgument("test and validation fractions must lie in (0, 1)".into()));
    }
    latents.ensure_finite("latents")?;
    x_raw.ensure_finite("raw features")?;
    let p = prepare(latents, x_raw, kinds, cfg)?;
    let net = fit_decoder(&p.z_fit, &p.t_fit, &p.z_val, &p.t_val, &p.widths, cfg, cfg.seed)?;
    let cols = p.evaluate(&net, kinds)?;
    let observed = cols.iter().map(|c| c.0).sum::<f64>() / cols.len() as f64;
    let baseline = cols.iter().map(|c| c.1).sum::<f64>() / cols.len() as f64;
    let per_col: Vec<f64> = cols.iter().map(|(s, b)| s - b).collect();
    let obs_adv = advantage(&cols);
    log::info!("reconstruction advantage {obs_adv:.4} over {} held-out rows", p.x_test.rows());

    let perm = permutation_p_value(
        obs_adv,
        |i| {
            let mut rng = Rng::derive(cfg.seed, 0x9e00 + i as u64);
            let shuffle = |z: &Matrix, rng: &mut Rng| z.select_rows(&rng.permutation(z.rows()));
            let z_fit = shuffle(&p.z_fit, &mut rng);
            let z_val = shuffle(&p.z_val, &mut rng);
            let net = fit_decoder(&z_fit, &p.t_fit, &z_val, &p.t_val, &p.widths, cfg, cfg.seed ^ (0x51 + i as u64))?;
            Ok(advantage(&p.evaluate(&net, kinds)?))
        },
        &cfg.permutation,
    )?;
    let mut report = AttackReport::new(
        AttackKind::Reconstruction,
        "mlp_decoder",
        "weighted_reconstruction_score",
        observed,
        baseline,
        stats::sample_std(&per_col),
        &perm,
        cfg.practical_threshold,
        false,
        n,
    );
    report.config = serde_json::to_value(cfg)?;
    Ok(report)
}
