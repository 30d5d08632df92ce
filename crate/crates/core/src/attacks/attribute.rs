//! Attribute inference: can a sensitive attribute be predicted from the
//! exported latents better than by guessing the majority class?

use serde::{Deserialize, Serialize};

use super::permutation::{permutation_p_value, PermutationTest};
use super::{AttackKind, AttackReport};
use crate::data::stratified_folds;
use crate::downstream::{argmax, LogisticConfig, LogisticRegression, Standardizer};
use crate::error::{dim_err, Result, VeilError};
use crate::numeric::matrix::sq_dist;
use crate::numeric::{stats, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributeConfig {
    pub folds: usize,
    pub permutation: PermutationTest,
    pub practical_threshold: f64,
    pub classifier: LogisticConfig,
    pub seed: u64,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            permutation: PermutationTest::default(),
            practical_threshold: super::PRACTICAL_THRESHOLD,
            classifier: LogisticConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy)]
enum Classifier {
    Logistic,
    NearestCentroid,
}

/// `(‖ψ‖₂, ‖ψ‖₁, max|ψ_e|)` per row.
fn magnitude_features(z: &Matrix) -> Matrix {
    Matrix::from_fn(z.rows(), 3, |r, c| {
        let row = z.row(r);
        match c {
            0 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            1 => row.iter().map(|v| v.abs()).sum(),
            _ => row.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    })
}

fn nearest_centroid(train: &Matrix, labels: &[usize], k: usize, test: &Matrix) -> Result<Vec<usize>> {
    let s = Standardizer::fit(train);
    let tr = s.transform(train)?;
    let te = s.transform(test)?;
    let mut centers = Matrix::zeros(k, tr.cols());
    let mut counts = vec![0usize; k];
    for (r, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (c, v) in centers.row_mut(l).iter_mut().zip(tr.row(r)) {
            *c += v;
        }
    }
    for (l, &n) in counts.iter().enumerate() {
        if n > 0 {
            centers.row_mut(l).iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(te
        .iter_rows()
        .map(|row| {
            let d: Vec<f64> = (0..k)
                .map(|l| if counts[l] > 0 { -sq_dist(row, centers.row(l)) } else { f64::NEG_INFINITY })
                .collect();
            argmax(&d)
        })
        .collect())
}

struct Folds {
    labels: Vec<usize>,
    classes: usize,
    folds: usize,
    seed: u64,
}

impl Folds {
    /// Per-fold held-out accuracy of `clf` on `features` against `labels`.
    fn accuracies(&self, features: &Matrix, labels: &[usize], clf: Classifier, cfg: &LogisticConfig) -> Result<Vec<f64>> {
        let mut rng = Rng::derive(self.seed, 0xf01d);
        let folds = stratified_folds(labels, self.classes, self.folds, &mut rng)?;
        let n = features.rows();
        let mut in_fold = vec![usize::MAX; n];
        for (f, idx) in folds.iter().enumerate() {
            idx.iter().for_each(|&i| in_fold[i] = f);
        }
        let mut out = Vec::with_capacity(self.folds);
        for (f, test) in folds.iter().enumerate() {
            let train: Vec<usize> = (0..n).filter(|&i| in_fold[i] != f).collect();
            let xtr = features.select_rows(&train);
            let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let xte = features.select_rows(test);
            let pred = match clf {
                Classifier::Logistic => LogisticRegression::fit(&xtr, &ytr, self.classes, cfg)?.predict(&xte)?,
                Classifier::NearestCentroid => nearest_centroid(&xtr, &ytr, self.classes, &xte)?,
            };
            let hits = pred.iter().zip(test).filter(|(p, &i)| **p == labels[i]).count();
            out.push(hits as f64 / test.len() as f64);
        }
        Ok(out)
    }
}

fn remap(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    let mapped = labels.iter().map(|l| seen.binary_search(l).expect("present")).collect();
    (mapped, seen.len())
}

fn run_variant(
    variant: &str,
    features: &Matrix,
    f: &Folds,
    clf: Classifier,
    baseline: f64,
    cfg: &AttributeConfig,
) -> Result<AttackReport> {
    let accs = f.accuracies(features, &f.labels, clf, &cfg.classifier)?;
    let observed = stats::mean(&accs);
    let perm = permutation_p_value(
        observed,
        |i| {
            let mut rng = Rng::derive(cfg.seed, 0xa770 + i as u64);
            let mut shuffled = f.labels.clone();
            rng.shuffle(&mut shuffled);
            Ok(stats::mean(&f.accuracies(features, &shuffled, clf, &cfg.classifier)?))
        },
        &cfg.permutation,
    )?;
    Ok(AttackReport::new(
        AttackKind::Attribute,
        variant,
        "cv_accuracy",
        observed,
        baseline,
        stats::sample_std(&accs),
        &perm,
        cfg.practical_threshold,
        false,
        features.rows(),
    ))
}

/// Stratified k-fold logistic attack on the latents, with the magnitude and
/// nearest-centroid attacks attached as sub-reports.
pub fn attribute_inference(latents: &Matrix, attribute: &[usize], cfg: &AttributeConfig) -> Result<AttackReport> {
    if attribute.len() != latents.rows() {
        return Err(dim_err("attribute_inference", latents.rows(), attribute.len()));
    }
    latents.ensure_finite("latents")?;
    let (labels, classes) = remap(attribute);
    if classes < 2 {
        return Err(VeilError::InvalidArgument("the attribute takes a single value; nothing to infer".into()));
    }
    let mut counts = vec![0usize; classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&n| n < cfg.folds) {
        return Err(VeilError::InvalidArgument(format!(
            "class-count check failed: attribute class {c} has {} rows but {} folds need at least one each",
            counts[c], cfg.folds
        )));
    }
    let baseline = *counts.iter().max().expect("non-empty") as f64 / labels.len() as f64;
    let f = Folds {
        labels,
        classes,
        folds: cfg.folds,
        seed: cfg.seed,
    };
    let mut primary = run_variant("logistic", latents, &f, Classifier::Logistic, baseline, cfg)?;
    let magnitude = run_variant("magnitude", &magnitude_features(latents), &f, Classifier::Logistic, baseline, cfg)?;
    let centroid = run_variant("nearest_centroid", latents, &f, Classifier::NearestCentroid, baseline, cfg)?;
    primary.sub_reports = vec![magnitude, centroid];
    primary.config = serde_json::to_value(cfg)?;
    Ok(primary)
}
