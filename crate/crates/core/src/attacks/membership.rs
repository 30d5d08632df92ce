//! Membership inference against a downstream classifier trained on latents.
//!
//! Rows are split 60/20/20 (stratified) into downstream members, attack-train
//! non-members and attack-test non-members. Members are halved to give
//! balanced attack-train and attack-test sets.

use serde::{Deserialize, Serialize};

use super::permutation::{permutation_p_value, PermutationTest};
use super::{AttackKind, AttackReport};
use crate::data::{Dataset, Targets};
use crate::downstream::{LogisticConfig, LogisticRegression};
use crate::error::{Result, VeilError};
use crate::numeric::{stats, Matrix, Rng};
use crate::scrae::EncoderModel;

pub const MIN_MEMBERSHIP_ROWS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MembershipConfig {
    /// Equal-frequency bins for continuous targets.
    pub quantile_bins: usize,
    pub member_fraction: f64,
    pub attack_train_fraction: f64,
    /// Keep at most this many members for the downstream fit.
    pub member_cap: Option<usize>,
    pub downstream: LogisticConfig,
    pub attack: LogisticConfig,
    pub permutation: PermutationTest,
    pub practical_threshold: f64,
    pub seed: u64,
}

impl Default for MembershipConfig {
    fn default() -> Self {
        Self {
            quantile_bins: 4,
            member_fraction: 0.6,
            attack_train_fraction: 0.2,
            member_cap: None,
            downstream: LogisticConfig::default(),
            attack: LogisticConfig::default(),
            permutation: PermutationTest::default(),
            practical_threshold: super::PRACTICAL_THRESHOLD,
            seed: 0,
        }
    }
}

/// Rank-based equal-frequency bins; ties broken by row index.
pub(crate) fn quantile_labels(y: &[f64], bins: usize) -> Vec<usize> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Split {
    members: Vec<usize>,
    attack_train: Vec<usize>,
    attack_test: Vec<usize>,
}

fn stratified_split(labels: &[usize], classes: usize, cfg: &MembershipConfig) -> Split {
    let mut rng = Rng::derive(cfg.seed, 0x3e3b);
    let mut s = Split {
        members: vec![],
        attack_train: vec![],
        attack_test: vec![],
    };
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut idx);
        let m = (idx.len() as f64 * cfg.member_fraction).round() as usize;
        let a = (idx.len() as f64 * cfg.attack_train_fraction).round() as usize;
        let a_end = (m + a).min(idx.len());
        s.members.extend_from_slice(&idx[..m]);
        s.attack_train.extend_from_slice(&idx[m..a_end]);
        s.attack_test.extend_from_slice(&idx[a_end..]);
    }
    for v in [&mut s.members, &mut s.attack_train, &mut s.attack_test] {
        rng.shuffle(v);
    }
    s
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `(true-label loss, true-class confidence, entropy, margin)`.
fn label_informed(p: &[f64], y: usize) -> [f64; 4] {
    let others = p.iter().enumerate().filter(|(k, _)| *k != y).fold(0.0f64, |m, (_, v)| m.max(*v));
    [-p[y].max(1e-12).ln(), p[y], entropy(p), p[y] - others]
}

/// `(max probability, entropy, top-1 minus top-2)`.
fn black_box(p: &[f64]) -> [f64; 3] {
    let mut s = p.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    [s[0], entropy(p), s[0] - s.get(1).copied().unwrap_or(0.0)]
}

/// Rows of the balanced attack sets and their member flags.
struct AttackSets {
    train: Vec<usize>,
    train_member: Vec<usize>,
    test: Vec<usize>,
    test_member: Vec<bool>,
}

fn balance(members: &[usize], split: &Split) -> Result<AttackSets> {
    let half = members.len() / 2;
    let (ma, mt) = members.split_at(half);
    let n_train = ma.len().min(split.attack_train.len());
    let n_test = mt.len().min(split.attack_test.len());
    if n_train < 2 || n_test < 2 {
        return Err(VeilError::InvalidArgument("membership split leaves too few rows for balanced attack sets".into()));
    }
    let train: Vec<usize> = ma[..n_train].iter().chain(&split.attack_train[..n_train]).copied().collect();
    let test: Vec<usize> = mt[..n_test].iter().chain(&split.attack_test[..n_test]).copied().collect();
    Ok(AttackSets {
        train_member: (0..2 * n_train).map(|i| usize::from(i < n_train)).collect(),
        test_member: (0..2 * n_test).map(|i| i < n_test).collect(),
        train,
        test,
    })
}

fn features(probs: &Matrix, labels: &[usize], rows: &[usize], informed: bool) -> Matrix {
    let width = if informed { 4 } else { 3 };
    let mut out = Matrix::zeros(rows.len(), width);
    for (o, &i) in rows.iter().enumerate() {
        let p = probs.row(i);
        if informed {
            out.row_mut(o).copy_from_slice(&label_informed(p, labels[i]));
        } else {
            out.row_mut(o).copy_from_slice(&black_box(p));
        }
    }
    out
}

fn run_variant(variant: &str, probs: &Matrix, labels: &[usize], sets: &AttackSets, informed: bool, degenerate: bool, cfg: &MembershipConfig) -> Result<AttackReport> {
    let xtr = features(probs, labels, &sets.train, informed);
    let xte = features(probs, labels, &sets.test, informed);
    let truth: Vec<usize> = sets.test_member.iter().map(|&m| usize::from(m)).collect();
    let clf = LogisticRegression::fit(&xtr, &sets.train_member, 2, &cfg.attack)?;
    let accuracy = clf.accuracy(&xte, &truth)?;
    let member_score = clf.predict_proba(&xte)?.col_values(1);
    let auc = stats::roc_auc(&member_score, &sets.test_member);
    let perm = permutation_p_value(
        accuracy,
        |i| {
            // membership flags are exchangeable across both attack sets under
            // the null, so the test-side assignment is shuffled too
            let mut rng = Rng::derive(cfg.seed, 0x3e00 + i as u64);
            let mut flags: Vec<usize> = sets.train_member.iter().chain(&truth).copied().collect();
            rng.shuffle(&mut flags);
            let (ftr, fte) = flags.split_at(xtr.rows());
            LogisticRegression::fit(&xtr, ftr, 2, &cfg.attack)?.accuracy(&xte, fte)
        },
        &cfg.permutation,
    )?;
    let n = xte.rows() as f64;
    let mut r = AttackReport::new(
        AttackKind::Membership,
        variant,
        "attack_accuracy",
        accuracy,
        0.5,
        (accuracy * (1.0 - accuracy) / n).sqrt(),
        &perm,
        cfg.practical_threshold,
        degenerate,
        sets.train.len() + sets.test.len(),
    );
    r.auc = auc;
    Ok(r)
}

fn all_rows_identical(probs: &Matrix, rows: &[usize]) -> bool {
    let first = probs.row(rows[0]);
    rows.iter().all(|&i| probs.row(i).iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-12))
}

fn attack(probs: &Matrix, labels: &[usize], members: &[usize], split: &Split, cfg: &MembershipConfig) -> Result<AttackReport> {
    let sets = balance(members, split)?;
    let queried: Vec<usize> = sets.train.iter().chain(&sets.test).copied().collect();
    let degenerate = all_rows_identical(probs, &queried);
    if degenerate {
        log::warn!("membership attack: every queried probability vector is identical");
    }
    let mut primary = run_variant("label_informed", probs, labels, &sets, true, degenerate, cfg)?;
    primary.sub_reports.push(run_variant("black_box", probs, labels, &sets, false, degenerate, cfg)?);
    Ok(primary)
}

/// Label-informed membership attack with the black-box variant attached as
/// a sub-report. Continuous targets are binned by quantile; class labels are
/// used as they are.
pub fn membership_inference(dataset: &Dataset, encoder: &EncoderModel, cfg: &MembershipConfig) -> Result<AttackReport> {
    if dataset.len() < MIN_MEMBERSHIP_ROWS {
        return Err(VeilError::InvalidArgument(format!(
            "membership inference needs at least {MIN_MEMBERSHIP_ROWS} rows, got {}",
            dataset.len()
        )));
    }
    let f = (cfg.member_fraction, cfg.attack_train_fraction);
    if !(f.0 > 0.0 && f.1 > 0.0 && f.0 + f.1 < 1.0) || cfg.quantile_bins < 2 {
        return Err(VeilError::InvalidArgument("membership fractions must be positive and leave a test share; bins >= 2".into()));
    }
    let (labels, classes) = match &dataset.targets {
        Targets::Labels { labels, n_classes } => (labels.clone(), *n_classes),
        Targets::Values(y) => (quantile_labels(&y.col_values(0), cfg.quantile_bins), cfg.quantile_bins),
    };
    let z = encoder.bottleneck(&dataset.x)?;
    let split = stratified_split(&labels, classes, cfg);
    let mut members = split.members.clone();
    if let Some(cap) = cfg.member_cap {
        members.truncate(cap);
    }
    let member_labels: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
    let model = LogisticRegression::fit(&z.select_rows(&members), &member_labels, classes, &cfg.downstream)?;
    let probs = model.predict_proba(&z)?;
    let mut report = attack(&probs, &labels, &members, &split, cfg)?;
    report.config = serde_json::to_value(cfg)?;
    Ok(report)
}
