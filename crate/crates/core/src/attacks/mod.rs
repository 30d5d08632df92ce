//! Privacy attack harness: structural non-invertibility checks, a learned
//! reconstruction attack, attribute inference and membership inference,
//! each scored against a naive baseline with a permutation test.

mod attribute;
mod membership;
mod permutation;
mod reconstruction;
mod structural;

use serde::{Deserialize, Serialize};

pub use attribute::{attribute_inference, AttributeConfig};
pub use membership::{membership_inference, MembershipConfig};
pub use permutation::{add_one_p, permutation_p_value, PermutationOutcome, PermutationTest};
pub use reconstruction::{reconstruction_attack, ReconstructionConfig, MIN_RECONSTRUCTION_ROWS};
pub use structural::{structural_check, structural_check_model, StructuralCheckReport, EFFECTIVE_DIM_THRESHOLD};

/// Smallest advantage treated as practically meaningful.
pub const PRACTICAL_THRESHOLD: f64 = 0.02;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Reconstruction,
    Attribute,
    Membership,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoLeak,
    Leak,
    Inconclusive,
}

impl Verdict {
    /// Process exit code used for scripted gating.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::NoLeak => 0,
            Verdict::Leak => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

/// Leak only when the advantage is both practically large and significant.
pub fn decide(advantage: f64, p_value: f64, practical_threshold: f64, degenerate: bool) -> Verdict {
    if degenerate || !advantage.is_finite() || !p_value.is_finite() {
        Verdict::Inconclusive
    } else if advantage > practical_threshold && p_value < SIGNIFICANCE {
        Verdict::Leak
    } else {
        Verdict::NoLeak
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack: AttackKind,
    /// Which variant of the attack produced this report.
    pub variant: String,
    pub metric_name: String,
    pub observed: f64,
    pub baseline: f64,
    pub advantage: f64,
    pub std_dev: f64,
    pub p_value: f64,
    pub permutations_used: usize,
    pub verdict: Verdict,
    pub practical_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(default)]
    pub degenerate: bool,
    pub rows: usize,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_reports: Vec<AttackReport>,
}

impl AttackReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        attack: AttackKind,
        variant: &str,
        metric_name: &str,
        observed: f64,
        baseline: f64,
        std_dev: f64,
        perm: &PermutationOutcome,
        practical_threshold: f64,
        degenerate: bool,
        rows: usize,
    ) -> Self {
        let advantage = observed - baseline;
        Self {
            attack,
            variant: variant.into(),
            metric_name: metric_name.into(),
            observed,
            baseline,
            advantage,
            std_dev,
            p_value: perm.p_value,
            permutations_used: perm.permutations_used,
            verdict: decide(advantage, perm.p_value, practical_threshold, degenerate),
            practical_threshold,
            auc: None,
            degenerate,
            rows,
            config: serde_json::Value::Null,
            sub_reports: Vec::new(),
        }
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_needs_both_conditions() {
        assert_eq!(decide(0.03, 0.01, 0.02, false), Verdict::Leak);
        assert_eq!(decide(0.03, 0.06, 0.02, false), Verdict::NoLeak);
        assert_eq!(decide(0.01, 0.001, 0.02, false), Verdict::NoLeak);
        assert_eq!(decide(0.02, 0.001, 0.02, false), Verdict::NoLeak);
        assert_eq!(decide(0.5, 0.05, 0.02, false), Verdict::NoLeak);
        assert_eq!(decide(0.5, 0.001, 0.02, true), Verdict::Inconclusive);
        assert_eq!(decide(f64::NAN, 0.001, 0.02, false), Verdict::Inconclusive);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::NoLeak.exit_code(), 0);
        assert_eq!(Verdict::Leak.exit_code(), 2);
        assert_eq!(Verdict::Inconclusive.exit_code(), 3);
    }

    #[test]
    fn paper_reported_runs_map_to_their_verdicts() {
        assert_eq!(decide(-0.0003, 0.4706, PRACTICAL_THRESHOLD, false), Verdict::NoLeak);
        assert_eq!(decide(0.6907 - 0.5542, 0.0099, PRACTICAL_THRESHOLD, false), Verdict::Leak);
        assert_eq!(decide(0.5012 - 0.5, 0.4356, PRACTICAL_THRESHOLD, false), Verdict::NoLeak);
    }
}
