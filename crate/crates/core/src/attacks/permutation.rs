//! Permutation p-values with the add-one estimator and gray-zone escalation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VeilError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PermutationTest {
    pub initial_permutations: usize,
    pub max_permutations: usize,
    /// Closed interval; an initial p inside it triggers the larger run.
    pub gray_zone: (f64, f64),
    pub escalate: bool,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            initial_permutations: 100,
            max_permutations: 1000,
            gray_zone: (0.01, 0.10),
            escalate: true,
        }
    }
}

impl PermutationTest {
    /// A fixed number of permutations with no escalation.
    pub fn fixed(permutations: usize) -> Self {
        Self {
            initial_permutations: permutations,
            max_permutations: permutations,
            escalate: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.gray_zone;
        if self.initial_permutations == 0
            || self.max_permutations < self.initial_permutations
            || !(0.0..=1.0).contains(&lo)
            || !(lo..=1.0).contains(&hi)
        {
            return Err(VeilError::InvalidArgument(format!("invalid permutation test {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub permutations_used: usize,
    pub null: Vec<f64>,
}

/// `(1 + #{null >= observed}) / (1 + n)`. A NaN null draw counts against the
/// observed statistic.
pub fn add_one_p(observed: f64, null: &[f64]) -> f64 {
    let hits = null.iter().filter(|&&v| v.is_nan() || v >= observed).count();
    (1 + hits) as f64 / (1 + null.len()) as f64
}

/// `null_sampler(i)` must be a deterministic function of the permutation
/// index `i`; escalation reuses the first draws and extends them.
pub fn permutation_p_value<F>(observed: f64, mut null_sampler: F, test: &PermutationTest) -> Result<PermutationOutcome>
where
    F: FnMut(usize) -> Result<f64>,
{
    test.validate()?;
    let mut null = Vec::with_capacity(test.initial_permutations);
    for i in 0..test.initial_permutations {
        null.push(null_sampler(i)?);
    }
    let mut p = add_one_p(observed, &null);
    let (lo, hi) = test.gray_zone;
    if test.escalate && test.max_permutations > null.len() && p >= lo && p <= hi {
        log::info!("permutation p={p:.4} in gray zone, extending to {}", test.max_permutations);
        for i in null.len()..test.max_permutations {
            null.push(null_sampler(i)?);
        }
        p = add_one_p(observed, &null);
    }
    Ok(PermutationOutcome {
        p_value: p,
        permutations_used: null.len(),
        null,
    })
}
