//! The JSON run configuration. Parsing is strict: unknown keys anywhere are
//! an error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::{CsvSchema, Task};
use crate::attacks::{AttributeConfig, MembershipConfig, ReconstructionConfig};
use crate::downstream::LogisticConfig;
use crate::error::{Result, VeilError};
use crate::numeric::nn::Activation;
use crate::scrae::{EncoderSpec, Head, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Target column; optional only for commands that never read it.
    #[serde(default)]
    pub target: Option<String>,
    pub task: Task,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Seed of the train/validation shuffle; the run seed when unset.
    #[serde(default)]
    pub split_seed: Option<u64>,
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub decoder_widths: Option<Vec<usize>>,
}

/// Model fitted on the exported latents after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamConfig {
    pub logistic: LogisticConfig,
    /// Ridge penalty of the linear model used for regression targets.
    pub ridge: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            logistic: LogisticConfig::default(),
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSettings {
    pub reconstruction: ReconstructionConfig,
    pub attribute: AttributeConfig,
    pub membership: MembershipConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    /// Address the inference service binds.
    pub listen: String,
    /// Address the source service dials.
    pub inference: String,
    /// Trusted-side address where the source service takes raw records.
    pub local: String,
    pub audit_log: Option<PathBuf>,
    pub latent_store: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7070".into(),
            inference: "127.0.0.1:7070".into(),
            local: "127.0.0.1:7071".into(),
            audit_log: None,
            latent_store: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When set, drives every nested seed.
    #[serde(default)]
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub downstream: DownstreamConfig,
    #[serde(default)]
    pub attacks: AttackSettings,
    #[serde(default)]
    pub serve: ServeConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| VeilError::Config(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VeilError::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    /// Applies a seed override and fills every derived field, so the result
    /// alone reproduces the run.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Self {
        if seed_override.is_some() {
            self.seed = seed_override;
        }
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.attacks.reconstruction.seed = s;
            self.attacks.attribute.seed = s;
            self.attacks.membership.seed = s;
            self.downstream.logistic.seed = s;
        }
        if self.data.split_seed.is_none() {
            self.data.split_seed = Some(self.train.seed);
        }
        self
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            target: self.data.target.clone(),
            task: self.data.task,
        }
    }

    pub fn encoder_spec(&self, input_dim: usize, n_classes: usize) -> EncoderSpec {
        let head = match self.data.task {
            Task::Classification => Head::Classifier { classes: n_classes },
            Task::Regression => Head::Regressor { dim: 1 },
        };
        EncoderSpec {
            input_dim,
            widths: self.encoder.widths.clone(),
            activation: self.encoder.activation,
            head,
            decoder_widths: self.encoder.decoder_widths.clone(),
        }
    }

    /// Every violated constraint, including those that need the data shape.
    pub fn violations(&self, spec: Option<&EncoderSpec>) -> Vec<String> {
        let mut v = Vec::new();
        let f = self.data.validation_fraction;
        if !(f > 0.0 && f < 1.0) {
            v.push(format!("data.validation_fraction must be in (0, 1) (got {f})"));
        }
        if self.encoder.widths.is_empty() {
            v.push("encoder.widths must not be empty".into());
        }
        if let Some(spec) = spec {
            v.extend(spec.violations().into_iter().map(|m| format!("encoder: {m}")));
        }
        v.extend(self.train.violations(spec).into_iter().map(|m| format!("train: {m}")));
        if !(self.downstream.ridge >= 0.0 && self.downstream.ridge.is_finite()) {
            v.push(format!("downstream.ridge must be a finite non-negative number (got {})", self.downstream.ridge));
        }
        for (name, p) in [
            ("attacks.reconstruction", &self.attacks.reconstruction.permutation),
            ("attacks.attribute", &self.attacks.attribute.permutation),
            ("attacks.membership", &self.attacks.membership.permutation),
        ] {
            if let Err(e) = p.validate() {
                v.push(format!("{name}.permutation: {e}"));
            }
        }
        v
    }

    pub fn validate(&self, spec: Option<&EncoderSpec>) -> Result<()> {
        let v = self.violations(spec);
        if v.is_empty() {
            Ok(())
        } else {
            Err(VeilError::Config(v))
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
