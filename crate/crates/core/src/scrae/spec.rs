use serde::{Deserialize, Serialize};

use crate::error::{Result, VeilError};
use crate::numeric::nn::Activation;

/// The supervised head fed by the multi-level latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Classifier { classes: usize },
    Regressor { dim: usize },
}

impl Head {
    pub fn output_dim(self) -> usize {
        match self {
            Head::Classifier { classes } => classes,
            Head::Regressor { dim } => dim,
        }
    }
}

/// Architecture of a dense multi-level encoder with its decoder, head and
/// 2-D projection head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub input_dim: usize,
    /// Encoder layer widths; the last one is the bottleneck.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    /// Hidden decoder widths between the bottleneck and the reconstruction.
    /// `None` mirrors the encoder.
    #[serde(default)]
    pub decoder_widths: Option<Vec<usize>>,
}

impl EncoderSpec {
    pub fn new(input_dim: usize, widths: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let spec = Self {
            input_dim,
            widths,
            activation,
            head,
            decoder_widths: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.widths.is_empty() {
            v.push("encoder needs at least one layer".into());
        }
        if self.widths.contains(&0) {
            v.push("encoder widths must be positive".into());
        }
        if let Some(&e) = self.widths.last() {
            if e >= self.input_dim {
                v.push(format!(
                    "bottleneck width E={e} must be strictly smaller than the input dimension D={}",
                    self.input_dim
                ));
            }
        }
        if self.activation == Activation::Identity {
            v.push("encoder activation must be relu or tanh".into());
        }
        match self.head {
            Head::Classifier { classes } if classes < 2 => v.push("classifier head needs at least 2 classes".into()),
            Head::Regressor { dim: 0 } => v.push("regressor head needs a positive output dimension".into()),
            _ => {}
        }
        if let Some(d) = &self.decoder_widths {
            if d.contains(&0) {
                v.push("decoder widths must be positive".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(VeilError::Config(v))
        }
    }

    /// Bottleneck width `E`.
    pub fn latent_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    /// Width of the concatenated multi-level latent.
    pub fn psi_dim(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn decoder_hidden(&self) -> Vec<usize> {
        match &self.decoder_widths {
            Some(d) => d.clone(),
            None => self.widths.iter().rev().skip(1).copied().collect(),
        }
    }
}
