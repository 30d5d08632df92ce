//! Preconditions of the non-invertibility argument, checked on a concrete
//! artifact and a sample of its inputs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VeilError};
use crate::numeric::pca::effective_dimensionality;
use crate::numeric::Matrix;
use crate::scrae::artifact::{from_bytes_unvalidated, read_header, to_bytes};
use crate::scrae::{encode_batch, EncoderModel};

pub const EFFECTIVE_DIM_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralCheckReport {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub compression_ok: bool,
    pub operator_whitelist_ok: bool,
    pub unknown_operators: Vec<String>,
    pub effective_dim: usize,
    pub effective_dim_ok: bool,
    /// Distinct input rows whose 32-bit latents coincide with an earlier row.
    pub duplicate_latents: usize,
    /// Input rows that exactly repeat an earlier row (their latents trivially
    /// repeat and are not counted above).
    pub duplicate_inputs: usize,
}

impl StructuralCheckReport {
    pub fn passed(&self) -> bool {
        self.compression_ok && self.operator_whitelist_ok && self.effective_dim_ok && self.duplicate_latents == 0
    }
}

/// Audits a serialized artifact. Artifacts that break the architectural
/// rules still load here so the report can say which rule failed.
pub fn structural_check(artifact: &[u8], x_sample: &Matrix) -> Result<StructuralCheckReport> {
    let header = read_header(artifact)?;
    let model = from_bytes_unvalidated(artifact)?;
    let unknown = header.unknown_operators();
    check(&model, unknown, x_sample)
}

pub fn structural_check_model(model: &EncoderModel, x_sample: &Matrix) -> Result<StructuralCheckReport> {
    structural_check(&to_bytes(model)?, x_sample)
}

fn check(model: &EncoderModel, unknown_operators: Vec<String>, x: &Matrix) -> Result<StructuralCheckReport> {
    let d = model.spec.input_dim;
    let e = model.spec.latent_dim();
    if x.cols() != d {
        return Err(crate::error::dim_err("structural_check", d, x.cols()));
    }
    if x.rows() < 2 {
        return Err(VeilError::InvalidArgument("structural check needs at least two sample rows".into()));
    }
    let effective_dim = effective_dimensionality(x, EFFECTIVE_DIM_THRESHOLD)?;
    let latents = encode_batch(model, x)?;
    let key = |v: &[f32]| -> Vec<u32> { v.iter().map(|f| if *f == 0.0 { 0 } else { f.to_bits() }).collect() };
    let mut seen_latent: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut seen_input: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut duplicate_latents = 0;
    let mut duplicate_inputs = 0;
    for r in 0..x.rows() {
        let xin: Vec<u64> = x.row(r).iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect();
        if seen_input.insert(xin, r).is_some() {
            duplicate_inputs += 1;
            continue;
        }
        if seen_latent.insert(key(latents.row(r)), r).is_some() {
            duplicate_latents += 1;
        }
    }
    if duplicate_latents > 0 {
        log::warn!("{duplicate_latents} distinct inputs share a 32-bit latent with an earlier row");
    }
    Ok(StructuralCheckReport {
        input_dim: d,
        latent_dim: e,
        compression_ok: e < d,
        operator_whitelist_ok: unknown_operators.is_empty(),
        unknown_operators,
        effective_dim,
        effective_dim_ok: effective_dim > e,
        duplicate_latents,
        duplicate_inputs,
    })
}
