//! Model artifact: `VEILMDL1`, a little-endian u64 header length, a JSON
//! header, then raw little-endian f64 parameter blobs in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, TrainMeta};
use super::spec::EncoderSpec;
use crate::error::{Result, VeilError};
use crate::losses::ClassCenters;
use crate::numeric::Matrix;

pub const MODEL_MAGIC: &[u8; 8] = b"VEILMDL1";

/// Operators that keep the encoder a composition of continuous maps.
pub const OPERATOR_WHITELIST: [&str; 6] = ["affine", "relu", "tanh", "concat", "linear_head", "softmax"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactHeader {
    pub spec: EncoderSpec,
    pub meta: TrainMeta,
    pub operators: Vec<String>,
    pub blobs: Vec<BlobInfo>,
    /// Per-class observation counts when class centers are stored.
    #[serde(default)]
    pub center_counts: Option<Vec<u64>>,
}

impl ArtifactHeader {
    /// Operators outside the continuity whitelist.
    pub fn unknown_operators(&self) -> Vec<String> {
        self.operators
            .iter()
            .filter(|o| !OPERATOR_WHITELIST.contains(&o.as_str()))
            .cloned()
            .collect()
    }
}

pub fn to_bytes(model: &EncoderModel) -> Result<Vec<u8>> {
    let mut names = model.param_names();
    let mut mats: Vec<&Matrix> = model.params();
    if let Some(c) = &model.centers {
        names.push("centers".into());
        mats.push(&c.centers);
    }
    let header = ArtifactHeader {
        spec: model.spec.clone(),
        meta: model.meta.clone(),
        operators: model.operators(),
        blobs: names
            .into_iter()
            .zip(&mats)
            .map(|(name, m)| BlobInfo {
                name,
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
        center_counts: model.centers.as_ref().map(|c| c.counts.clone()),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * mats.iter().map(|m| m.data().len()).sum::<usize>());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for m in mats {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(ArtifactHeader, &[u8])> {
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(VeilError::Format("not a model artifact (bad magic)".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| VeilError::Format("header length exceeds file size".into()))?;
    let header: ArtifactHeader = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| VeilError::Format(format!("artifact header: {e}")))?;
    Ok((header, &bytes[end..]))
}

/// Parses only the header; unknown operators are reported, not rejected.
pub fn read_header(bytes: &[u8]) -> Result<ArtifactHeader> {
    Ok(split_header(bytes)?.0)
}

pub fn from_bytes(bytes: &[u8]) -> Result<EncoderModel> {
    let (header, body) = split_header(bytes)?;
    header
        .spec
        .validate()
        .map_err(|e| VeilError::Format(format!("artifact spec: {e}")))?;
    decode(header, body)
}

/// Loads an artifact whose spec may break the architectural rules (E >= D,
/// identity activation) so that those rules can be audited rather than
/// refused. Shapes must still be buildable.
pub(crate) fn from_bytes_unvalidated(bytes: &[u8]) -> Result<EncoderModel> {
    let (header, body) = split_header(bytes)?;
    let s = &header.spec;
    if s.widths.is_empty() || s.widths.contains(&0) || s.input_dim == 0 || s.head.output_dim() == 0 {
        return Err(VeilError::Format("artifact spec has no buildable encoder".into()));
    }
    if s.decoder_widths.as_ref().is_some_and(|d| d.contains(&0)) {
        return Err(VeilError::Format("artifact spec has a zero-width decoder layer".into()));
    }
    decode(header, body)
}

fn decode(header: ArtifactHeader, mut body: &[u8]) -> Result<EncoderModel> {
    let mut model = EncoderModel::zeros_unchecked(&header.spec);
    model.meta = header.meta.clone();
    let expected = model.param_names();
    let has_centers = header.center_counts.is_some();
    if header.blobs.len() != expected.len() + usize::from(has_centers) {
        return Err(VeilError::Format(format!(
            "artifact declares {} blobs, model needs {}",
            header.blobs.len(),
            expected.len() + usize::from(has_centers)
        )));
    }
    let mut read = |info: &BlobInfo| -> Result<Matrix> {
        let count = info.rows * info.cols;
        if body.len() < count * 8 {
            return Err(VeilError::Format(format!("truncated blob {}", info.name)));
        }
        let data = body[..count * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        body = &body[count * 8..];
        Matrix::new(info.rows, info.cols, data)
    };
    let mut loaded = Vec::with_capacity(header.blobs.len());
    for (info, name) in header.blobs.iter().zip(&expected) {
        if &info.name != name {
            return Err(VeilError::Format(format!("blob {} found where {name} was expected", info.name)));
        }
        loaded.push(read(info)?);
    }
    let centers = if let Some(counts) = &header.center_counts {
        let info = header.blobs.last().expect("counted above");
        let m = read(info)?;
        if m.rows() != counts.len() {
            return Err(VeilError::Format("center counts do not match center rows".into()));
        }
        Some(ClassCenters {
            centers: m,
            counts: counts.clone(),
        })
    } else {
        None
    };
    if !body.is_empty() {
        return Err(VeilError::Format(format!("{} trailing bytes after the last blob", body.len())));
    }
    for (slot, m) in model.params_mut().into_iter().zip(loaded) {
        if slot.shape() != m.shape() {
            return Err(VeilError::Format(format!(
                "blob shape {:?} does not match the spec's {:?}",
                m.shape(),
                slot.shape()
            )));
        }
        *slot = m;
    }
    model.centers = centers;
    Ok(model)
}

pub fn save_model(model: &EncoderModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EncoderModel> {
    from_bytes(&std::fs::read(path)?)
}
