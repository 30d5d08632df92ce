//! On-disk latent batches: `"ICAL"`, then u32 LE version, rows, latent dim
//! and flags, then row-major f32 LE latents and optional f64 LE targets.

use std::path::Path;

use crate::error::{Result, VeilError};
use crate::scrae::LatentBatch;

pub const MAGIC: &[u8; 4] = b"ICAL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
const FLAG_TARGETS: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatchFile {
    pub latents: LatentBatch,
    pub targets: Option<Vec<f64>>,
}

impl LatentBatchFile {
    pub fn new(latents: LatentBatch, targets: Option<Vec<f64>>) -> Result<Self> {
        if let Some(t) = &targets {
            if t.len() != latents.rows {
                return Err(crate::error::dim_err("LatentBatchFile targets", latents.rows, t.len()));
            }
        }
        if u32::try_from(latents.rows).is_err() || u32::try_from(latents.dim).is_err() {
            return Err(VeilError::InvalidArgument("latent batch too large for a u32 header".into()));
        }
        Ok(Self { latents, targets })
    }

    pub fn expected_len(rows: usize, dim: usize, targets: bool) -> usize {
        HEADER_LEN + 4 * rows * dim + if targets { 8 * rows } else { 0 }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let l = &self.latents;
        let mut out = Vec::with_capacity(Self::expected_len(l.rows, l.dim, self.targets.is_some()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(l.rows as u32).to_le_bytes());
        out.extend_from_slice(&(l.dim as u32).to_le_bytes());
        let flags = if self.targets.is_some() { FLAG_TARGETS } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        for v in &l.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.targets.iter().flatten() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(VeilError::Format(format!("latent file is {} bytes, shorter than its header", b.len())));
        }
        if &b[..4] != MAGIC {
            return Err(VeilError::Format("not a latent batch file (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(b[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let (version, rows, dim, flags) = (word(1), word(2) as usize, word(3) as usize, word(4));
        if version != VERSION {
            return Err(VeilError::Format(format!("unsupported latent file version {version}")));
        }
        if flags & !FLAG_TARGETS != 0 {
            return Err(VeilError::Format(format!("unknown latent file flags 0x{flags:x}")));
        }
        let has_targets = flags & FLAG_TARGETS != 0;
        let want = Self::expected_len(rows, dim, has_targets);
        if b.len() != want {
            return Err(VeilError::Format(format!("latent file is {} bytes, header implies {want}", b.len())));
        }
        let body_end = HEADER_LEN + 4 * rows * dim;
        let data = b[HEADER_LEN..body_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let targets = has_targets.then(|| {
            b[body_end..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        });
        Ok(Self {
            latents: LatentBatch { rows, dim, data },
            targets,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
