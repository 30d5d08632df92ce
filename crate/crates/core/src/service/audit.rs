//! Append-only audit trail, one JSON object per line. Records hold ids,
//! checksums and outcomes only.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::frame::RequestId;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    EncodedOut,
    PredictionIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Error,
}

/// Fixed vocabulary for records that are not plain successes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    ReplayedId,
    UnknownId,
    RemoteError,
    MalformedResponse,
    TransportFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    /// Lower-case hex.
    pub request_id: String,
    pub direction: Direction,
    pub latent_checksum: u64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<Anomaly>,
}

pub fn hex_id(id: &RequestId) -> String {
    id.iter().map(|b| format!("{b:02x}")).collect()
}

/// 64-bit FNV-1a over the little-endian latent bytes.
pub fn latent_checksum(latent: &[f32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in latent {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Default)]
struct Inner {
    records: Vec<AuditRecord>,
    sink: Option<File>,
}

/// Serialized appends; records are kept in memory and optionally mirrored to
/// an NDJSON file.
#[derive(Default)]
pub struct AuditLog {
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                records: Vec::new(),
                sink: Some(f),
            }),
        })
    }

    pub fn append(&self, id: &RequestId, direction: Direction, checksum: u64, outcome: Outcome, anomaly: Option<Anomaly>) {
        let rec = AuditRecord {
            timestamp_ms: now_ms(),
            request_id: hex_id(id),
            direction,
            latent_checksum: checksum,
            outcome,
            anomaly,
        };
        let mut g = self.inner.lock().expect("audit lock");
        if let Some(f) = g.sink.as_mut() {
            let line = serde_json::to_string(&rec).expect("audit record serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::error!("audit write failed: {e}");
            }
        }
        g.records.push(rec);
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.inner.lock().expect("audit lock").records.clone()
    }

    pub fn count(&self, direction: Direction, outcome: Option<Outcome>) -> usize {
        self.inner
            .lock()
            .expect("audit lock")
            .records
            .iter()
            .filter(|r| r.direction == direction && outcome.is_none_or(|o| r.outcome == o))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_reference_values() {
        // empty input is the offset basis; "a" is the published FNV-1a test vector
        assert_eq!(latent_checksum(&[]), 0xcbf29ce484222325);
        let mut h: u64 = 0xcbf29ce484222325;
        h ^= 0x61;
        h = h.wrapping_mul(0x100000001b3);
        assert_eq!(h, 0xaf63dc4c8601ec8c);
        assert_ne!(latent_checksum(&[1.0]), latent_checksum(&[-1.0]));
    }

    #[test]
    fn schema_has_no_room_for_feature_values() {
        let log = AuditLog::in_memory();
        log.append(&[0xab; 16], Direction::EncodedOut, 42, Outcome::Ok, None);
        let v = serde_json::to_value(&log.records()[0]).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["direction", "latent_checksum", "outcome", "request_id", "timestamp_ms"]);
        assert_eq!(v["request_id"], "ab".repeat(16));
        let bad = r#"{"timestamp_ms":1,"request_id":"00","direction":"encoded_out","latent_checksum":1,"outcome":"ok","x":[1.0]}"#;
        assert!(serde_json::from_str::<AuditRecord>(bad).is_err());
    }

    #[test]
    fn file_sink_writes_ndjson() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.ndjson");
        let log = AuditLog::to_file(&path).unwrap();
        log.append(&[1; 16], Direction::EncodedOut, 1, Outcome::Ok, None);
        log.append(&[1; 16], Direction::PredictionIn, 1, Outcome::Error, Some(Anomaly::ReplayedId));
        let text = std::fs::read_to_string(&path).unwrap();
        let recs: Vec<AuditRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(recs, log.records());
        assert_eq!(log.count(Direction::PredictionIn, Some(Outcome::Error)), 1);
    }
}
