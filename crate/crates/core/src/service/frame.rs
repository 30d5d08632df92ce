//! Wire framing: `"VEIL"`, version byte, message type byte, u64 LE payload
//! length, payload.

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 4] = b"VEIL";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 14;
pub const REQUEST_ID_LEN: usize = 16;
/// Largest payload a peer will buffer.
pub const MAX_PAYLOAD: u64 = 1 << 24;

pub type RequestId = [u8; REQUEST_ID_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    PredictReq = 0x01,
    PredictResp = 0x02,
    Error = 0x03,
    Health = 0x04,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MsgType::PredictReq),
            0x02 => Some(MsgType::PredictResp),
            0x03 => Some(MsgType::Error),
            0x04 => Some(MsgType::Health),
            _ => None,
        }
    }
}

/// Reason codes carried in ERROR payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorReason {
    BadLength = 1,
    UnknownType = 2,
    BadVersion = 3,
    BadMagic = 4,
    Oversize = 5,
    NonFinite = 6,
    Unexpected = 7,
    Internal = 8,
}

impl ErrorReason {
    pub fn from_code(c: u16) -> Option<Self> {
        use ErrorReason::*;
        [BadLength, UnknownType, BadVersion, BadMagic, Oversize, NonFinite, Unexpected, Internal]
            .into_iter()
            .find(|r| *r as u16 == c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Raw type byte; unknown values are preserved so they can be answered.
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(t: MsgType, payload: Vec<u8>) -> Self {
        Self {
            msg_type: t as u8,
            payload,
        }
    }

    pub fn kind(&self) -> Option<MsgType> {
        MsgType::from_byte(self.msg_type)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.msg_type);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.to_bytes())?;
        w.flush()
    }
}

/// Why a frame could not be read.
#[derive(Debug)]
pub enum FrameError {
    /// Clean end of stream before a header started.
    Closed,
    Io(io::Error),
    /// Header did not start with the magic; the stream cannot be resynced.
    BadMagic,
    /// Declared length above [`MAX_PAYLOAD`]; the stream cannot be resynced.
    Oversize(u64),
    /// Version mismatch. The payload was consumed, the stream is still usable.
    BadVersion(u8),
}

impl FrameError {
    /// Whether the connection can keep reading after this error.
    pub fn recoverable(&self) -> bool {
        matches!(self, FrameError::BadVersion(_))
    }
}

pub fn read_frame(r: &mut impl Read) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    if &header[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    let len = u64::from_le_bytes(header[6..14].try_into().expect("8 bytes"));
    if len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(FrameError::Io)?;
    if header[4] != VERSION {
        return Err(FrameError::BadVersion(header[4]));
    }
    Ok(Frame {
        msg_type: header[5],
        payload,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictRequest {
    pub request_id: RequestId,
    pub latent: Vec<f32>,
}

impl PredictRequest {
    pub fn encode(&self) -> Frame {
        let mut p = Vec::with_capacity(REQUEST_ID_LEN + 4 * self.latent.len());
        p.extend_from_slice(&self.request_id);
        for v in &self.latent {
            p.extend_from_slice(&v.to_le_bytes());
        }
        Frame::new(MsgType::PredictReq, p)
    }

    /// Decodes a payload that must be exactly `16 + 4E` bytes.
    pub fn decode(payload: &[u8], latent_dim: usize) -> Option<Self> {
        if payload.len() != REQUEST_ID_LEN + 4 * latent_dim {
            return None;
        }
        let request_id = payload[..REQUEST_ID_LEN].try_into().expect("16 bytes");
        let latent = payload[REQUEST_ID_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Some(Self { request_id, latent })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictResponse {
    pub request_id: RequestId,
    pub prediction: Vec<f64>,
}

impl PredictResponse {
    pub fn encode(&self) -> Frame {
        let mut p = Vec::with_capacity(REQUEST_ID_LEN + 4 + 8 * self.prediction.len());
        p.extend_from_slice(&self.request_id);
        p.extend_from_slice(&(self.prediction.len() as u32).to_le_bytes());
        for v in &self.prediction {
            p.extend_from_slice(&v.to_le_bytes());
        }
        Frame::new(MsgType::PredictResp, p)
    }

    pub fn decode(payload: &[u8]) -> Option<Self> {
        if payload.len() < REQUEST_ID_LEN + 4 {
            return None;
        }
        let request_id = payload[..REQUEST_ID_LEN].try_into().expect("16 bytes");
        let count = u32::from_le_bytes(payload[16..20].try_into().expect("4 bytes")) as usize;
        let body = &payload[20..];
        if body.len() != count.checked_mul(8)? {
            return None;
        }
        let prediction = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Some(Self { request_id, prediction })
    }
}

/// ERROR payload: request id (zeros when unknown), u16 reason, UTF-8 message.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMessage {
    pub request_id: RequestId,
    pub reason: u16,
    pub message: String,
}

impl ErrorMessage {
    pub fn new(request_id: RequestId, reason: ErrorReason, message: impl Into<String>) -> Self {
        Self {
            request_id,
            reason: reason as u16,
            message: message.into(),
        }
    }

    pub fn encode(&self) -> Frame {
        let mut p = Vec::with_capacity(REQUEST_ID_LEN + 2 + self.message.len());
        p.extend_from_slice(&self.request_id);
        p.extend_from_slice(&self.reason.to_le_bytes());
        p.extend_from_slice(self.message.as_bytes());
        Frame::new(MsgType::Error, p)
    }

    pub fn decode(payload: &[u8]) -> Option<Self> {
        if payload.len() < REQUEST_ID_LEN + 2 {
            return None;
        }
        Some(Self {
            request_id: payload[..REQUEST_ID_LEN].try_into().expect("16 bytes"),
            reason: u16::from_le_bytes([payload[16], payload[17]]),
            message: String::from_utf8_lossy(&payload[18..]).into_owned(),
        })
    }
}
