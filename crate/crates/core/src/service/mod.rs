//! Split deployment: a trusted source that encodes locally and an untrusted
//! inference endpoint that only ever receives latents.

pub mod audit;
pub mod frame;
pub mod inference;
pub mod source;

pub use audit::{latent_checksum, Anomaly, AuditLog, AuditRecord, Direction, Outcome};
pub use frame::{read_frame, ErrorMessage, ErrorReason, Frame, FrameError, MsgType, PredictRequest, PredictResponse, RequestId};
pub use inference::{spawn_inference, InferenceService, ServerHandle};
pub use source::{serve_local, LocalRequest, LocalResponse, SourceService};
