//! Inference side of the boundary: answers PREDICT_REQ frames from a
//! downstream model that only ever sees E-dimensional latents.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::frame::*;
use crate::downstream::DownstreamModel;
use crate::error::{Result, VeilError};
use crate::numeric::Matrix;

const IDLE_TIMEOUT: Duration = Duration::from_secs(120);

pub struct InferenceService {
    model: DownstreamModel,
    latent_dim: usize,
    /// Optional append-only store of received latents (f32 LE rows).
    store: Option<Mutex<File>>,
    answered: AtomicU64,
    errors: AtomicU64,
}

impl InferenceService {
    pub fn new(model: DownstreamModel) -> Self {
        let latent_dim = model.input_dim();
        Self {
            model,
            latent_dim,
            store: None,
            answered: AtomicU64::new(0),
            errors: AtomicU64::new(0),
        }
    }

    pub fn with_latent_store(mut self, path: &Path) -> Result<Self> {
        self.store = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?));
        Ok(self)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Frames answered with PREDICT_RESP or HEALTH, and with ERROR.
    pub fn counts(&self) -> (u64, u64) {
        (self.answered.load(Ordering::Relaxed), self.errors.load(Ordering::Relaxed))
    }

    fn error(&self, id: RequestId, reason: ErrorReason, msg: impl Into<String>) -> Frame {
        self.errors.fetch_add(1, Ordering::Relaxed);
        ErrorMessage::new(id, reason, msg).encode()
    }

    /// Exactly one reply per well-framed input.
    pub fn respond(&self, frame: &Frame) -> Frame {
        let id_of = |p: &[u8]| -> RequestId { p.get(..REQUEST_ID_LEN).and_then(|s| s.try_into().ok()).unwrap_or([0; REQUEST_ID_LEN]) };
        match frame.kind() {
            Some(MsgType::PredictReq) => {
                let Some(req) = PredictRequest::decode(&frame.payload, self.latent_dim) else {
                    return self.error(
                        id_of(&frame.payload),
                        ErrorReason::BadLength,
                        format!("payload is {} bytes, expected {}", frame.payload.len(), REQUEST_ID_LEN + 4 * self.latent_dim),
                    );
                };
                if req.latent.iter().any(|v| !v.is_finite()) {
                    return self.error(req.request_id, ErrorReason::NonFinite, "latent contains non-finite values");
                }
                let x = Matrix::new(1, self.latent_dim, req.latent.iter().map(|&v| f64::from(v)).collect()).expect("length checked");
                match self.model.predict(&x) {
                    Ok(p) => {
                        if let Some(store) = &self.store {
                            let mut f = store.lock().expect("store lock");
                            let bytes: Vec<u8> = req.latent.iter().flat_map(|v| v.to_le_bytes()).collect();
                            if let Err(e) = f.write_all(&bytes) {
                                log::error!("latent store write failed: {e}");
                            }
                        }
                        self.answered.fetch_add(1, Ordering::Relaxed);
                        PredictResponse {
                            request_id: req.request_id,
                            prediction: p.into_data(),
                        }
                        .encode()
                    }
                    Err(e) => self.error(req.request_id, ErrorReason::Internal, e.to_string()),
                }
            }
            Some(MsgType::Health) => {
                self.answered.fetch_add(1, Ordering::Relaxed);
                Frame::new(MsgType::Health, (self.latent_dim as u32).to_le_bytes().to_vec())
            }
            Some(t @ (MsgType::PredictResp | MsgType::Error)) => {
                self.error(id_of(&frame.payload), ErrorReason::Unexpected, format!("{t:?} is not accepted by the inference service"))
            }
            None => self.error(id_of(&frame.payload), ErrorReason::UnknownType, format!("unknown message type 0x{:02x}", frame.msg_type)),
        }
    }

    fn handle(&self, stream: TcpStream) {
        let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
        let Ok(read_half) = stream.try_clone() else { return };
        let mut reader = BufReader::new(read_half);
        let mut writer = BufWriter::new(stream);
        loop {
            let reply = match read_frame(&mut reader) {
                Ok(f) => self.respond(&f),
                Err(FrameError::Closed) | Err(FrameError::Io(_)) => return,
                Err(e) => {
                    let (reason, msg) = match &e {
                        FrameError::BadMagic => (ErrorReason::BadMagic, "bad magic".to_string()),
                        FrameError::Oversize(n) => (ErrorReason::Oversize, format!("payload length {n} exceeds {MAX_PAYLOAD}")),
                        FrameError::BadVersion(v) => (ErrorReason::BadVersion, format!("unsupported version {v}")),
                        _ => unreachable!("handled above"),
                    };
                    let reply = self.error([0; REQUEST_ID_LEN], reason, msg);
                    if reply.write_to(&mut writer).is_err() || !e.recoverable() {
                        return;
                    }
                    continue;
                }
            };
            if reply.write_to(&mut writer).is_err() {
                return;
            }
        }
    }
}

/// A running inference listener.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_now();
        }
    }
}

/// Binds and serves on a background thread, one thread per connection.
pub fn spawn_inference(service: Arc<InferenceService>, addr: impl ToSocketAddrs) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let thread = std::thread::Builder::new()
        .name("veil-inference".into())
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(s) => {
                        let svc = service.clone();
                        let _ = s.set_nodelay(true);
                        if let Err(e) = std::thread::Builder::new().name("veil-inference-conn".into()).spawn(move || svc.handle(s)) {
                            log::error!("could not spawn connection handler: {e}");
                        }
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        })
        .map_err(VeilError::Io)?;
    log::info!("inference service listening on {local}");
    Ok(ServerHandle {
        addr: local,
        stop,
        thread: Some(thread),
    })
}
