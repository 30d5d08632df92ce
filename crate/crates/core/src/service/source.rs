//! Source side of the boundary: encodes raw records locally and forwards only
//! a random request id and the 32-bit latent.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::audit::{latent_checksum, Anomaly, AuditLog, Direction, Outcome};
use super::frame::*;
use crate::error::{Result, VeilError};
use crate::numeric::Matrix;
use crate::scrae::{encode_batch, EncoderModel};

/// Ids of completed requests remembered for replay detection.
const COMPLETED_MEMORY: usize = 1 << 16;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

type Reply = Result<Vec<f64>>;

#[derive(Default)]
struct Pending {
    waiting: HashMap<RequestId, (u64, SyncSender<Reply>)>,
    completed: HashSet<RequestId>,
    order: VecDeque<RequestId>,
    closed: bool,
}

impl Pending {
    fn complete(&mut self, id: RequestId) {
        if self.completed.insert(id) {
            self.order.push_back(id);
            if self.order.len() > COMPLETED_MEMORY {
                if let Some(old) = self.order.pop_front() {
                    self.completed.remove(&old);
                }
            }
        }
    }
}

/// Trusted-side client of an inference service. Cheap to share across
/// threads; each call blocks until its own reply arrives.
pub struct SourceService {
    encoder: Arc<EncoderModel>,
    writer: Mutex<BufWriter<TcpStream>>,
    pending: Arc<Mutex<Pending>>,
    audit: Arc<AuditLog>,
    reader: Mutex<Option<JoinHandle<()>>>,
    stream: TcpStream,
    timeout: Duration,
}

fn fresh_id(p: &Pending) -> RequestId {
    loop {
        let id: RequestId = rand::random();
        if !p.waiting.contains_key(&id) && !p.completed.contains(&id) {
            return id;
        }
    }
}

impl SourceService {
    pub fn connect(encoder: Arc<EncoderModel>, inference: impl ToSocketAddrs, audit: Arc<AuditLog>) -> Result<Arc<Self>> {
        let stream = TcpStream::connect(inference).map_err(|e| VeilError::Transport(format!("inference endpoint unreachable: {e}")))?;
        let _ = stream.set_nodelay(true);
        let read_half = stream.try_clone()?;
        let pending = Arc::new(Mutex::new(Pending::default()));
        let svc = Arc::new(Self {
            encoder,
            writer: Mutex::new(BufWriter::new(stream.try_clone()?)),
            pending: pending.clone(),
            audit: audit.clone(),
            reader: Mutex::new(None),
            stream,
            timeout: DEFAULT_TIMEOUT,
        });
        let handle = std::thread::Builder::new()
            .name("veil-source-reader".into())
            .spawn(move || reader_loop(read_half, pending, audit))
            .map_err(VeilError::Io)?;
        *svc.reader.lock().expect("reader lock") = Some(handle);
        Ok(svc)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.spec.latent_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.spec.input_dim
    }

    /// Encodes one raw record, sends it across the boundary and waits for
    /// the prediction.
    pub fn predict(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if raw.len() != d {
            return Err(crate::error::dim_err("SourceService::predict", d, raw.len()));
        }
        let x = Matrix::new(1, d, raw.to_vec())?;
        x.ensure_finite("raw record")?;
        let latent = encode_batch(&self.encoder, &x)?.data;
        let checksum = latent_checksum(&latent);
        let (tx, rx) = sync_channel(1);
        let id = {
            let mut p = self.pending.lock().expect("pending lock");
            if p.closed {
                return Err(VeilError::Transport("connection to inference service is closed".into()));
            }
            let id = fresh_id(&p);
            p.waiting.insert(id, (checksum, tx));
            id
        };
        let frame = PredictRequest { request_id: id, latent }.encode();
        let sent = {
            let mut w = self.writer.lock().expect("writer lock");
            frame.write_to(&mut *w)
        };
        if let Err(e) = sent {
            self.pending.lock().expect("pending lock").waiting.remove(&id);
            self.audit.append(&id, Direction::EncodedOut, checksum, Outcome::Error, Some(Anomaly::TransportFailure));
            return Err(VeilError::Transport(format!("send failed: {e}")));
        }
        self.audit.append(&id, Direction::EncodedOut, checksum, Outcome::Ok, None);
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").waiting.remove(&id);
                Err(VeilError::Transport("timed out waiting for the inference service".into()))
            }
            Err(RecvTimeoutError::Disconnected) => Err(VeilError::Transport("reply channel dropped".into())),
        }
    }

    /// Requests awaiting a reply.
    pub fn in_flight(&self) -> usize {
        self.pending.lock().expect("pending lock").waiting.len()
    }

    pub fn close(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.lock().expect("reader lock").take() {
            let _ = h.join();
        }
    }
}

impl Drop for SourceService {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

fn reader_loop(stream: TcpStream, pending: Arc<Mutex<Pending>>, audit: Arc<AuditLog>) {
    let mut reader = BufReader::new(stream);
    loop {
        let frame = match read_frame(&mut reader) {
            Ok(f) => f,
            Err(e) if e.recoverable() => {
                log::warn!("dropping frame from inference service: {e:?}");
                continue;
            }
            Err(e) => {
                if !matches!(e, FrameError::Closed) {
                    log::warn!("inference connection failed: {e:?}");
                }
                let mut p = pending.lock().expect("pending lock");
                p.closed = true;
                for (id, (sum, tx)) in p.waiting.drain() {
                    audit.append(&id, Direction::PredictionIn, sum, Outcome::Error, Some(Anomaly::TransportFailure));
                    let _ = tx.send(Err(VeilError::Transport("inference connection closed".into())));
                }
                return;
            }
        };
        match frame.kind() {
            Some(MsgType::PredictResp) => match PredictResponse::decode(&frame.payload) {
                Some(resp) => deliver(&pending, &audit, resp.request_id, Ok(resp.prediction)),
                None => {
                    log::error!("malformed prediction response ({} bytes)", frame.payload.len());
                    audit.append(&[0; REQUEST_ID_LEN], Direction::PredictionIn, 0, Outcome::Error, Some(Anomaly::MalformedResponse));
                }
            },
            Some(MsgType::Error) => match ErrorMessage::decode(&frame.payload) {
                Some(err) => {
                    log::warn!("inference service error {}: {}", err.reason, err.message);
                    let e = VeilError::Remote {
                        reason: err.reason,
                        message: err.message,
                    };
                    deliver(&pending, &audit, err.request_id, Err(e));
                }
                None => audit.append(&[0; REQUEST_ID_LEN], Direction::PredictionIn, 0, Outcome::Error, Some(Anomaly::MalformedResponse)),
            },
            other => log::warn!("ignoring unexpected frame type {other:?} from inference service"),
        }
    }
}

/// Joins a reply to its waiting caller, at most once per id.
fn deliver(pending: &Mutex<Pending>, audit: &AuditLog, id: RequestId, reply: Reply) {
    let mut p = pending.lock().expect("pending lock");
    if let Some((sum, tx)) = p.waiting.remove(&id) {
        p.complete(id);
        let outcome = if reply.is_ok() { Outcome::Ok } else { Outcome::Error };
        let anomaly = reply.is_err().then_some(Anomaly::RemoteError);
        audit.append(&id, Direction::PredictionIn, sum, outcome, anomaly);
        let _ = tx.send(reply);
    } else if p.completed.contains(&id) {
        log::warn!("replayed response for an already completed request; not delivered");
        audit.append(&id, Direction::PredictionIn, 0, Outcome::Error, Some(Anomaly::ReplayedId));
    } else {
        log::warn!("response for an unknown request id dropped");
        audit.append(&id, Direction::PredictionIn, 0, Outcome::Error, Some(Anomaly::UnknownId));
    }
}

/// One line of the local trusted-side protocol.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRequest {
    pub features: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LocalResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Serves raw records on a local listener, one JSON object per line
/// (`{"features": [...]}`), answering `{"prediction": [...]}` or
/// `{"error": "..."}`. Runs until the listener fails.
pub fn serve_local(source: Arc<SourceService>, addr: impl ToSocketAddrs) -> Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let h = std::thread::Builder::new()
        .name("veil-source-local".into())
        .spawn(move || {
            for conn in listener.incoming().flatten() {
                let src = source.clone();
                let _ = std::thread::Builder::new().spawn(move || local_session(src, conn));
            }
        })
        .map_err(VeilError::Io)?;
    log::info!("source service accepting local records on {local}");
    Ok((local, h))
}

fn local_session(src: Arc<SourceService>, conn: TcpStream) {
    let Ok(write_half) = conn.try_clone() else { return };
    let mut out = BufWriter::new(write_half);
    for line in BufReader::new(conn).lines() {
        let Ok(line) = line else { return };
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<LocalRequest>(&line) {
            Ok(req) => match src.predict(&req.features) {
                Ok(p) => LocalResponse {
                    prediction: Some(p),
                    error: None,
                },
                Err(e) => LocalResponse {
                    prediction: None,
                    error: Some(e.to_string()),
                },
            },
            Err(e) => LocalResponse {
                prediction: None,
                error: Some(format!("bad request: {e}")),
            },
        };
        let text = serde_json::to_string(&resp).expect("response serializes");
        if writeln!(out, "{text}").and_then(|_| out.flush()).is_err() {
            return;
        }
    }
}
