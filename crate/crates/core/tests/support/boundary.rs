//! Source -> capture proxy -> inference harness for byte-level boundary scans.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use veil::downstream::{DownstreamModel, LinearRegression};
use veil::numeric::{Matrix, Rng};
use veil::scrae::{encode_batch, EncoderModel};
use veil::service::{spawn_inference, AuditLog, Direction, InferenceService, Outcome, SourceService};

/// Forwards one connection and keeps a copy of every client-to-server byte.
pub struct CaptureProxy {
    pub addr: SocketAddr,
    captured: Arc<Mutex<Vec<u8>>>,
    threads: Vec<JoinHandle<()>>,
}

impl CaptureProxy {
    pub fn start(upstream: SocketAddr) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let captured = Arc::new(Mutex::new(Vec::new()));
        let cap = captured.clone();
        let acceptor = std::thread::spawn(move || {
            let (client, _) = listener.accept().unwrap();
            let server = TcpStream::connect(upstream).unwrap();
            let (c2, s2) = (client.try_clone().unwrap(), server.try_clone().unwrap());
            let up = std::thread::spawn(move || pump(client, server, Some(cap)));
            let down = std::thread::spawn(move || pump(s2, c2, None));
            up.join().unwrap();
            down.join().unwrap();
        });
        Self {
            addr,
            captured,
            threads: vec![acceptor],
        }
    }

    pub fn captured(&self) -> Vec<u8> {
        self.captured.lock().unwrap().clone()
    }

    pub fn finish(self) -> Vec<u8> {
        for t in self.threads {
            t.join().unwrap();
        }
        Arc::try_unwrap(self.captured).unwrap().into_inner().unwrap()
    }
}

fn pump(mut from: TcpStream, mut to: TcpStream, tap: Option<Arc<Mutex<Vec<u8>>>>) {
    let mut buf = [0u8; 4096];
    loop {
        match from.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if let Some(t) = &tap {
                    t.lock().unwrap().extend_from_slice(&buf[..n]);
                }
                if to.write_all(&buf[..n]).is_err() {
                    break;
                }
            }
        }
    }
    let _ = to.shutdown(Shutdown::Write);
}

/// Byte patterns a leaked value could take on the wire.
pub fn encodings(v: f64) -> Vec<Vec<u8>> {
    let f = v as f32;
    vec![
        v.to_le_bytes().to_vec(),
        v.to_be_bytes().to_vec(),
        f.to_le_bytes().to_vec(),
        f.to_be_bytes().to_vec(),
        format!("{v}").into_bytes(),
        format!("{f}").into_bytes(),
    ]
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

pub struct SentinelScan {
    pub records: usize,
    pub sentinel_hits: usize,
    pub captured_bytes: usize,
    pub expected_bytes: usize,
    pub encoded_out_ok: usize,
    pub prediction_in_ok: usize,
    pub audit_errors: usize,
    pub inference_answered: u64,
    pub inference_errors: u64,
    pub predictions_match: bool,
}

impl SentinelScan {
    pub fn reconciles(&self) -> bool {
        self.encoded_out_ok == self.records
            && self.prediction_in_ok == self.records
            && self.audit_errors == 0
            && self.inference_answered == self.records as u64
            && self.inference_errors == 0
            && self.captured_bytes == self.expected_bytes
    }
}

/// Sends `n` records, each carrying a planted sentinel feature value, through
/// a capturing proxy and scans what crossed the boundary.
pub fn sentinel_scan(encoder: EncoderModel, n: usize, seed: u64) -> SentinelScan {
    let d = encoder.input_dim();
    let e = encoder.latent_dim();
    let mut rng = Rng::new(seed);
    let fit_x = rng.normal_matrix(64, d);
    let fit_z = encode_batch(&encoder, &fit_x).unwrap().to_matrix();
    let fit_y = Matrix::from_fn(64, 1, |r, _| fit_x.get(r, 0));
    let model = DownstreamModel::Linear(LinearRegression::fit(&fit_z, &fit_y, 1e-6).unwrap());
    let svc = Arc::new(InferenceService::new(model.clone()));
    let server = spawn_inference(svc.clone(), "127.0.0.1:0").unwrap();
    let proxy = CaptureProxy::start(server.addr());
    let audit = Arc::new(AuditLog::in_memory());
    let encoder = Arc::new(encoder);
    let source = SourceService::connect(encoder.clone(), proxy.addr, audit.clone()).unwrap();

    let mut sentinels = Vec::with_capacity(n);
    let mut predictions_match = true;
    for i in 0..n {
        let mut raw: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let sentinel = 7919.0 + 0.001953125 * i as f64 + rng.uniform();
        raw[rng.below(d)] = sentinel;
        sentinels.push(sentinel);
        let got = source.predict(&raw).unwrap();
        let z = encode_batch(&encoder, &Matrix::new(1, d, raw).unwrap()).unwrap().to_matrix();
        let want = model.predict(&z).unwrap();
        predictions_match &= got == want.data();
    }
    let captured = proxy.captured();
    let sentinel_hits = sentinels
        .iter()
        .flat_map(|&s| encodings(s))
        .filter(|pat| contains(&captured, pat))
        .count();
    source.close();
    drop(source);
    let (answered, errors) = svc.counts();
    let out = SentinelScan {
        records: n,
        sentinel_hits,
        captured_bytes: captured.len(),
        expected_bytes: n * (14 + 16 + 4 * e),
        encoded_out_ok: audit.count(Direction::EncodedOut, Some(Outcome::Ok)),
        prediction_in_ok: audit.count(Direction::PredictionIn, Some(Outcome::Ok)),
        audit_errors: audit.records().iter().filter(|r| r.outcome == Outcome::Error).count(),
        inference_answered: answered,
        inference_errors: errors,
        predictions_match,
    };
    drop(server);
    let _ = proxy.finish();
    out
}
