use std::io::{BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use veil::downstream::{DownstreamModel, LinearRegression};
use veil::numeric::nn::Activation;
use veil::numeric::{Matrix, Rng};
use veil::scrae::{encode_batch, EncoderModel, EncoderSpec, Head};
use veil::service::*;
use veil::VeilError;

#[path = "support/boundary.rs"]
mod boundary;

fn encoder(d: usize, e: usize) -> EncoderModel {
    let spec = EncoderSpec::new(d, vec![2 * e, e], Activation::Tanh, Head::Regressor { dim: 1 }).unwrap();
    EncoderModel::init(&spec, 11).unwrap()
}

fn linear_service(e: usize) -> Arc<InferenceService> {
    let mut rng = Rng::new(5);
    let z = rng.normal_matrix(40, e);
    let y = Matrix::from_fn(40, 1, |r, _| z.row(r).iter().sum());
    Arc::new(InferenceService::new(DownstreamModel::Linear(LinearRegression::fit(&z, &y, 0.0).unwrap())))
}

#[test]
fn sentinels_never_cross_the_boundary() {
    let scan = boundary::sentinel_scan(encoder(12, 4), 100, 21);
    assert_eq!(scan.sentinel_hits, 0);
    assert!(scan.reconciles(), "captured {} expected {}", scan.captured_bytes, scan.expected_bytes);
    assert!(scan.predictions_match);
}

#[test]
fn scan_would_see_a_raw_forwarder() {
    // the scan is only meaningful if it catches plain f32 features
    let v = 7919.25;
    let mut wire = b"VEIL\x01\x01".to_vec();
    wire.extend_from_slice(&(v as f32).to_le_bytes());
    assert!(boundary::encodings(v).iter().any(|p| boundary::contains(&wire, p)));
}

#[test]
fn concurrent_requests_each_get_their_own_reply() {
    let enc = Arc::new(encoder(10, 3));
    let svc = linear_service(3);
    let server = spawn_inference(svc.clone(), "127.0.0.1:0").unwrap();
    let audit = Arc::new(AuditLog::in_memory());
    let source = SourceService::connect(enc.clone(), server.addr(), audit.clone()).unwrap();
    let threads: Vec<_> = (0..100)
        .map(|i| {
            let source = source.clone();
            let enc = enc.clone();
            let svc_model = svc.clone();
            std::thread::spawn(move || {
                let raw: Vec<f64> = (0..10).map(|j| (i * 10 + j) as f64 * 0.01).collect();
                let got = source.predict(&raw).unwrap();
                let z = encode_batch(&enc, &Matrix::new(1, 10, raw).unwrap()).unwrap();
                (got, z.to_matrix().data().iter().sum::<f64>(), svc_model.latent_dim())
            })
        })
        .collect();
    for t in threads {
        let (got, zsum, e) = t.join().unwrap();
        assert_eq!(e, 3);
        assert!((got[0] - zsum).abs() < 1e-6, "{} vs {}", got[0], zsum);
    }
    assert_eq!(audit.count(Direction::EncodedOut, Some(Outcome::Ok)), 100);
    assert_eq!(audit.count(Direction::PredictionIn, Some(Outcome::Ok)), 100);
    assert_eq!(svc.counts(), (100, 0));
    assert_eq!(source.in_flight(), 0);
}

fn send_raw(stream: &mut TcpStream, bytes: &[u8]) {
    stream.write_all(bytes).unwrap();
}

#[test]
fn fuzzed_frames_get_exactly_one_reply_each() {
    let e = 4;
    let svc = linear_service(e);
    let server = spawn_inference(svc.clone(), "127.0.0.1:0").unwrap();
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut rng = Rng::new(99);
    let n = 10_000;
    let mut expect_ok = 0;
    // writer runs ahead on its own thread so neither side blocks on full buffers
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = match rng.below(4) {
            0 => {
                let mut p = vec![0u8; 16 + 4 * e];
                rng.fill_bytes(&mut p);
                Frame::new(MsgType::PredictReq, p)
            }
            1 => {
                let mut p = vec![0u8; rng.below(48)];
                rng.fill_bytes(&mut p);
                Frame::new(MsgType::PredictReq, p)
            }
            _ => {
                let mut p = vec![0u8; rng.below(40)];
                rng.fill_bytes(&mut p);
                Frame { msg_type: rng.below(256) as u8, payload: p }
            }
        }
        .to_bytes();
        if i % 97 == 0 {
            f[4] = 2 + rng.below(200) as u8;
        }
        frames.push(f);
    }
    for f in &frames {
        if f[4] == 1 && f[5] == MsgType::PredictReq as u8 && f.len() == 14 + 16 + 4 * e {
            let lat = PredictRequest::decode(&f[14..], e).unwrap().latent;
            expect_ok += lat.iter().all(|v| v.is_finite()) as u64;
        } else if f[4] == 1 && f[5] == MsgType::Health as u8 {
            expect_ok += 1;
        }
    }
    let mut w = stream.try_clone().unwrap();
    let writer = std::thread::spawn(move || {
        for f in frames {
            send_raw(&mut w, &f);
        }
    });
    let mut replies = 0;
    let mut ok = 0;
    while replies < n {
        let f = read_frame(&mut reader).expect("one reply per frame");
        replies += 1;
        ok += matches!(f.kind(), Some(MsgType::PredictResp | MsgType::Health)) as u64;
    }
    writer.join().unwrap();
    assert_eq!(ok, expect_ok);
    assert_eq!(svc.counts(), (expect_ok, n as u64 - expect_ok));

    // still serving on the same connection
    Frame::new(MsgType::Health, vec![]).write_to(&mut stream).unwrap();
    assert_eq!(read_frame(&mut reader).unwrap().payload, (e as u32).to_le_bytes());
}

#[test]
fn bad_magic_and_oversize_close_only_that_connection() {
    let svc = linear_service(2);
    let server = spawn_inference(svc, "127.0.0.1:0").unwrap();
    for bad in [b"NOPE\x01\x04\0\0\0\0\0\0\0\0".to_vec(), {
        let mut b = b"VEIL\x01\x01".to_vec();
        b.extend_from_slice(&(1u64 << 40).to_le_bytes());
        b
    }] {
        let mut s = TcpStream::connect(server.addr()).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        s.write_all(&bad).unwrap();
        let reply = read_frame(&mut s).unwrap();
        assert_eq!(reply.kind(), Some(MsgType::Error));
        let mut rest = Vec::new();
        assert_eq!(s.read_to_end(&mut rest).unwrap(), 0);
    }
    let mut s = TcpStream::connect(server.addr()).unwrap();
    Frame::new(MsgType::Health, vec![]).write_to(&mut s).unwrap();
    assert_eq!(read_frame(&mut s).unwrap().kind(), Some(MsgType::Health));
}

/// An inference impostor that answers every request, then replays the
/// answer and sends one for an id nobody asked about.
fn misbehaving_server(mode: &'static str) -> std::net::SocketAddr {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    std::thread::spawn(move || {
        let (mut s, _) = l.accept().unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        while let Ok(f) = read_frame(&mut r) {
            let id: RequestId = f.payload[..16].try_into().unwrap();
            match mode {
                "replay" => {
                    let resp = PredictResponse { request_id: id, prediction: vec![1.5] }.encode();
                    resp.write_to(&mut s).unwrap();
                    resp.write_to(&mut s).unwrap();
                    PredictResponse { request_id: [0xee; 16], prediction: vec![9.0] }.encode().write_to(&mut s).unwrap();
                    let mut junk = Frame::new(MsgType::PredictResp, vec![1, 2, 3]);
                    junk.payload.truncate(3);
                    junk.write_to(&mut s).unwrap();
                }
                "error" => ErrorMessage::new(id, ErrorReason::Internal, "model offline").encode().write_to(&mut s).unwrap(),
                _ => return,
            }
        }
    });
    addr
}

fn wait_for(audit: &AuditLog, n: usize) {
    let t = Instant::now();
    while audit.records().len() < n && t.elapsed() < Duration::from_secs(10) {
        std::thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn replayed_unknown_and_malformed_responses_are_flagged() {
    let audit = Arc::new(AuditLog::in_memory());
    let source = SourceService::connect(Arc::new(encoder(6, 2)), misbehaving_server("replay"), audit.clone()).unwrap();
    assert_eq!(source.predict(&[0.1; 6]).unwrap(), vec![1.5]);
    wait_for(&audit, 5);
    let recs = audit.records();
    let anomalies: Vec<_> = recs.iter().filter_map(|r| r.anomaly).collect();
    assert_eq!(anomalies, [Anomaly::ReplayedId, Anomaly::UnknownId, Anomaly::MalformedResponse]);
    let out = recs.iter().find(|r| r.direction == Direction::EncodedOut).unwrap();
    let back = recs.iter().find(|r| r.direction == Direction::PredictionIn && r.outcome == Outcome::Ok).unwrap();
    assert_eq!(back.latent_checksum, out.latent_checksum);
    let replay = recs.iter().find(|r| r.anomaly == Some(Anomaly::ReplayedId)).unwrap();
    assert_eq!(replay.request_id, out.request_id);
}

#[test]
fn remote_errors_and_disconnects_surface_to_the_caller() {
    let audit = Arc::new(AuditLog::in_memory());
    let source = SourceService::connect(Arc::new(encoder(6, 2)), misbehaving_server("error"), audit.clone()).unwrap();
    match source.predict(&[0.1; 6]) {
        Err(VeilError::Remote { reason, message }) => {
            assert_eq!(reason, ErrorReason::Internal as u16);
            assert_eq!(message, "model offline");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(audit.count(Direction::PredictionIn, Some(Outcome::Error)), 1);

    let audit = Arc::new(AuditLog::in_memory());
    let source = SourceService::connect(Arc::new(encoder(6, 2)), misbehaving_server("close"), audit.clone()).unwrap();
    assert!(matches!(source.predict(&[0.1; 6]), Err(VeilError::Transport(_))));
    assert!(matches!(source.predict(&[0.1; 6]), Err(VeilError::Transport(_))));
    assert!(matches!(source.predict(&[0.1; 5]), Err(VeilError::DimensionMismatch { .. })));
}

#[test]
fn local_listener_round_trips_json_lines() {
    let enc = Arc::new(encoder(4, 2));
    let server = spawn_inference(linear_service(2), "127.0.0.1:0").unwrap();
    let source = SourceService::connect(enc, server.addr(), Arc::new(AuditLog::in_memory())).unwrap();
    let (addr, _h) = serve_local(source, "127.0.0.1:0").unwrap();
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(b"{\"features\": [0.1, 0.2, 0.3, 0.4]}\n{\"features\": [1]}\n{\"oops\": 1}\n").unwrap();
    s.shutdown(std::net::Shutdown::Write).unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    let lines: Vec<LocalResponse> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].prediction.as_ref().unwrap().len(), 1);
    assert!(lines[1].error.as_ref().unwrap().contains("dimension"));
    assert!(lines[2].error.as_ref().unwrap().starts_with("bad request"));
}
