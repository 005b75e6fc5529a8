use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use hiedge::wire::{
    bench, encode_request, offload, payload_digest, sample_payload, serve, serve_with, DelayModel, OffloadClient,
    Predictor, ServerConfig, DEFAULT_TIMEOUT,
};

fn raw(addr: &str) -> TcpStream {
    let s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s
}

#[test]
fn lookup_predictor_answers_by_digest() {
    let mut table = HashMap::new();
    table.insert(payload_digest(&[1, 2, 3]), 7u16);
    let server = serve("127.0.0.1:0", Predictor::Lookup { table, fallback: 0 }, DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();

    let mut s = raw(&addr);
    s.write_all(&encode_request(&[1, 2, 3]).unwrap()).unwrap();
    let mut reply = [0u8; 2];
    s.read_exact(&mut reply).unwrap();
    assert_eq!(reply, [0x00, 0x07]);
    assert_eq!(offload(&addr, &[9, 9]).unwrap().0, 0);
}

#[test]
fn zero_length_frame_closes_connection() {
    let server = serve("127.0.0.1:0", Predictor::Constant(1), DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();
    let mut s = raw(&addr);
    s.write_all(&[0, 0, 0, 0]).unwrap();
    let mut buf = [0u8; 2];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
    // the server keeps serving others
    assert_eq!(offload(&addr, b"x").unwrap().0, 1);
}

#[test]
fn oversized_length_closes_connection() {
    let server = serve("127.0.0.1:0", Predictor::Constant(1), DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();
    let mut s = raw(&addr);
    s.write_all(&u32::MAX.to_be_bytes()).unwrap();
    let mut buf = [0u8; 2];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
}

#[test]
fn back_to_back_requests_on_one_connection() {
    let server = serve("127.0.0.1:0", Predictor::Constant(513), DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();
    let mut s = raw(&addr);
    let mut both = encode_request(b"first").unwrap();
    both.extend(encode_request(b"second").unwrap());
    s.write_all(&both).unwrap();
    let mut reply = [0u8; 4];
    s.read_exact(&mut reply).unwrap();
    assert_eq!(reply, [0x02, 0x01, 0x02, 0x01]);
}

#[test]
fn stalled_client_does_not_block_others() {
    let server = serve_with(
        "127.0.0.1:0",
        Predictor::Constant(4),
        DelayModel::none(),
        ServerConfig {
            read_timeout: Duration::from_millis(300),
        },
    )
    .unwrap();
    let addr = server.local_addr().to_string();
    // announces 100 bytes, sends 3, then stalls
    let mut stalled = raw(&addr);
    stalled.write_all(&[0, 0, 0, 100, 1, 2, 3]).unwrap();
    let t = Instant::now();
    assert_eq!(offload(&addr, b"ok").unwrap().0, 4);
    assert!(t.elapsed() < Duration::from_millis(250));
    let mut buf = [0u8; 2];
    assert_eq!(stalled.read(&mut buf).unwrap_or(0), 0);
}

#[test]
fn fixed_delay_bounds_round_trip() {
    let server = serve("127.0.0.1:0", Predictor::Constant(0), DelayModel::fixed(20.0)).unwrap();
    let addr = server.local_addr().to_string();
    let mut c = OffloadClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    for _ in 0..5 {
        let (_, rtt) = c.offload(&[0u8; 64]).unwrap();
        assert!(rtt >= 20.0, "{rtt}");
    }
}

#[test]
fn jitter_mean_within_range() {
    let delay = DelayModel {
        fixed_ms: 20.0,
        jitter_ms: 10.0,
        seed: 5,
    };
    let server = serve("127.0.0.1:0", Predictor::Constant(0), delay).unwrap();
    let result = bench(&server.local_addr().to_string(), 256, 40, 0).unwrap();
    assert!(result.rtts.iter().all(|&r| r >= 20.0));
    let mean = result.stats.mean_rtt_ms;
    assert!((20.0..=31.0).contains(&mean), "{mean}");
}

#[test]
fn single_repetition_bench() {
    let server = serve("127.0.0.1:0", Predictor::Constant(3), DelayModel::none()).unwrap();
    let r = bench(&server.local_addr().to_string(), 3072, 1, 0).unwrap();
    let s = &r.stats;
    assert_eq!(s.repetitions, 1);
    assert_eq!(s.mean_rtt_ms, s.min_ms);
    assert_eq!(s.max_ms, s.min_ms);
    assert_eq!(s.stddev_ms, 0.0);
    assert_eq!(r.classes, vec![3]);
}

#[test]
fn image_sized_payload_and_trace_predictor() {
    let trace = hiedge::trace::generate_synthetic(&hiedge::SynthConfig {
        num_samples: 50,
        num_classes: 10,
        exit_accuracy: vec![0.8],
        server_accuracy: 0.9,
        separation: 1.0,
        seed: 1,
    })
    .unwrap();
    let server = serve("127.0.0.1:0", Predictor::from_trace(&trace).unwrap(), DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();
    let mut c = OffloadClient::connect(&addr, DEFAULT_TIMEOUT).unwrap();
    for r in &trace.records {
        let (class, _) = c.offload(&sample_payload(r.sample_id, 3072)).unwrap();
        assert_eq!(u32::from(class), r.server_label);
    }
}

#[test]
fn connect_to_closed_port_fails() {
    let server = serve("127.0.0.1:0", Predictor::Constant(0), DelayModel::none()).unwrap();
    let addr = server.local_addr().to_string();
    server.shutdown();
    std::thread::sleep(Duration::from_millis(100));
    assert!(OffloadClient::connect(&addr, Duration::from_millis(500)).and_then(|mut c| c.offload(b"x")).is_err());
}
