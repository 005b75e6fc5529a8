//! TCP offload emulator.
//!
//! Request: 4-byte big-endian payload length `N >= 1`, then `N` payload bytes.
//! Response: 2-byte big-endian class index.
//!
//! A connection may carry any number of sequential requests. A zero length, an
//! oversized length or a read timeout closes the connection without a reply.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trace::Trace;

pub const HEADER_LEN: usize = 4;
pub const RESPONSE_LEN: usize = 2;
/// Largest payload the server accepts.
pub const MAX_PAYLOAD: u32 = 64 << 20;

pub fn encode_request(payload: &[u8]) -> Result<Vec<u8>> {
    if payload.is_empty() {
        return Err(Error::Protocol("payload must not be empty".into()));
    }
    let len = u32::try_from(payload.len())
        .map_err(|_| Error::Protocol(format!("payload of {} bytes is too large", payload.len())))?;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&len.to_be_bytes());
    frame.extend_from_slice(payload);
    Ok(frame)
}

pub fn encode_response(class: u16) -> [u8; RESPONSE_LEN] {
    class.to_be_bytes()
}

pub fn decode_response(bytes: [u8; RESPONSE_LEN]) -> u16 {
    u16::from_be_bytes(bytes)
}

/// Outcome of reading one request frame.
#[derive(Debug, PartialEq, Eq)]
pub enum Frame {
    Payload(Vec<u8>),
    /// The peer closed cleanly between requests.
    Closed,
    /// Zero or oversized length header.
    Malformed(u32),
}

pub fn read_request<R: Read>(reader: &mut R) -> io::Result<Frame> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(Frame::Closed),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(header);
    if len == 0 || len > MAX_PAYLOAD {
        return Ok(Frame::Malformed(len));
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    Ok(Frame::Payload(payload))
}

/// Lowercase hex SHA-256 of a payload, the key of lookup tables.
pub fn payload_digest(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

/// Payload addressing a trace sample: the id as 8 big-endian bytes, zero-padded to `size`.
pub fn sample_payload(sample_id: u64, size: usize) -> Vec<u8> {
    let mut p = sample_id.to_be_bytes().to_vec();
    p.resize(size.max(8), 0);
    p
}

/// Stand-in for the remote model.
#[derive(Debug, Clone)]
pub enum Predictor {
    Constant(u16),
    /// Digest of the payload to class; unknown payloads get `fallback`.
    Lookup {
        table: HashMap<String, u16>,
        fallback: u16,
    },
    /// The payload's first 8 bytes name a sample; the reply is its server label.
    Trace {
        labels: HashMap<u64, u16>,
        fallback: u16,
    },
}

impl Predictor {
    pub fn from_trace(trace: &Trace) -> Result<Self> {
        let labels = trace
            .records
            .iter()
            .map(|r| {
                u16::try_from(r.server_label)
                    .map(|l| (r.sample_id, l))
                    .map_err(|_| Error::Protocol(format!("class {} does not fit in 2 bytes", r.server_label)))
            })
            .collect::<Result<_>>()?;
        Ok(Predictor::Trace { labels, fallback: 0 })
    }

    /// Reads a JSON object mapping hex digests to class indices.
    pub fn load_lookup(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: HashMap<String, u16> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        let table = raw.into_iter().map(|(k, v)| (k.to_ascii_lowercase(), v)).collect();
        Ok(Predictor::Lookup { table, fallback: 0 })
    }

    pub fn predict(&self, payload: &[u8]) -> u16 {
        match self {
            Predictor::Constant(c) => *c,
            Predictor::Lookup { table, fallback } => {
                let digest = payload_digest(payload);
                table.get(&digest).copied().unwrap_or_else(|| {
                    log::warn!("unknown payload digest {digest}, answering {fallback}");
                    *fallback
                })
            }
            Predictor::Trace { labels, fallback } => {
                let id = payload
                    .get(..8)
                    .map(|b| u64::from_be_bytes(b.try_into().expect("8 bytes")));
                match id.and_then(|id| labels.get(&id)) {
                    Some(&l) => l,
                    None => {
                        log::warn!("payload names no known sample ({id:?}), answering {fallback}");
                        *fallback
                    }
                }
            }
        }
    }
}

/// Server-side delay before each reply: `fixed_ms + U[0, jitter_ms]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayModel {
    pub fixed_ms: f64,
    pub jitter_ms: f64,
    pub seed: u64,
}

impl DelayModel {
    pub fn none() -> Self {
        DelayModel::fixed(0.0)
    }

    pub fn fixed(ms: f64) -> Self {
        DelayModel {
            fixed_ms: ms,
            jitter_ms: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_ms >= 0.0 && self.fixed_ms.is_finite()) || !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err(Error::Config(format!(
                "delay {} ms / jitter {} ms must be finite and >= 0",
                self.fixed_ms, self.jitter_ms
            )));
        }
        Ok(())
    }

    pub fn sampler(&self) -> DelaySampler {
        DelaySampler {
            model: *self,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(self.seed)),
        }
    }
}

/// Seeded stream of delays, shared by all connections of one server.
#[derive(Debug)]
pub struct DelaySampler {
    model: DelayModel,
    rng: Mutex<ChaCha8Rng>,
}

impl DelaySampler {
    pub fn next_delay(&self) -> Duration {
        let jitter = if self.model.jitter_ms > 0.0 {
            let mut rng = self.rng.lock().expect("delay rng poisoned");
            rng.random_range(0.0..=self.model.jitter_ms)
        } else {
            0.0
        };
        Duration::from_secs_f64((self.model.fixed_ms + jitter) / 1000.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    /// Idle time after which a connection is dropped.
    pub read_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            read_timeout: Duration::from_secs(5),
        }
    }
}

/// Counters of a running server.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub connections: AtomicUsize,
    pub responses: AtomicUsize,
    pub dropped: AtomicUsize,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }

    /// Blocks until the accept loop exits (it only does after [`shutdown`](Self::shutdown)).
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_accepting();
        }
    }
}

pub fn serve(bind: impl ToSocketAddrs, predictor: Predictor, delay: DelayModel) -> Result<ServerHandle> {
    serve_with(bind, predictor, delay, ServerConfig::default())
}

pub fn serve_with(
    bind: impl ToSocketAddrs,
    predictor: Predictor,
    delay: DelayModel,
    config: ServerConfig,
) -> Result<ServerHandle> {
    delay.validate()?;
    let addrs: Vec<SocketAddr> = bind
        .to_socket_addrs()
        .map_err(|source| Error::Net {
            addr: "<bind>".into(),
            source,
        })?
        .collect();
    let listener = TcpListener::bind(&addrs[..]).map_err(|source| Error::Net {
        addr: format!("{addrs:?}"),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| Error::Net {
        addr: format!("{addrs:?}"),
        source,
    })?;

    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(ServerStats::default());
    let predictor = Arc::new(predictor);
    let sampler = Arc::new(delay.sampler());

    let acceptor = {
        let stop = Arc::clone(&stop);
        let stats = Arc::clone(&stats);
        thread::Builder::new()
            .name("offload-accept".into())
            .spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let stream = match conn {
                        Ok(s) => s,
                        Err(e) => {
                            log::warn!("accept failed: {e}");
                            continue;
                        }
                    };
                    stats.connections.fetch_add(1, Ordering::Relaxed);
                    let predictor = Arc::clone(&predictor);
                    let sampler = Arc::clone(&sampler);
                    let stats = Arc::clone(&stats);
                    let spawned = thread::Builder::new().name("offload-conn".into()).spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = handle_connection(stream, &predictor, &sampler, &stats, config) {
                            stats.dropped.fetch_add(1, Ordering::Relaxed);
                            log::debug!("connection {peer:?} closed: {e}");
                        }
                    });
                    if let Err(e) = spawned {
                        log::warn!("could not spawn connection handler: {e}");
                    }
                }
            })
            .map_err(|source| Error::Net {
                addr: addr.to_string(),
                source,
            })?
    };

    Ok(ServerHandle {
        addr,
        stop,
        stats,
        acceptor: Some(acceptor),
    })
}

fn handle_connection(
    mut stream: TcpStream,
    predictor: &Predictor,
    sampler: &DelaySampler,
    stats: &ServerStats,
    config: ServerConfig,
) -> io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(config.read_timeout))?;
    loop {
        match read_request(&mut stream)? {
            Frame::Closed => return Ok(()),
            Frame::Malformed(len) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("bad payload length {len}"),
                ));
            }
            Frame::Payload(payload) => {
                let class = predictor.predict(&payload);
                thread::sleep(sampler.next_delay());
                stream.write_all(&encode_response(class))?;
                stats.responses.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

/// Persistent client connection.
pub struct OffloadClient {
    stream: TcpStream,
    addr: String,
}

impl OffloadClient {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let net = |source| Error::Net {
            addr: addr.to_string(),
            source,
        };
        let resolved = addr
            .to_socket_addrs()
            .map_err(net)?
            .next()
            .ok_or_else(|| net(io::Error::new(io::ErrorKind::NotFound, "address did not resolve")))?;
        let stream = TcpStream::connect_timeout(&resolved, timeout).map_err(net)?;
        stream.set_nodelay(true).map_err(net)?;
        stream.set_read_timeout(Some(timeout)).map_err(net)?;
        stream.set_write_timeout(Some(timeout)).map_err(net)?;
        Ok(OffloadClient {
            stream,
            addr: addr.to_string(),
        })
    }

    /// Sends one payload; returns the class and the round trip in milliseconds,
    /// measured from the first byte written to the last byte read.
    pub fn offload(&mut self, payload: &[u8]) -> Result<(u16, f64)> {
        let frame = encode_request(payload)?;
        let net = |source| Error::Net {
            addr: self.addr.clone(),
            source,
        };
        let start = Instant::now();
        self.stream.write_all(&frame).map_err(net)?;
        let mut reply = [0u8; RESPONSE_LEN];
        self.stream.read_exact(&mut reply).map_err(net)?;
        let rtt = start.elapsed().as_secs_f64() * 1000.0;
        Ok((decode_response(reply), rtt))
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// One-shot offload over a fresh connection. Connection setup is not timed.
pub fn offload(addr: &str, payload: &[u8]) -> Result<(u16, f64)> {
    OffloadClient::connect(addr, DEFAULT_TIMEOUT)?.offload(payload)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchStats {
    pub payload_bytes: usize,
    pub repetitions: usize,
    pub mean_rtt_ms: f64,
    pub stddev_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

impl BenchStats {
    /// Population statistics; percentiles by nearest rank.
    pub fn from_rtts(payload_bytes: usize, rtts: &[f64]) -> Result<Self> {
        if rtts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = rtts.len() as f64;
        let mean = rtts.iter().sum::<f64>() / n;
        let var = rtts.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let mut sorted = rtts.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| sorted[((p * n).ceil() as usize).clamp(1, sorted.len()) - 1];
        Ok(BenchStats {
            payload_bytes,
            repetitions: rtts.len(),
            mean_rtt_ms: mean,
            stddev_ms: var.sqrt(),
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
            p50_ms: rank(0.50),
            p99_ms: rank(0.99),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub stats: BenchStats,
    pub rtts: Vec<f64>,
    pub classes: Vec<u16>,
}

/// Sends `repetitions` random payloads of `payload_bytes` over one connection.
pub fn bench(addr: &str, payload_bytes: usize, repetitions: usize, seed: u64) -> Result<BenchResult> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    if payload_bytes == 0 {
        return Err(Error::Config("payload size must be >= 1".into()));
    }
    let wrap = |completed, e| Error::Bench {
        completed,
        source: Box::new(e),
    };
    let mut client = OffloadClient::connect(addr, DEFAULT_TIMEOUT).map_err(|e| wrap(0, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut payload = vec![0u8; payload_bytes];
    let mut rtts = Vec::with_capacity(repetitions);
    let mut classes = Vec::with_capacity(repetitions);
    for done in 0..repetitions {
        rng.fill_bytes(&mut payload);
        let (class, rtt) = client.offload(&payload).map_err(|e| wrap(done, e))?;
        rtts.push(rtt);
        classes.push(class);
    }
    Ok(BenchResult {
        stats: BenchStats::from_rtts(payload_bytes, &rtts)?,
        rtts,
        classes,
    })
}
