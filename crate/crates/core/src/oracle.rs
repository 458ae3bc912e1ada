//! The simulated WUP server and the attacker's view of it.
//!
//! The server answers a session only when it opens cleanly; anything else
//! gets silence. From the outside that is a one-bit decryption oracle, and
//! [`DecryptionOracle`] is exactly that interface: send a session, observe
//! a response or nothing.

use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rsa::{RsaKeyPair, RsaPublicKey};
use crate::wup::{
    self, encrypt_response, frame_read, frame_write, open_session_oaep, open_session_with_width, EncryptedSession,
    FrameError, MessageKind, WupMessage, SESSION_KEY_BITS,
};

/// How the server expects the session key to be wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyWrapping {
    /// Unpadded RSA, low `key_bits` bits of the plaintext kept.
    Textbook,
    /// OAEP-wrapped 16-byte key.
    Oaep,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub key_pair: RsaKeyPair,
    pub respond_on_valid: bool,
    /// Echo one line per query to stderr.
    pub query_log: bool,
    pub artificial_latency: Duration,
    /// Width of the truncated session key (128 in the real protocol).
    pub key_bits: u32,
    pub wrapping: KeyWrapping,
}

impl OracleConfig {
    pub fn new(key_pair: RsaKeyPair) -> Self {
        OracleConfig {
            key_pair,
            respond_on_valid: true,
            query_log: false,
            artificial_latency: Duration::ZERO,
            key_bits: SESSION_KEY_BITS,
            wrapping: KeyWrapping::Textbook,
        }
    }

    pub fn with_wrapping(mut self, wrapping: KeyWrapping) -> Self {
        self.wrapping = wrapping;
        self
    }

    pub fn with_key_bits(mut self, key_bits: u32) -> Self {
        assert!((1..=SESSION_KEY_BITS).contains(&key_bits));
        self.key_bits = key_bits;
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.artificial_latency = latency;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub timestamp_ms: u64,
    pub client_id: String,
    pub accepted: bool,
    #[serde(serialize_with = "hex_digest")]
    pub rsa_blob_digest: [u8; 32],
}

fn hex_digest<S: serde::Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(d))
}

/// Append-only, totally ordered log of every query the server saw.
#[derive(Debug, Default)]
pub struct OracleTranscript {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl OracleTranscript {
    fn append(&self, entry: TranscriptEntry) {
        self.entries.lock().expect("transcript lock poisoned").push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn accepted(&self) -> usize {
        self.entries.lock().expect("transcript lock poisoned").iter().filter(|e| e.accepted).count()
    }

    pub fn snapshot(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock poisoned").clone()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for entry in self.snapshot() {
            serde_json::to_writer(&mut w, &entry)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// The fixed reply sent to every valid request.
pub fn canned_response() -> WupMessage {
    WupMessage::new(MessageKind::Response).with_field("ret", "0").with_field("msg", "ok")
}

pub struct OracleServer {
    cfg: OracleConfig,
    transcript: OracleTranscript,
}

impl OracleServer {
    pub fn new(cfg: OracleConfig) -> Self {
        OracleServer {
            cfg,
            transcript: OracleTranscript::default(),
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn public_key(&self) -> &RsaPublicKey {
        &self.cfg.key_pair.public
    }

    pub fn transcript(&self) -> &OracleTranscript {
        &self.transcript
    }

    /// Open the session and, if it is valid, return the encrypted canned
    /// response. Every call appends exactly one transcript entry.
    pub fn handle_session(&self, sess: &EncryptedSession, client_id: &str) -> Option<Vec<u8>> {
        if !self.cfg.artificial_latency.is_zero() {
            thread::sleep(self.cfg.artificial_latency);
        }
        let opened = match self.cfg.wrapping {
            KeyWrapping::Textbook => open_session_with_width(&self.cfg.key_pair, sess, self.cfg.key_bits),
            KeyWrapping::Oaep => open_session_oaep(&self.cfg.key_pair, sess),
        };
        let accepted = opened.is_ok();
        let reply = match opened {
            Ok((key, _request)) if self.cfg.respond_on_valid => encrypt_response(&key, &canned_response()).ok(),
            _ => None,
        };
        self.record(client_id, &sess.rsa_blob, accepted);
        reply
    }

    /// Same as [`handle_session`](Self::handle_session) for a raw session
    /// body; unparseable bodies are logged as rejected.
    pub fn handle_wire(&self, body: &[u8], client_id: &str) -> Option<Vec<u8>> {
        match EncryptedSession::from_wire(body, self.public_key().byte_len()) {
            Ok(sess) => self.handle_session(&sess, client_id),
            Err(_) => {
                self.record(client_id, body, false);
                None
            }
        }
    }

    fn record(&self, client_id: &str, blob: &[u8], accepted: bool) {
        let entry = TranscriptEntry {
            timestamp_ms: now_millis(),
            client_id: client_id.to_string(),
            accepted,
            rsa_blob_digest: Sha256::digest(blob).into(),
        };
        if self.cfg.query_log {
            eprintln!(
                "[oracle] {} client={} accepted={} blob={}",
                entry.timestamp_ms,
                entry.client_id,
                entry.accepted,
                &hex::encode(entry.rsa_blob_digest)[..16]
            );
        }
        self.transcript.append(entry);
    }
}

/// Handle to a running TCP oracle.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting, wait for in-flight connections, and join the
    /// accept loop.
    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    /// Block until the accept loop exits (after a shutdown from another
    /// handle clone of the stop flag, e.g. a signal handler).
    pub fn wait(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop_flag(&self) -> StopSignal {
        StopSignal {
            addr: self.addr,
            stop: Arc::clone(&self.stop),
        }
    }

    fn stop_inner(&mut self) {
        if let Some(t) = self.accept_thread.take() {
            StopSignal {
                addr: self.addr,
                stop: Arc::clone(&self.stop),
            }
            .trigger();
            let _ = t.join();
        }
        let deadline = Instant::now() + Duration::from_secs(10);
        while self.active.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_inner();
    }
}

/// Cloneable trigger that stops a running service.
#[derive(Clone)]
pub struct StopSignal {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl StopSignal {
    pub fn trigger(&self) {
        if !self.stop.swap(true, Ordering::SeqCst) {
            // wake the blocking accept
            let _ = TcpStream::connect_timeout(&wake_addr(self.addr), Duration::from_secs(1));
        }
    }
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    if addr.ip().is_unspecified() {
        let ip = if addr.is_ipv4() {
            std::net::Ipv4Addr::LOCALHOST.into()
        } else {
            std::net::Ipv6Addr::LOCALHOST.into()
        };
        SocketAddr::new(ip, addr.port())
    } else {
        addr
    }
}

const CONNECTION_READ_TIMEOUT: Duration = Duration::from_secs(5);

/// Serve `server` on `addr`: one frame in, at most one frame out, close.
/// Each connection gets its own thread and one transcript entry.
pub fn serve_tcp<A: ToSocketAddrs>(server: Arc<OracleServer>, addr: A) -> io::Result<ServiceHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let active = Arc::new(AtomicUsize::new(0));
    let (stop_c, active_c) = (Arc::clone(&stop), Arc::clone(&active));
    let accept_thread = thread::Builder::new().name("oracle-accept".into()).spawn(move || {
        for conn in listener.incoming() {
            if stop_c.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let server = Arc::clone(&server);
            let active = Arc::clone(&active_c);
            active.fetch_add(1, Ordering::SeqCst);
            let spawned = thread::Builder::new().name("oracle-conn".into()).spawn(move || {
                serve_connection(&server, stream);
                active.fetch_sub(1, Ordering::SeqCst);
            });
            if spawned.is_err() {
                active_c.fetch_sub(1, Ordering::SeqCst);
            }
        }
    })?;
    Ok(ServiceHandle {
        addr: local,
        stop,
        active,
        accept_thread: Some(accept_thread),
    })
}

fn serve_connection(server: &OracleServer, mut stream: TcpStream) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "unknown".into());
    let _ = stream.set_read_timeout(Some(CONNECTION_READ_TIMEOUT));
    match frame_read(&mut stream) {
        Ok(body) => {
            if let Some(reply) = server.handle_wire(&body, &peer) {
                let _ = frame_write(&mut stream, &reply);
            }
        }
        Err(_) => server.record(&peer, &[], false),
    }
    let _ = stream.shutdown(Shutdown::Both);
}

/// What the attacker observes for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleReply {
    Response(Vec<u8>),
    Silence,
}

impl OracleReply {
    pub fn responded(&self) -> bool {
        matches!(self, OracleReply::Response(_))
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    /// The query never reached the server or the answer was cut off; safe
    /// to retry.
    #[error("oracle transport failure: {0}")]
    Transport(String),
}

/// Anything that takes a session and answers with a response or silence.
pub trait DecryptionOracle {
    fn query(&mut self, sess: &EncryptedSession) -> Result<OracleReply, OracleError>;
}

/// Direct calls into an [`OracleServer`] in this process.
pub struct InProcessOracle {
    server: Arc<OracleServer>,
    client_id: String,
}

impl InProcessOracle {
    pub fn new(server: Arc<OracleServer>, client_id: impl Into<String>) -> Self {
        InProcessOracle {
            server,
            client_id: client_id.into(),
        }
    }
}

impl DecryptionOracle for InProcessOracle {
    fn query(&mut self, sess: &EncryptedSession) -> Result<OracleReply, OracleError> {
        Ok(match self.server.handle_session(sess, &self.client_id) {
            Some(r) => OracleReply::Response(r),
            None => OracleReply::Silence,
        })
    }
}

/// Default time an attacker waits before calling a quiet server silent.
pub const DEFAULT_ORACLE_TIMEOUT: Duration = Duration::from_secs(2);

/// Talks to a [`serve_tcp`] service, one connection per query.
pub struct TcpOracle {
    addr: SocketAddr,
    timeout: Duration,
}

impl TcpOracle {
    pub fn new(addr: SocketAddr) -> Self {
        TcpOracle {
            addr,
            timeout: DEFAULT_ORACLE_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Send an arbitrary body; used by tests to probe malformed input.
    pub fn send_raw(&self, body: &[u8]) -> Result<OracleReply, OracleError> {
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout)
            .map_err(|e| OracleError::Transport(format!("connect {}: {e}", self.addr)))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| OracleError::Transport(e.to_string()))?;
        frame_write(&mut stream, body).map_err(|e| OracleError::Transport(e.to_string()))?;
        match frame_read(&mut stream) {
            Ok(reply) => Ok(OracleReply::Response(reply)),
            Err(FrameError::Closed) => Ok(OracleReply::Silence),
            Err(FrameError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Ok(OracleReply::Silence)
            }
            Err(FrameError::Io(e)) if e.kind() == io::ErrorKind::ConnectionReset => Ok(OracleReply::Silence),
            Err(e) => Err(OracleError::Transport(e.to_string())),
        }
    }
}

impl DecryptionOracle for TcpOracle {
    fn query(&mut self, sess: &EncryptedSession) -> Result<OracleReply, OracleError> {
        self.send_raw(&sess.to_wire())
    }
}

/// Check a response the way the honest client would.
pub fn read_response(key: &crate::victim_prng::SessionKey, reply: &[u8]) -> Result<WupMessage, wup::WupError> {
    wup::decrypt_response(key, reply)
}
