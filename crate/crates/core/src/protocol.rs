//! Newline-delimited JSON protocol between the simulator and an external
//! agent, a simplified stand-in for the E2 split between RAN and RIC.
//!
//! Each line is one JSON object with a `type` tag and a client-chosen,
//! strictly increasing `id` that the response echoes. A session walks
//! `HELLO → INIT → (RESET → STEP*)* → BYE`; every request gets exactly one
//! response. See `protocol.md` at the repository root for the schema.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datalake::KpmRecord;
use crate::env::{ActionBits, EnergySavingEnv, EnvStep, Info, Observation};
use crate::scenario::{build_default_scenario, ScenarioConfig};
use crate::{Error, Result};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireMessage {
    Hello {
        id: u64,
        version: String,
    },
    /// Request carries `config` (default scenario when absent); the
    /// acknowledgement carries the space sizes.
    Init {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<Box<ScenarioConfig>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_gnbs: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        observation_len: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_actions: Option<u64>,
    },
    /// Answered with a `STEP_RESULT` holding the initial observation.
    Reset {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Step {
        id: u64,
        action: ActionBits,
    },
    StepResult {
        id: u64,
        observation: Observation,
        reward: f64,
        terminated: bool,
        info: Info,
    },
    /// Request for, or delivery of, the UE KPM rows of the latest tick.
    KpmBatch {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        records: Option<Vec<KpmRecord>>,
    },
    Error {
        id: Option<u64>,
        reason: String,
    },
    Bye {
        id: u64,
    },
}

impl WireMessage {
    pub fn id(&self) -> Option<u64> {
        match self {
            WireMessage::Hello { id, .. }
            | WireMessage::Init { id, .. }
            | WireMessage::Reset { id, .. }
            | WireMessage::Step { id, .. }
            | WireMessage::StepResult { id, .. }
            | WireMessage::KpmBatch { id, .. }
            | WireMessage::Bye { id } => Some(*id),
            WireMessage::Error { id, .. } => *id,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialise")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    pub fn step_result(id: u64, step: EnvStep) -> Self {
        WireMessage::StepResult {
            id,
            observation: step.observation,
            reward: step.reward,
            terminated: step.terminated,
            info: step.info,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    Connected,
    Greeted,
    Ready,
    Running,
}

/// Protocol state machine for one connection. Transport independent: the
/// TCP server, transcript replay and tests all drive it line by line.
#[derive(Debug)]
pub struct Session {
    phase: Phase,
    env: Option<EnergySavingEnv>,
    last_id: Option<u64>,
    closed: bool,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Self {
            phase: Phase::Connected,
            env: None,
            last_id: None,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Handles one request line and returns the response line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match WireMessage::from_line(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => WireMessage::Error {
                id: None,
                reason: format!("malformed: {e}"),
            },
        };
        response.to_line()
    }

    pub fn handle(&mut self, msg: WireMessage) -> WireMessage {
        let id = msg.id();
        if let Some(id) = id {
            if self.last_id.is_some_and(|last| id <= last) {
                return error(Some(id), "malformed: message id must increase".into());
            }
            self.last_id = Some(id);
        }
        match msg {
            WireMessage::Hello { id, version } => {
                if self.phase != Phase::Connected {
                    return self.order_violation(id, "HELLO already received");
                }
                if version != PROTOCOL_VERSION {
                    return error(Some(id), format!("unsupported protocol version {version:?}"));
                }
                self.phase = Phase::Greeted;
                WireMessage::Hello {
                    id,
                    version: PROTOCOL_VERSION.into(),
                }
            }
            WireMessage::Init { id, config, .. } => {
                if self.phase == Phase::Connected {
                    return self.order_violation(id, "HELLO required");
                }
                let config = config.map_or_else(|| build_default_scenario(0), |c| *c);
                match EnergySavingEnv::new(config) {
                    Ok(env) => {
                        let n = env.n_gnbs();
                        let ack = WireMessage::Init {
                            id,
                            config: None,
                            n_gnbs: Some(n),
                            observation_len: Some(env.observation_len()),
                            n_actions: 1u64.checked_shl(n as u32).filter(|_| n < 64),
                        };
                        self.env = Some(env);
                        self.phase = Phase::Ready;
                        ack
                    }
                    Err(e) => error(Some(id), e.to_string()),
                }
            }
            WireMessage::Reset { id, seed } => {
                let Some(env) = self.env.as_mut().filter(|_| self.phase >= Phase::Ready) else {
                    return self.order_violation(id, "INIT required");
                };
                if let Some(seed) = seed {
                    env.set_seed(seed);
                }
                match env.reset() {
                    Ok((observation, info)) => {
                        self.phase = Phase::Running;
                        WireMessage::StepResult {
                            id,
                            observation,
                            reward: 0.0,
                            terminated: false,
                            info,
                        }
                    }
                    Err(e) => error(Some(id), e.to_string()),
                }
            }
            WireMessage::Step { id, action } => {
                if self.phase < Phase::Ready {
                    return self.order_violation(id, "INIT required");
                }
                if self.phase == Phase::Ready {
                    return error(Some(id), Error::Lifecycle("reset required".into()).to_string());
                }
                let env = self.env.as_mut().expect("running session has an env");
                match env.step(&action) {
                    Ok(step) => WireMessage::step_result(id, step),
                    Err(e @ Error::Lifecycle(_)) => {
                        self.phase = Phase::Ready;
                        error(Some(id), e.to_string())
                    }
                    Err(e) => error(Some(id), e.to_string()),
                }
            }
            WireMessage::KpmBatch { id, records: None } => {
                if self.phase != Phase::Running {
                    return self.order_violation(id, "RESET required");
                }
                let env = self.env.as_ref().expect("running session has an env");
                WireMessage::KpmBatch {
                    id,
                    records: Some(env.last_ue_rows().to_vec()),
                }
            }
            WireMessage::Bye { id } => {
                self.closed = true;
                WireMessage::Bye { id }
            }
            other => error(other.id(), "malformed: not a request message".into()),
        }
    }

    /// Rejects an out-of-order request and drops back to the post-INIT
    /// state (or stays put before INIT).
    fn order_violation(&mut self, id: u64, what: &str) -> WireMessage {
        if self.env.is_some() {
            self.phase = Phase::Ready;
        }
        error(Some(id), format!("protocol: {what}"))
    }
}

fn error(id: Option<u64>, reason: String) -> WireMessage {
    WireMessage::Error { id, reason }
}

/// Serves one connection until BYE or EOF. With `transcript`, every
/// request/response pair is appended to it.
pub fn serve_connection<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    mut transcript: Option<&mut Transcript>,
) -> Result<()> {
    let mut session = Session::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let response = session.handle_line(line);
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if let Some(t) = transcript.as_deref_mut() {
            t.push(line, &response);
        }
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

/// A bound TCP server. Each accepted connection runs its own [`Session`] on
/// its own thread; sessions share nothing.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    shutdown: Arc<AtomicBool>,
}

/// Stops a running [`Server`] from another thread.
#[derive(Debug, Clone)]
pub struct ShutdownHandle {
    addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            shutdown: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<std::net::SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub fn shutdown_handle(&self) -> Result<ShutdownHandle> {
        Ok(ShutdownHandle {
            addr: self.local_addr()?,
            shutdown: Arc::clone(&self.shutdown),
        })
    }

    /// Accepts connections until shut down.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            if self.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                let result = stream
                    .try_clone()
                    .map_err(Error::from)
                    .and_then(|read_half| serve_connection(BufReader::new(read_half), stream, None));
                if let Err(e) = result {
                    eprintln!("session {peer:?} ended with error: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Binds `bind_address:port` and serves until the process exits.
pub fn serve(bind_address: &str, port: u16) -> Result<()> {
    Server::bind((bind_address, port))?.run()
}

/// Blocking line-oriented client, mainly for tests and tooling.
#[derive(Debug)]
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self { reader, writer, next_id: 1 })
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Sends a raw line and returns the raw response line.
    pub fn call_line(&mut self, line: &str) -> Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut response = String::new();
        if self.reader.read_line(&mut response)? == 0 {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        Ok(response.trim_end().to_string())
    }

    pub fn call(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        let line = self.call_line(&msg.to_line())?;
        WireMessage::from_line(&line)
    }
}

/// A recorded session: request lines prefixed `> `, response lines `< `.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub exchanges: Vec<(String, String)>,
}

impl Transcript {
    pub fn push(&mut self, request: &str, response: &str) {
        self.exchanges.push((request.to_string(), response.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (req, resp) in &self.exchanges {
            out.push_str("> ");
            out.push_str(req);
            out.push_str("\n< ");
            out.push_str(resp);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut exchanges = Vec::new();
        let mut pending: Option<(usize, String)> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(req) = line.strip_prefix("> ") {
                if let Some((at, _)) = pending {
                    return Err(Error::Transcript { line: at, reason: "request without response".into() });
                }
                pending = Some((line_no, req.to_string()));
            } else if let Some(resp) = line.strip_prefix("< ") {
                let Some((_, req)) = pending.take() else {
                    return Err(Error::Transcript { line: line_no, reason: "response without request".into() });
                };
                exchanges.push((req, resp.to_string()));
            } else {
                return Err(Error::Transcript { line: line_no, reason: "expected '> ' or '< ' prefix".into() });
            }
        }
        if let Some((at, _)) = pending {
            return Err(Error::Transcript { line: at, reason: "request without response".into() });
        }
        Ok(Self { exchanges })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayDigest {
    pub messages: usize,
    /// Hex SHA-256 over every response line, each followed by `\n`.
    pub sha256: String,
}

impl ReplayDigest {
    pub fn is_empty(&self) -> bool {
        self.messages == 0
    }
}

/// Replays the requests of `transcript` against a fresh session and checks
/// every response byte for byte.
pub fn session_transcript_replay(transcript: &Transcript) -> Result<ReplayDigest> {
    let mut session = Session::new();
    let mut hasher = Sha256::new();
    for (k, (request, expected)) in transcript.exchanges.iter().enumerate() {
        let actual = session.handle_line(request);
        if &actual != expected {
            return Err(Error::ReplayMismatch {
                // 1-based line number of the response in the text form
                line: 2 * k + 2,
                expected: expected.clone(),
                actual,
            });
        }
        hasher.update(actual.as_bytes());
        hasher.update(b"\n");
    }
    Ok(ReplayDigest {
        messages: transcript.exchanges.len(),
        sha256: hex::encode(hasher.finalize()),
    })
}
