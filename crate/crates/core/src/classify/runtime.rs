//! Client for an out-of-process scoring runtime.
//!
//! Wire format, one UTF-8 JSON object per line in each direction:
//!
//! ```text
//! -> {"id":7,"texts":["tiroteio agora","bom dia"]}
//! <- {"id":7,"scores":[0.93,0.02]}
//! ```
//!
//! Replies are matched to requests by `id`, so a runtime may answer out of
//! order. The runtime owns tokenization and truncates every input to
//! `max_token_length` tokens; the limit is passed to child processes in the
//! `FIREWATCH_MAX_TOKEN_LENGTH` environment variable.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ClassifyError, Classifier, ScoredPrediction, DEFAULT_THRESHOLD};
use crate::textprep::NormalizedMessage;

pub const MAX_TOKEN_LENGTH_ENV: &str = "FIREWATCH_MAX_TOKEN_LENGTH";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RuntimeTransport {
    /// Spawn a child and talk over its stdin/stdout.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Connect to a runtime listening on a local socket address.
    Tcp { addr: String },
}

/// Fine-tuning recipe of the hosted model, kept for the model manifest.
/// Training itself happens inside the runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparameters {
    pub base_model: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub dropout: f64,
    pub early_stopping: bool,
}

impl Default for TrainingHyperparameters {
    fn default() -> Self {
        Self {
            base_model: "neuralmind/bert-large-portuguese-cased".to_string(),
            optimizer: "adam".to_string(),
            learning_rate: 2e-5,
            dropout: 0.05,
            early_stopping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRuntimeConfig {
    pub transport: RuntimeTransport,
    pub model_id: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_tokens")]
    pub max_token_length: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub hyperparameters: TrainingHyperparameters,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_max_tokens() -> usize {
    128
}
fn default_batch_size() -> usize {
    32
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_in_flight() -> usize {
    4
}

impl ExternalRuntimeConfig {
    pub fn new(transport: RuntimeTransport, model_id: impl Into<String>) -> Self {
        Self {
            transport,
            model_id: model_id.into(),
            threshold: default_threshold(),
            max_token_length: default_max_tokens(),
            batch_size: default_batch_size(),
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_in_flight(),
            hyperparameters: TrainingHyperparameters::default(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: String| Err(ClassifyError::InvalidConfig(m));
        if self.max_token_length < 8 {
            return bad(format!("max_token_length must be >= 8, got {}", self.max_token_length));
        }
        if self.timeout_ms == 0 {
            return bad("timeout must be positive".into());
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return bad("batch_size and max_in_flight must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        Ok(())
    }
}

type Reply = Result<Vec<f64>, ClassifyError>;

#[derive(Default)]
struct Pending {
    waiters: HashMap<u64, mpsc::Sender<Reply>>,
    closed: Option<String>,
}

struct Shared {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Mutex<Pending>,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
    next_id: AtomicU64,
}

impl Shared {
    fn close(&self, reason: &str) {
        let mut p = self.pending.lock().unwrap();
        p.closed = Some(reason.to_string());
        for (_, tx) in p.waiters.drain() {
            let _ = tx.send(Err(ClassifyError::Transport(reason.to_string())));
        }
    }
}

struct Slot<'a>(&'a Shared);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.slot_free.notify_one();
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    texts: Vec<&'a str>,
}

/// Parses a reply line. The outer error means the line cannot be matched
/// to any request.
fn parse_reply(line: &str) -> Result<(u64, Reply), String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let id = v.get("id").and_then(serde_json::Value::as_u64).ok_or("reply without numeric id")?;
    let scores = match v.get("scores").and_then(serde_json::Value::as_array) {
        None => Err(ClassifyError::Protocol(format!("reply {id} has no scores array"))),
        Some(arr) => arr
            .iter()
            .map(|s| {
                s.as_f64()
                    .ok_or_else(|| ClassifyError::Protocol(format!("reply {id}: non-numeric score {s}")))
            })
            .collect(),
    };
    Ok((id, scores))
}

fn spawn_reader<R: BufRead + Send + 'static>(reader: R, shared: Arc<Shared>) {
    std::thread::Builder::new()
        .name("runtime-reader".into())
        .spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                match parse_reply(&line) {
                    Ok((id, reply)) => {
                        let tx = shared.pending.lock().unwrap().waiters.remove(&id);
                        match tx {
                            Some(tx) => {
                                let _ = tx.send(reply);
                            }
                            None => tracing::warn!(id, "reply for unknown or expired request"),
                        }
                    }
                    Err(reason) => tracing::warn!(%reason, "unparseable runtime reply"),
                }
            }
            shared.close("runtime closed the connection");
        })
        .expect("spawn runtime reader");
}

/// Connected scoring runtime. Safe to share across threads; at most
/// `max_in_flight` requests are outstanding at once.
pub struct RuntimeClient {
    cfg: ExternalRuntimeConfig,
    shared: Arc<Shared>,
    child: Option<Mutex<Child>>,
    socket: Option<TcpStream>,
}

impl std::fmt::Debug for RuntimeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuntimeClient").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl RuntimeClient {
    pub fn connect(cfg: ExternalRuntimeConfig) -> Result<Self, ClassifyError> {
        cfg.validate()?;
        let transport_err = |e: std::io::Error| ClassifyError::Transport(e.to_string());
        match cfg.transport.clone() {
            RuntimeTransport::Command { program, args } => {
                let mut child = Command::new(&program)
                    .args(&args)
                    .env(MAX_TOKEN_LENGTH_ENV, cfg.max_token_length.to_string())
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ClassifyError::Transport(format!("cannot spawn {program}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let shared = Self::shared(Box::new(stdin));
                spawn_reader(BufReader::new(stdout), shared.clone());
                Ok(Self {
                    cfg,
                    shared,
                    child: Some(Mutex::new(child)),
                    socket: None,
                })
            }
            RuntimeTransport::Tcp { addr } => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(transport_err)?
                    .next()
                    .ok_or_else(|| ClassifyError::Transport(format!("cannot resolve {addr}")))?;
                let stream = TcpStream::connect_timeout(&sock, cfg.timeout()).map_err(transport_err)?;
                stream.set_nodelay(true).ok();
                let reader = stream.try_clone().map_err(transport_err)?;
                let writer = stream.try_clone().map_err(transport_err)?;
                let shared = Self::shared(Box::new(writer));
                spawn_reader(BufReader::new(reader), shared.clone());
                Ok(Self {
                    cfg,
                    shared,
                    child: None,
                    socket: Some(stream),
                })
            }
        }
    }

    fn shared(writer: Box<dyn Write + Send>) -> Arc<Shared> {
        Arc::new(Shared {
            writer: Mutex::new(writer),
            pending: Mutex::new(Pending::default()),
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &ExternalRuntimeConfig {
        &self.cfg
    }

    fn acquire(&self) -> Slot<'_> {
        let mut n = self.shared.in_flight.lock().unwrap();
        while *n >= self.cfg.max_in_flight {
            n = self.shared.slot_free.wait(n).unwrap();
        }
        *n += 1;
        Slot(&self.shared)
    }

    /// Sends one request and waits for its reply.
    fn request(&self, texts: &[&str]) -> Result<Vec<f64>, ClassifyError> {
        let _slot = self.acquire();
        let id = self.shared.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel();
        {
            let mut p = self.shared.pending.lock().unwrap();
            if let Some(reason) = &p.closed {
                return Err(ClassifyError::Transport(reason.clone()));
            }
            p.waiters.insert(id, tx);
        }
        let mut line = serde_json::to_vec(&Request {
            id,
            texts: texts.to_vec(),
        })
        .expect("request serializes");
        line.push(b'\n');
        let written = {
            let mut w = self.shared.writer.lock().unwrap();
            w.write_all(&line).and_then(|_| w.flush())
        };
        if let Err(e) = written {
            self.shared.pending.lock().unwrap().waiters.remove(&id);
            return Err(ClassifyError::Transport(e.to_string()));
        }
        let scores = match rx.recv_timeout(self.cfg.timeout()) {
            Ok(reply) => reply?,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.shared.pending.lock().unwrap().waiters.remove(&id);
                return Err(ClassifyError::Timeout(self.cfg.timeout()));
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                return Err(ClassifyError::Transport("reply channel dropped".into()));
            }
        };
        if scores.len() != texts.len() {
            return Err(ClassifyError::Protocol(format!(
                "request {id}: sent {} texts, got {} scores",
                texts.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(ClassifyError::Protocol(format!("request {id}: score {bad} outside [0, 1]")));
        }
        Ok(scores)
    }
}

impl Classifier for RuntimeClient {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn threshold(&self) -> f64 {
        self.cfg.threshold
    }

    fn score_batch(&self, batch: &[NormalizedMessage]) -> Result<Vec<f64>, ClassifyError> {
        let texts: Vec<&str> = batch.iter().map(|m| m.text.as_str()).collect();
        let chunks: Vec<&[&str]> = texts.chunks(self.cfg.batch_size).collect();
        match chunks.len() {
            0 => Ok(Vec::new()),
            1 => self.request(chunks[0]),
            _ => {
                let results: Vec<Result<Vec<f64>, ClassifyError>> = std::thread::scope(|s| {
                    let handles: Vec<_> = chunks.iter().map(|c| s.spawn(move || self.request(c))).collect();
                    handles.into_iter().map(|h| h.join().expect("runtime request thread")).collect()
                });
                let mut out = Vec::with_capacity(texts.len());
                for r in results {
                    out.extend(r?);
                }
                Ok(out)
            }
        }
    }
}

impl Drop for RuntimeClient {
    fn drop(&mut self) {
        if let Some(sock) = &self.socket {
            let _ = sock.shutdown(Shutdown::Both);
        }
        if let Some(child) = &self.child {
            let mut child = child.lock().unwrap();
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Scores a batch through the runtime, one prediction per input in order.
pub fn external_score(client: &RuntimeClient, batch: &[NormalizedMessage]) -> Result<Vec<ScoredPrediction>, ClassifyError> {
    client.predict_batch(batch)
}
