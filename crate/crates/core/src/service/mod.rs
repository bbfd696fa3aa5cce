//! Session-oriented TCP service over the virtual rig and the analysis
//! pipelines.
//!
//! Each session owns a worker thread that executes its commands strictly in
//! arrival order. A connection may turn itself into a snapshot stream with
//! `subscribe`; streams only read published snapshots and never wait on the
//! worker.

mod commands;
mod protocol;

pub use commands::StateView;
pub use protocol::{read_frame, write_frame, ErrorBody, ErrorCode, Request, Response, MAX_FRAME, PROTOCOL_VERSION};

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::config::AppConfig;
use crate::rig::RigSession;
use crate::spectra::{Band, ContrastModel, Probe};
use commands::{live_spectrum, params, session_command, stateless_command};

/// Highest snapshot rate a subscriber may request (Hz).
pub const MAX_STREAM_HZ: f64 = 10.0;

struct Snapshot {
    version: u64,
    state: StateView,
    probe: Probe,
    closed: bool,
}

struct Job {
    seq: u64,
    cmd: String,
    params: Value,
    reply: mpsc::Sender<Response>,
}

struct SessionHandle {
    id: String,
    jobs: mpsc::Sender<Job>,
    snapshot: Arc<Mutex<Snapshot>>,
    model: Arc<ContrastModel>,
    band: Band,
}

struct Shared {
    config: AppConfig,
    model: OnceLock<Result<Arc<ContrastModel>, String>>,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

impl Shared {
    fn model(&self) -> Result<Arc<ContrastModel>, String> {
        self.model
            .get_or_init(|| ContrastModel::new(self.config.device.clone()).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
    }

    fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

/// A server running on a background thread.
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
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, config: AppConfig) -> io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let shared = Arc::new(Shared { config, model: OnceLock::new(), sessions: Mutex::new(HashMap::new()) });
        Ok(Server { listener, shared })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Build the contrast model now instead of on the first `create-session`.
    pub fn warm_up(&self) -> Result<(), String> {
        self.shared.model().map(|_| ())
    }

    /// Accept connections until the process ends.
    pub fn run(self) -> io::Result<()> {
        self.accept_loop(&AtomicBool::new(false))
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let _ = self.accept_loop(&flag);
        });
        Ok(ServerHandle { addr, stop, thread: Some(thread) })
    }

    fn accept_loop(&self, stop: &AtomicBool) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let shared = self.shared.clone();
            std::thread::spawn(move || {
                let _ = serve_connection(stream, &shared);
            });
        }
        Ok(())
    }
}

fn serve_connection(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(body) = read_frame(&mut reader)? {
        let req = match serde_json::from_slice::<Request>(&body) {
            Ok(r) if r.v == PROTOCOL_VERSION => r,
            Ok(r) => {
                let resp = Response::err(Some(r.seq), r.session, ErrorCode::MalformedCommand, format!("unsupported protocol version {}", r.v));
                write_frame(&mut writer, &resp)?;
                continue;
            }
            Err(e) => {
                let seq = serde_json::from_slice::<Value>(&body).ok().and_then(|v| v.get("seq").and_then(Value::as_u64));
                write_frame(&mut writer, &Response::err(seq, None, ErrorCode::MalformedCommand, e.to_string()))?;
                continue;
            }
        };
        if req.cmd == "subscribe" {
            return stream_snapshots(req, shared, writer);
        }
        let resp = handle(req, shared);
        write_frame(&mut writer, &resp)?;
    }
    Ok(())
}

fn handle(req: Request, shared: &Arc<Shared>) -> Response {
    let Request { seq, session, cmd, params: p, .. } = req;
    match session {
        None => {
            let result = if cmd == "create-session" {
                create_session(shared, &p)
            } else {
                stateless_command(&shared.config, &cmd, &p)
            };
            match result {
                Ok(v) => Response::ok(seq, v.get("session").and_then(Value::as_str).map(String::from), v),
                Err((code, msg)) => Response::err(Some(seq), None, code, msg),
            }
        }
        Some(id) => {
            let unknown = || Response::err(Some(seq), Some(id.clone()), ErrorCode::UnknownSession, format!("no session `{id}`"));
            let Some(h) = shared.session(&id) else { return unknown() };
            let (tx, rx) = mpsc::channel();
            if h.jobs.send(Job { seq, cmd: cmd.clone(), params: p, reply: tx }).is_err() {
                return unknown();
            }
            let resp = rx.recv().unwrap_or_else(|_| unknown());
            if cmd == "close-session" && resp.ok {
                shared.sessions.lock().expect("session map").remove(&id);
            }
            resp
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct Create {
    seed: Option<u64>,
    pillar_center: Option<[f64; 2]>,
}

fn create_session(shared: &Arc<Shared>, p: &Value) -> Result<Value, (ErrorCode, String)> {
    let c: Create = params(p)?;
    let model = shared.model().map_err(|e| (ErrorCode::RigError, e))?;
    let seed = c.seed.unwrap_or(crate::DEFAULT_SEED);
    let rig_cfg = shared.config.rig.clone();
    let session = match c.pillar_center {
        Some(center) => RigSession::with_pillar_at(model.clone(), rig_cfg, seed, center),
        None => RigSession::with_model(model.clone(), rig_cfg, seed),
    }
    .map_err(|e| (ErrorCode::RigError, e.to_string()))?;
    let id = Uuid::new_v4().to_string();
    let state = StateView::of(&session);
    let snapshot = Arc::new(Mutex::new(Snapshot { version: 0, state: state.clone(), probe: session.probe(), closed: false }));
    let (tx, rx) = mpsc::channel();
    let handle = Arc::new(SessionHandle { id: id.clone(), jobs: tx, snapshot: snapshot.clone(), model, band: shared.config.rig.band });
    std::thread::spawn({
        let id = id.clone();
        move || session_worker(id, session, rx, snapshot)
    });
    shared.sessions.lock().expect("session map").insert(id.clone(), handle);
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    Ok(json!({ "session": id, "seed": seed, "created_at": created_at, "state": state }))
}

fn session_worker(id: String, mut session: RigSession, jobs: mpsc::Receiver<Job>, snapshot: Arc<Mutex<Snapshot>>) {
    let mut last_seq: Option<u64> = None;
    for job in jobs.iter() {
        let sid = Some(id.clone());
        if last_seq.is_some_and(|l| job.seq <= l) {
            let msg = format!("sequence {} not above {}", job.seq, last_seq.unwrap_or_default());
            let _ = job.reply.send(Response::err(Some(job.seq), sid, ErrorCode::BadSequence, msg));
            continue;
        }
        last_seq = Some(job.seq);
        if job.cmd == "close-session" {
            snapshot.lock().expect("snapshot").closed = true;
            let _ = job.reply.send(Response::ok(job.seq, sid, json!({ "closed": true })));
            return;
        }
        let resp = match session_command(&mut session, &job.cmd, &job.params) {
            Ok(v) => Response::ok(job.seq, sid, v),
            Err((code, msg)) => Response::err(Some(job.seq), sid, code, msg),
        };
        let state = StateView::of(&session);
        let probe = session.probe();
        {
            let mut snap = snapshot.lock().expect("snapshot");
            if snap.state != state || snap.probe != probe {
                snap.version += 1;
                snap.state = state;
                snap.probe = probe;
            }
        }
        let _ = job.reply.send(resp);
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Subscribe {
    rate_hz: f64,
}

impl Default for Subscribe {
    fn default() -> Self {
        Subscribe { rate_hz: MAX_STREAM_HZ }
    }
}

/// Answer `subscribe`, then push a snapshot frame whenever the session state
/// changed, at most `rate_hz` times per second. The first frame is sent
/// immediately. Ends when the session closes or the client goes away.
fn stream_snapshots(req: Request, shared: &Arc<Shared>, mut w: BufWriter<TcpStream>) -> io::Result<()> {
    let Request { seq, session, params: p, .. } = req;
    let Some(h) = session.as_deref().and_then(|id| shared.session(id)) else {
        let resp = Response::err(Some(seq), session, ErrorCode::UnknownSession, "no such session");
        return write_frame(&mut w, &resp);
    };
    let sub: Subscribe = match params(&p) {
        Ok(s) => s,
        Err((code, msg)) => return write_frame(&mut w, &Response::err(Some(seq), session, code, msg)),
    };
    if !(sub.rate_hz > 0.0) {
        return write_frame(&mut w, &Response::err(Some(seq), session, ErrorCode::InvalidParams, "rate_hz must be positive"));
    }
    let period = Duration::from_secs_f64(1.0 / sub.rate_hz.min(MAX_STREAM_HZ));
    write_frame(&mut w, &Response::ok(seq, session.clone(), json!({ "subscribed": true, "rate_hz": sub.rate_hz.min(MAX_STREAM_HZ) })))?;
    let mut sent: Option<u64> = None;
    let mut frame = 0u64;
    loop {
        let tick = Instant::now();
        let (version, state, probe, closed) = {
            let s = h.snapshot.lock().expect("snapshot");
            (s.version, s.state.clone(), s.probe, s.closed)
        };
        if sent != Some(version) || closed {
            let spectrum = if closed { Value::Null } else { live_spectrum(&h.model, &probe, &h.band) };
            let msg = json!({
                "v": PROTOCOL_VERSION,
                "type": "snapshot",
                "session": h.id,
                "frame": frame,
                "version": version,
                "closed": closed,
                "state": state,
                "spectrum": spectrum,
            });
            write_frame(&mut w, &msg)?;
            frame += 1;
            sent = Some(version);
            if closed {
                return Ok(());
            }
        }
        std::thread::sleep(period.saturating_sub(tick.elapsed()));
    }
}
