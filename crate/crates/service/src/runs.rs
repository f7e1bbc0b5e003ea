//! Run lifecycle inside the service: one orchestrator thread per active run,
//! fed through a serialized command queue.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use objevo_agents::gates::{resolve_gate, ApprovalChannel, ApprovalGate, GateDecision, GateResolution, GateResolver};
use objevo_agents::store::RunDir;
use objevo_agents::{AgentError, Agents, AutonomyMode, Orchestrator, Outcome, RunConfig, RunState, RunStatus};
use objevo_core::ScorerRegistry;
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, Notify};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: AutonomyMode,
    pub status: RunStatus,
    pub iteration: u32,
    pub best_aggregate: Option<f64>,
    pub started_at: Option<String>,
    pub updated_at: Option<String>,
}

pub enum Command {
    Resolve {
        gate_id: String,
        resolution: GateResolution,
        ack: oneshot::Sender<Result<ApprovalGate, AgentError>>,
    },
    Abort,
}

/// Queue of the orchestrator thread currently driving a run. `sender` is
/// `None` while no thread runs it.
#[derive(Default)]
struct Mailbox {
    sender: Option<mpsc::Sender<Command>>,
    receiver: Option<Arc<Mutex<mpsc::Receiver<Command>>>>,
}

pub struct RunHandle {
    pub root: PathBuf,
    mailbox: Mutex<Mailbox>,
    abort: Arc<AtomicBool>,
    pub notify: Arc<Notify>,
}

impl RunHandle {
    fn new(root: PathBuf) -> Self {
        Self {
            root,
            mailbox: Mutex::new(Mailbox::default()),
            abort: Arc::new(AtomicBool::new(false)),
            notify: Arc::new(Notify::new()),
        }
    }
}

const FILE_POLL: Duration = Duration::from_millis(250);

/// Blocks the orchestrator at a gate until a resolution for it arrives
/// through the queue, the gate timeout passes, or the run is aborted.
struct QueueChannel {
    rx: Arc<Mutex<mpsc::Receiver<Command>>>,
    abort: Arc<AtomicBool>,
    timeout: Option<Duration>,
}

impl ApprovalChannel for QueueChannel {
    fn decide(&mut self, gate: &ApprovalGate, resolver: &GateResolver<'_>) -> GateDecision {
        let deadline = self.timeout.map(|t| Instant::now() + t);
        let rx = self.rx.lock().expect("poisoned");
        loop {
            let slice = match deadline {
                None => FILE_POLL,
                Some(d) => d.saturating_duration_since(Instant::now()).min(FILE_POLL),
            };
            let cmd = match rx.recv_timeout(slice) {
                Ok(cmd) => Some(cmd),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => return GateDecision::Park,
            };
            match cmd {
                // resolved by another process writing the gate file
                None if resolver.dir.load_gate(&gate.gate_id).is_ok_and(|g| !g.is_open()) => {
                    return GateDecision::Resolved
                }
                None if deadline.is_some_and(|d| Instant::now() >= d) => return GateDecision::Park,
                None => {}
                Some(Command::Resolve {
                    gate_id,
                    resolution,
                    ack,
                }) => {
                    let res = resolver.resolve(&gate_id, resolution);
                    let done = res.is_ok() && gate_id == gate.gate_id;
                    let _ = ack.send(res);
                    if done {
                        return GateDecision::Resolved;
                    }
                }
                Some(Command::Abort) => {
                    self.abort.store(true, Ordering::SeqCst);
                    return GateDecision::Abort;
                }
            }
        }
    }
}

/// Opens a fresh queue for `handle`. Caller holds the mailbox lock.
fn open_channel(handle: &RunHandle, mb: &mut Mailbox, timeout_secs: Option<u64>) -> QueueChannel {
    let (tx, rx) = mpsc::channel();
    let rx = Arc::new(Mutex::new(rx));
    mb.sender = Some(tx);
    mb.receiver = Some(rx.clone());
    QueueChannel {
        rx,
        abort: handle.abort.clone(),
        timeout: timeout_secs.map(Duration::from_secs),
    }
}

/// Reopens a run from its checkpoint. Caller holds the mailbox lock.
fn reopen(handle: &RunHandle, mb: &mut Mailbox, registry: &ScorerRegistry) -> Result<Orchestrator, AgentError> {
    let dir = RunDir::open(&handle.root)?;
    let cfg = dir.load_config()?;
    let agents = Agents::from_config(&cfg, Some(dir.transcripts_dir()))?;
    let channel = open_channel(handle, mb, cfg.gate_timeout_secs);
    match Orchestrator::resume(dir, registry.clone(), agents, Box::new(channel)) {
        Ok(orch) => Ok(orch),
        Err(e) => {
            mb.sender = None;
            mb.receiver = None;
            Err(e)
        }
    }
}

fn gate_resolved(root: &Path, gate_id: &str) -> bool {
    RunDir::open(root)
        .and_then(|d| d.load_gate(gate_id))
        .is_ok_and(|g| !g.is_open())
}

/// Drives `orch` on its own thread. When it stops, commands still queued are
/// applied directly; a parked run whose gate got resolved meanwhile continues.
fn spawn(handle: Arc<RunHandle>, orch: Orchestrator, registry: ScorerRegistry) {
    std::thread::spawn(move || {
        let mut orch = orch;
        loop {
            let notify = handle.notify.clone();
            orch = orch
                .with_abort(handle.abort.clone())
                .with_event_sink(move |_| notify.notify_waiters());
            let outcome = orch.run();
            let run_id = orch.state().run_id.clone();
            let max_objectives = orch.config().max_objectives;
            drop(orch);
            match &outcome {
                Ok(o) => log::info!("run {run_id} stopped: {o:?}"),
                Err(e) => log::error!("run {run_id} crashed: {e}"),
            }
            let mut mb = handle.mailbox.lock().expect("poisoned");
            mb.sender = None;
            if let Some(rx) = mb.receiver.take() {
                let rx = rx.lock().expect("poisoned");
                while let Ok(cmd) = rx.try_recv() {
                    match cmd {
                        Command::Resolve {
                            gate_id,
                            resolution,
                            ack,
                        } => {
                            let res = RunDir::open(&handle.root)
                                .and_then(|d| resolve_gate(&d, &gate_id, resolution, max_objectives));
                            let _ = ack.send(res);
                        }
                        Command::Abort => handle.abort.store(true, Ordering::SeqCst),
                    }
                }
            }
            let again = match &outcome {
                Ok(Outcome::Parked { gate_id }) => {
                    handle.abort.load(Ordering::SeqCst) || gate_resolved(&handle.root, gate_id)
                }
                _ => false,
            };
            if again {
                match reopen(&handle, &mut mb, &registry) {
                    Ok(next) => {
                        orch = next;
                        continue;
                    }
                    Err(e) => log::error!("run {run_id} could not continue: {e}"),
                }
            }
            drop(mb);
            handle.notify.notify_waiters();
            break;
        }
    });
}

pub struct RunManager {
    pub runs_dir: PathBuf,
    pub base_dir: PathBuf,
    pub registry: ScorerRegistry,
    handles: Mutex<HashMap<String, Arc<RunHandle>>>,
    counter: AtomicU64,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn load_state(root: &Path) -> ApiResult<RunState> {
    let dir = RunDir::open(root).map_err(ApiError::from)?;
    dir.load_state()?
        .ok_or_else(|| ApiError::internal(format!("run `{}` has no checkpoint", dir.run_id())))
}

impl RunManager {
    pub fn new(runs_dir: PathBuf, base_dir: PathBuf, registry: ScorerRegistry) -> Self {
        Self {
            runs_dir,
            base_dir,
            registry,
            handles: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
        }
    }

    /// Handle of an existing run, registering runs created elsewhere.
    pub fn handle(&self, run_id: &str) -> ApiResult<Arc<RunHandle>> {
        if !valid_run_id(run_id) {
            return Err(ApiError::not_found(format!("run `{run_id}` not found")));
        }
        let mut map = self.handles.lock().expect("poisoned");
        if let Some(h) = map.get(run_id) {
            return Ok(h.clone());
        }
        let root = self.runs_dir.join(run_id);
        if !root.join("config.json").is_file() {
            return Err(ApiError::not_found(format!("run `{run_id}` not found")));
        }
        let h = Arc::new(RunHandle::new(root));
        map.insert(run_id.to_string(), h.clone());
        Ok(h)
    }

    pub fn run_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.runs_dir)
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter(|e| e.path().join("state.json").is_file())
                    .map(|e| e.file_name().to_string_lossy().into_owned())
                    .collect()
            })
            .unwrap_or_default();
        ids.sort();
        ids
    }

    pub fn summary(&self, run_id: &str) -> ApiResult<RunSummary> {
        let h = self.handle(run_id)?;
        let state = load_state(&h.root)?;
        let cfg = RunDir::open(&h.root)?.load_config()?;
        let events = RunDir::open(&h.root)?.read_events(0)?;
        // a thread blocked at a gate has not checkpointed the wait
        let waiting = state.status == RunStatus::Running
            && state.open_gate.as_deref().is_some_and(|g| !gate_resolved(&h.root, g));
        Ok(RunSummary {
            run_id: run_id.to_string(),
            mode: cfg.mode,
            status: if waiting {
                RunStatus::AwaitingApproval
            } else {
                state.status
            },
            iteration: state.iteration,
            best_aggregate: state.best_aggregate(),
            started_at: events.first().map(|e| e.ts.clone()),
            updated_at: events.last().map(|e| e.ts.clone()),
        })
    }

    fn new_run_id(&self) -> String {
        loop {
            let n = self.counter.fetch_add(1, Ordering::SeqCst);
            let id = format!("run-{}-{n:03}", chrono::Utc::now().format("%Y%m%dT%H%M%S"));
            if !self.runs_dir.join(&id).exists() {
                return id;
            }
        }
    }

    pub fn create(&self, mut cfg: RunConfig) -> ApiResult<RunSummary> {
        if cfg.base_dir.is_none() {
            cfg.base_dir = Some(self.base_dir.clone());
        }
        cfg.validate()?;
        let id = self.new_run_id();
        let root = self.runs_dir.join(&id);
        let agents = Agents::from_config(&cfg, Some(root.join("transcripts")))?;
        let handle = Arc::new(RunHandle::new(root.clone()));
        {
            let mut mb = handle.mailbox.lock().expect("poisoned");
            let channel = open_channel(&handle, &mut mb, cfg.gate_timeout_secs);
            let orch = Orchestrator::create(&root, cfg, self.registry.clone(), agents, Box::new(channel))?;
            self.handles
                .lock()
                .expect("poisoned")
                .insert(id.clone(), handle.clone());
            spawn(handle.clone(), orch, self.registry.clone());
        }
        self.summary(&id)
    }

    pub async fn resolve(&self, run_id: &str, gate_id: &str, mut res: GateResolution) -> ApiResult<ApprovalGate> {
        let handle = self.handle(run_id)?;
        if res.resolver.is_empty() {
            res.resolver = "http".into();
        }
        let queued = {
            let mut mb = handle.mailbox.lock().expect("poisoned");
            match &mb.sender {
                Some(tx) => {
                    let (ack, rx) = oneshot::channel();
                    tx.send(Command::Resolve {
                        gate_id: gate_id.to_string(),
                        resolution: res,
                        ack,
                    })
                    .map_err(|_| ApiError::internal("run queue closed"))?;
                    rx
                }
                None => return self.resolve_idle(&handle, &mut mb, gate_id, res),
            }
        };
        match queued.await {
            Ok(result) => Ok(result?),
            Err(_) => Err(ApiError::internal("run stopped before acknowledging the command")),
        }
    }

    /// Resolves a gate of a run no thread is driving, continuing the run if
    /// it was parked on that gate.
    fn resolve_idle(
        &self,
        handle: &Arc<RunHandle>,
        mb: &mut Mailbox,
        gate_id: &str,
        res: GateResolution,
    ) -> ApiResult<ApprovalGate> {
        let dir = RunDir::open(&handle.root)?;
        let cfg = dir.load_config()?;
        let gate = resolve_gate(&dir, gate_id, res, cfg.max_objectives)?;
        let state = load_state(&handle.root)?;
        if state.status == RunStatus::AwaitingApproval && state.open_gate.as_deref() == Some(gate_id) {
            let orch = reopen(handle, mb, &self.registry)?;
            spawn(handle.clone(), orch, self.registry.clone());
        }
        Ok(gate)
    }

    pub fn abort(&self, run_id: &str) -> ApiResult<()> {
        let handle = self.handle(run_id)?;
        let mut mb = handle.mailbox.lock().expect("poisoned");
        let state = load_state(&handle.root)?;
        if matches!(state.status, RunStatus::Finished | RunStatus::Failed) && mb.sender.is_none() {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "not_running",
                format!("run `{run_id}` already ended"),
            ));
        }
        handle.abort.store(true, Ordering::SeqCst);
        match &mb.sender {
            Some(tx) => {
                let _ = tx.send(Command::Abort);
            }
            None => {
                // nothing drives the run: reopen it so the abort is recorded
                let orch = reopen(&handle, &mut mb, &self.registry)?;
                spawn(handle.clone(), orch, self.registry.clone());
            }
        }
        Ok(())
    }
}
