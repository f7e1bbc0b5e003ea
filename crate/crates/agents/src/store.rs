//! On-disk layout of a run.
//!
//! ```text
//! <run>/config.json          resolved RunConfig
//! <run>/state.json           checkpoint written after every phase
//! <run>/events.log           one EventRecord per line
//! <run>/populations/iter_<k>.json
//! <run>/iterations/iter_<k>.json
//! <run>/gates/<gate_id>.json
//! <run>/transcripts/         agent prompts and replies
//! <run>/final/candidates.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use objevo_core::model::{Candidate, Population};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analyzer::AnalysisReport;
use crate::config::RunConfig;
use crate::error::{AgentError, Result};
use crate::events::EventRecord;
use crate::gates::ApprovalGate;
use crate::matcher::MatchResult;
use crate::planner::PlanProposal;

/// One completed iteration of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub plan: Option<PlanProposal>,
    pub match_result: Option<MatchResult>,
    pub generations: u32,
    pub evaluations: usize,
    pub report: Option<AnalysisReport>,
    /// Path of the final population snapshot, relative to the run directory.
    pub population_snapshot: String,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(|e| AgentError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| AgentError::io(&tmp, e))?;
        f.sync_all().map_err(|e| AgentError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| AgentError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| AgentError::json(path, e))?;
    write_atomic(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| AgentError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| AgentError::json(path, e))
}

impl RunDir {
    /// Creates the directory tree for a new run and writes its config.
    pub fn create(root: impl Into<PathBuf>, cfg: &RunConfig) -> Result<Self> {
        let root = root.into();
        if root.join("state.json").exists() || root.join("events.log").exists() {
            return Err(AgentError::Config(format!(
                "run directory `{}` already holds a run",
                root.display()
            )));
        }
        for sub in ["populations", "iterations", "gates", "transcripts", "final"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(|e| AgentError::io(&p, e))?;
        }
        let dir = Self { root };
        write_json(&dir.root.join("config.json"), cfg)?;
        Ok(dir)
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("config.json").is_file() {
            return Err(AgentError::Config(format!(
                "`{}` is not a run directory",
                root.display()
            )));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory name, used as the run id.
    pub fn run_id(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    }

    pub fn load_config(&self) -> Result<RunConfig> {
        read_json(&self.root.join("config.json"))
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn save_state<T: Serialize>(&self, state: &T) -> Result<()> {
        write_json(&self.root.join("state.json"), state)
    }

    pub fn load_state<T: DeserializeOwned>(&self) -> Result<Option<T>> {
        let p = self.root.join("state.json");
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    fn events_path(&self) -> PathBuf {
        self.root.join("events.log")
    }

    pub fn append_event(&self, rec: &EventRecord) -> Result<()> {
        let path = self.events_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| AgentError::io(&path, e))?;
        let mut line = serde_json::to_string(rec).map_err(|e| AgentError::json(&path, e))?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| AgentError::io(&path, e))
    }

    /// Events with `seq >= since`, in log order. A torn final line is ignored.
    pub fn read_events(&self, since: u64) -> Result<Vec<EventRecord>> {
        let path = self.events_path();
        let f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(AgentError::io(&path, e)),
        };
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| AgentError::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<EventRecord>(&line) {
                Ok(r) if r.seq >= since => out.push(r),
                Ok(_) => {}
                Err(e) => log::warn!("skipping unreadable event line in {}: {e}", path.display()),
            }
        }
        Ok(out)
    }

    /// Drops every event with `seq >= next_seq` (written after the last checkpoint).
    pub fn truncate_events(&self, next_seq: u64) -> Result<usize> {
        let path = self.events_path();
        if !path.exists() {
            return Ok(0);
        }
        let text = fs::read_to_string(&path).map_err(|e| AgentError::io(&path, e))?;
        let mut kept = String::new();
        let mut dropped = 0;
        for line in text.lines() {
            match serde_json::from_str::<EventRecord>(line) {
                Ok(r) if r.seq < next_seq => {
                    kept.push_str(line);
                    kept.push('\n');
                }
                _ => dropped += 1,
            }
        }
        if dropped > 0 {
            write_atomic(&path, kept.as_bytes())?;
        }
        Ok(dropped)
    }

    fn iter_file(&self, sub: &str, k: u32) -> PathBuf {
        self.root.join(sub).join(format!("iter_{k}.json"))
    }

    pub fn population_snapshot_rel(k: u32) -> String {
        format!("populations/iter_{k}.json")
    }

    pub fn write_population(&self, pop: &Population) -> Result<()> {
        write_json(&self.iter_file("populations", pop.iteration), pop)
    }

    pub fn load_population(&self, k: u32) -> Result<Population> {
        read_json(&self.iter_file("populations", k))
    }

    pub fn write_iteration(&self, rec: &IterationRecord) -> Result<()> {
        write_json(&self.iter_file("iterations", rec.iteration), rec)
    }

    pub fn load_iteration(&self, k: u32) -> Result<IterationRecord> {
        read_json(&self.iter_file("iterations", k))
    }

    /// Completed iterations, in order.
    pub fn iterations(&self) -> Result<Vec<IterationRecord>> {
        let mut out = Vec::new();
        let mut k = 1;
        while self.iter_file("iterations", k).exists() {
            out.push(self.load_iteration(k)?);
            k += 1;
        }
        Ok(out)
    }

    fn gate_path(&self, gate_id: &str) -> Result<PathBuf> {
        if gate_id.is_empty()
            || !gate_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(AgentError::GateNotFound(gate_id.into()));
        }
        Ok(self.root.join("gates").join(format!("{gate_id}.json")))
    }

    pub fn write_gate(&self, gate: &ApprovalGate) -> Result<()> {
        write_json(&self.gate_path(&gate.gate_id)?, gate)
    }

    pub fn load_gate(&self, gate_id: &str) -> Result<ApprovalGate> {
        let path = self.gate_path(gate_id)?;
        if !path.exists() {
            return Err(AgentError::GateNotFound(gate_id.into()));
        }
        read_json(&path)
    }

    /// All gates, ordered by iteration and id.
    pub fn gates(&self) -> Result<Vec<ApprovalGate>> {
        let dir = self.root.join("gates");
        let mut out: Vec<ApprovalGate> = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(AgentError::io(&dir, e)),
        };
        for entry in entries {
            let path = entry.map_err(|e| AgentError::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(read_json(&path)?);
            }
        }
        out.sort_by(|a, b| (a.iteration, &a.gate_id).cmp(&(b.iteration, &b.gate_id)));
        Ok(out)
    }

    pub fn write_final(&self, cands: &[Candidate]) -> Result<()> {
        write_json(&self.root.join("final").join("candidates.json"), &cands)
    }

    pub fn load_final(&self) -> Result<Vec<Candidate>> {
        read_json(&self.root.join("final").join("candidates.json"))
    }
}
