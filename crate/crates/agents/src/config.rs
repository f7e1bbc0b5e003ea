//! Run configuration.

use std::path::{Path, PathBuf};

use objevo_core::model::{validate_objectives, CandidatePayload, Objective, PayloadConstraints};
use objevo_core::optimizer::RandomSpec;
use objevo_core::rng::StreamRng;
use objevo_core::{Aggregator, ExecMode, InnerLoopConfig};
use serde::{Deserialize, Serialize};

use crate::analyzer::AnalyzerConfig;
use crate::completion::CompletionConfig;
use crate::error::{AgentError, Result};
use crate::matcher::DEFAULT_MATCH_THRESHOLD;
use crate::planner::DEFAULT_MAX_OBJECTIVES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutonomyMode {
    Copilot,
    Semipilot,
    #[default]
    Autopilot,
}

impl AutonomyMode {
    pub fn gates_plan(self) -> bool {
        self == AutonomyMode::Copilot
    }

    pub fn gates_analysis(self) -> bool {
        self != AutonomyMode::Autopilot
    }
}

impl std::str::FromStr for AutonomyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "copilot" => Ok(Self::Copilot),
            "semipilot" => Ok(Self::Semipilot),
            "autopilot" => Ok(Self::Autopilot),
            other => Err(format!("unknown mode `{other}` (copilot, semipilot, autopilot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationGenerator {
    RandomSequence {
        length: usize,
        count: usize,
    },
    RandomFingerprint {
        width: usize,
        density: f64,
        count: usize,
    },
    /// One sequence per line; blank lines and lines starting with `#` or `>` are skipped.
    SequenceFile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPopulation {
    Generator(PopulationGenerator),
    Payloads(Vec<CandidatePayload>),
}

impl InitialPopulation {
    /// Shape of random payloads matching this population, if it has one.
    pub fn random_spec(&self) -> Option<RandomSpec> {
        match self {
            InitialPopulation::Generator(PopulationGenerator::RandomSequence { length, .. }) => {
                Some(RandomSpec::RandomSequence { length: *length })
            }
            InitialPopulation::Generator(PopulationGenerator::RandomFingerprint { width, density, .. }) => {
                Some(RandomSpec::RandomFingerprint {
                    width: *width,
                    density: *density,
                })
            }
            _ => None,
        }
    }

    pub fn materialize(&self, base_dir: &Path, rng: &mut StreamRng) -> Result<Vec<CandidatePayload>> {
        match self {
            InitialPopulation::Payloads(p) => Ok(p.clone()),
            InitialPopulation::Generator(PopulationGenerator::SequenceFile { path }) => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| AgentError::io(&path, e))?;
                text.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with('>'))
                    .map(|l| CandidatePayload::sequence(l).map_err(AgentError::from))
                    .collect()
            }
            InitialPopulation::Generator(g) => {
                let count = match g {
                    PopulationGenerator::RandomSequence { count, .. }
                    | PopulationGenerator::RandomFingerprint { count, .. } => *count,
                    PopulationGenerator::SequenceFile { .. } => unreachable!(),
                };
                let spec = self.random_spec().expect("random generator");
                (0..count)
                    .map(|_| spec.generate(rng).map_err(AgentError::from))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentBackend {
    #[default]
    Scripted,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerKind {
    #[default]
    ScriptedGenetic,
    ScriptedHillClimb,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentsConfig {
    pub backend: AgentBackend,
    /// Plan schedule for the scripted planner (JSON or TOML).
    pub plan_schedule: Option<PathBuf>,
    pub matcher_threshold: f64,
    pub analyzer: AnalyzerConfig,
    pub completion: CompletionConfig,
    pub proposer: ProposerKind,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            backend: AgentBackend::Scripted,
            plan_schedule: None,
            matcher_threshold: DEFAULT_MATCH_THRESHOLD,
            analyzer: AnalyzerConfig::default(),
            completion: CompletionConfig::default(),
            proposer: ProposerKind::ScriptedGenetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub goal: String,
    pub context: String,
    pub mode: AutonomyMode,
    pub max_iterations: u32,
    /// Fraction of the carried population replaced by random candidates at
    /// the start of every iteration after the first.
    pub injection_ratio: f64,
    pub plan_retry_limit: u32,
    pub max_objectives: usize,
    pub initial_objectives: Vec<Objective>,
    pub initial_population: Option<InitialPopulation>,
    /// Shape of injected random candidates; derived from the generator when absent.
    pub random: Option<RandomSpec>,
    pub constraints: PayloadConstraints,
    pub inner: InnerLoopConfig,
    pub aggregator: Aggregator,
    pub outer_seed: u64,
    pub outer_loop_enabled: bool,
    pub final_selection_n: usize,
    pub agents: AgentsConfig,
    /// Seconds a gate may stay open before the run parks; `None` waits forever.
    pub gate_timeout_secs: Option<u64>,
    pub exec_mode: ExecMode,
    /// Directory that relative file parameters resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            goal: String::new(),
            context: String::new(),
            mode: AutonomyMode::Autopilot,
            max_iterations: 3,
            injection_ratio: 0.0,
            plan_retry_limit: 3,
            max_objectives: DEFAULT_MAX_OBJECTIVES,
            initial_objectives: Vec::new(),
            initial_population: None,
            random: None,
            constraints: PayloadConstraints::default(),
            inner: InnerLoopConfig::default(),
            aggregator: Aggregator::default(),
            outer_seed: 0,
            outer_loop_enabled: true,
            final_selection_n: 10,
            agents: AgentsConfig::default(),
            gate_timeout_secs: None,
            exec_mode: ExecMode::default(),
            base_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::io(path, e))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| AgentError::json(path, e))?
        } else {
            serde_json::from_str(&text).map_err(|e| AgentError::json(path, e))?
        };
        if cfg.base_dir.is_none() {
            let dir = path.parent().unwrap_or(Path::new("."));
            cfg.base_dir = Some(std::fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf()));
        }
        Ok(cfg)
    }

    pub fn base_dir(&self) -> PathBuf {
        self.base_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn random_spec(&self) -> Option<RandomSpec> {
        self.random.clone().or_else(|| {
            self.initial_population
                .as_ref()
                .and_then(InitialPopulation::random_spec)
        })
    }

    /// Checks everything that can be checked before a run starts.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(AgentError::Config(m));
        if self.goal.trim().is_empty() {
            return err("goal: must not be empty".into());
        }
        if self.max_iterations == 0 {
            return err("max_iterations: must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.injection_ratio) {
            return err(format!("injection_ratio: {} is outside [0, 1]", self.injection_ratio));
        }
        if self.final_selection_n == 0 {
            return err("final_selection_n: must be at least 1".into());
        }
        if self.max_objectives == 0 {
            return err("max_objectives: must be at least 1".into());
        }
        if self.initial_population.is_none() {
            return err("initial_population: required".into());
        }
        if self.random_spec().is_none() {
            return err("random: required when the initial population is not generated".into());
        }
        self.inner
            .validate()
            .map_err(|e| AgentError::Config(format!("inner: {e}")))?;
        if !self.initial_objectives.is_empty() {
            validate_objectives(&self.initial_objectives)
                .map_err(|e| AgentError::Config(format!("initial_objectives: {e}")))?;
        }
        if !self.outer_loop_enabled {
            if self.initial_objectives.is_empty() {
                return err("initial_objectives: required when the outer loop is disabled".into());
            }
            if let Some(o) = self.initial_objectives.iter().find(|o| o.scorer_binding.is_none()) {
                return err(format!(
                    "initial_objectives: `{}` has no scorer binding (required when the outer loop is disabled)",
                    o.id
                ));
            }
        }
        Ok(())
    }
}
