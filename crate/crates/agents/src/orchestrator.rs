//! The outer loop as a checkpointed state machine.
//!
//! Each call to [`Orchestrator::step`] runs one phase, appends its events and
//! then writes `state.json`. A crash between two checkpoints is repaired on
//! resume by dropping the events written after the last checkpoint and
//! re-running the interrupted phase, which reproduces them exactly when the
//! agents are deterministic.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use objevo_core::model::{rank_order, Candidate, IdAllocator, Objective, Origin, Population};
use objevo_core::optimizer::{
    run_inner_loop, GenerationRecord, LoopContext, Proposer, RandomSpec, ScriptedProposer, StopReason,
};
use objevo_core::rng::{stream, StreamRng, StreamRole};
use objevo_core::{BindContext, Evaluator, ScorerRegistry};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::analyzer::{AnalysisReport, AnalyzeRequest, Analyzer, IterationSummary, LlmAnalyzer, ScriptedAnalyzer};
use crate::completion::{CompletionClient, HttpCompletionClient, TranscriptSink};
use crate::config::{AgentBackend, ProposerKind, RunConfig};
use crate::error::{AgentError, Result};
use crate::events::{Event, EventRecord};
use crate::gates::{ApprovalChannel, ApprovalGate, GateDecision, GatePayload, GateResolver, GateStage};
use crate::matcher::{LlmMatcher, MatchResult, Matcher, ScriptedMatcher, Unmatched};
use crate::planner::{LlmPlanner, PlanProposal, PlanRequest, PlanSchedule, Planner, ScriptedPlanner};
use crate::proposer::LlmProposer;
use crate::selector::{invalidate_rebound_scores, LlmSelector, ScriptedSelector, SelectRequest, Selector};
use crate::store::{IterationRecord, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialize,
    Plan,
    PlanGate,
    Match,
    Optimize,
    Analyze,
    AnalysisGate,
    Conclude,
    Finalize,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    AwaitingApproval,
    Finished,
    Failed,
}

/// Everything needed to continue a run; persisted after every phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub status: RunStatus,
    pub phase: Phase,
    pub iteration: u32,
    pub plan_attempt: u32,
    pub next_seq: u64,
    pub ids: IdAllocator,
    /// Bound objectives of the current iteration.
    pub objectives: Vec<Objective>,
    /// Objectives the carried population was last scored under.
    pub scored_under: Vec<Objective>,
    pub population: Option<Population>,
    pub pending_plan: Option<PlanProposal>,
    pub match_result: Option<MatchResult>,
    pub pending_report: Option<AnalysisReport>,
    pub last_unmatched: Vec<Unmatched>,
    pub open_gate: Option<String>,
    pub prior_report: Option<AnalysisReport>,
    pub summaries: Vec<IterationSummary>,
    pub iteration_generations: u32,
    pub iteration_evaluations: usize,
    pub evaluations_total: usize,
    pub failure: Option<String>,
}

impl RunState {
    fn new(run_id: String) -> Self {
        Self {
            run_id,
            status: RunStatus::Pending,
            phase: Phase::Initialize,
            iteration: 0,
            plan_attempt: 0,
            next_seq: 0,
            ids: IdAllocator::default(),
            objectives: Vec::new(),
            scored_under: Vec::new(),
            population: None,
            pending_plan: None,
            match_result: None,
            pending_report: None,
            last_unmatched: Vec::new(),
            open_gate: None,
            prior_report: None,
            summaries: Vec::new(),
            iteration_generations: 0,
            iteration_evaluations: 0,
            evaluations_total: 0,
            failure: None,
        }
    }

    pub fn best_aggregate(&self) -> Option<f64> {
        self.population
            .as_ref()
            .and_then(|p| p.best())
            .and_then(|c| c.aggregate)
    }
}

/// The agent set driving one run.
pub struct Agents {
    pub planner: Box<dyn Planner>,
    pub matcher: Box<dyn Matcher>,
    pub analyzer: Box<dyn Analyzer>,
    pub selector: Box<dyn Selector>,
    pub proposer: Box<dyn Proposer>,
}

impl Agents {
    /// Builds the configured backends. LLM transcripts go to `transcripts`.
    pub fn from_config(cfg: &RunConfig, transcripts: Option<PathBuf>) -> Result<Self> {
        let random = cfg
            .random_spec()
            .ok_or_else(|| AgentError::Config("random: no random payload shape available".into()))?;
        let needs_client = cfg.agents.backend == AgentBackend::Llm || cfg.agents.proposer == ProposerKind::Llm;
        let client: Option<Arc<dyn CompletionClient>> = if needs_client {
            let sink = transcripts.map(TranscriptSink::new).transpose()?;
            Some(Arc::new(HttpCompletionClient::new(
                cfg.agents.completion.clone(),
                sink,
            )?))
        } else {
            None
        };
        let proposer: Box<dyn Proposer> = match cfg.agents.proposer {
            ProposerKind::ScriptedGenetic => Box::new(ScriptedProposer::genetic(random)),
            ProposerKind::ScriptedHillClimb => Box::new(ScriptedProposer::hill_climb(random)),
            ProposerKind::Llm => Box::new(LlmProposer {
                client: client.clone().expect("client built"),
                goal: cfg.goal.clone(),
                random,
            }),
        };
        Ok(match (cfg.agents.backend, client) {
            (AgentBackend::Llm, Some(client)) => Agents {
                planner: Box::new(LlmPlanner::new(client.clone())),
                matcher: Box::new(LlmMatcher { client: client.clone() }),
                analyzer: Box::new(LlmAnalyzer {
                    client: client.clone(),
                    config: cfg.agents.analyzer.clone(),
                }),
                selector: Box::new(LlmSelector { client }),
                proposer,
            },
            _ => {
                let schedule = match &cfg.agents.plan_schedule {
                    Some(p) => PlanSchedule::load(&cfg.base_dir().join(p))?,
                    None => PlanSchedule::default(),
                };
                Agents {
                    planner: Box::new(ScriptedPlanner::new(schedule)),
                    matcher: Box::new(ScriptedMatcher {
                        threshold: cfg.agents.matcher_threshold,
                    }),
                    analyzer: Box::new(ScriptedAnalyzer {
                        config: cfg.agents.analyzer.clone(),
                    }),
                    selector: Box::new(ScriptedSelector),
                    proposer,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Continue,
    Parked { gate_id: String },
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Finished,
    Parked { gate_id: String },
    Failed { reason: String },
}

/// Replaces `floor(ratio * len)` uniformly chosen positions with fresh,
/// unscored random candidates. Returns the replaced and the new ids.
pub fn inject_random(
    pop: &mut Population,
    ratio: f64,
    spec: &RandomSpec,
    rng: &mut StreamRng,
    ids: &mut IdAllocator,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(AgentError::Config(format!("injection ratio {ratio} is outside [0, 1]")));
    }
    let n = pop.candidates.len();
    let k = (ratio * n as f64).floor() as usize;
    let mut positions = sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let mut replaced = Vec::with_capacity(k);
    let mut added = Vec::with_capacity(k);
    for pos in positions {
        let payload = spec.generate(rng)?;
        let id = ids.next_id();
        let fresh = Candidate::new(
            id.clone(),
            payload,
            Origin {
                iteration: pop.iteration,
                generation: 0,
                parent_ids: Vec::new(),
                proposer_tag: "random-injection".into(),
            },
        );
        replaced.push(std::mem::replace(&mut pop.candidates[pos], fresh).id.0);
        added.push(id.0);
    }
    Ok((replaced, added))
}

type EventSink = Box<dyn FnMut(&EventRecord) + Send>;

struct Emitter<'a> {
    dir: &'a RunDir,
    run_id: &'a str,
    next_seq: &'a mut u64,
    sink: &'a mut Option<EventSink>,
}

impl Emitter<'_> {
    fn emit(&mut self, iteration: u32, event: Event) -> Result<()> {
        let rec = EventRecord {
            seq: *self.next_seq,
            run_id: self.run_id.to_string(),
            iteration,
            ts: chrono::Utc::now().to_rfc3339(),
            event,
        };
        self.dir.append_event(&rec)?;
        *self.next_seq += 1;
        if let Some(sink) = self.sink.as_mut() {
            sink(&rec);
        }
        Ok(())
    }
}

pub struct Orchestrator {
    dir: RunDir,
    cfg: RunConfig,
    registry: ScorerRegistry,
    agents: Agents,
    channel: Box<dyn ApprovalChannel>,
    abort: Arc<AtomicBool>,
    sink: Option<EventSink>,
    state: RunState,
}

impl Orchestrator {
    /// Validates `cfg` and lays out a fresh run directory at `root`.
    pub fn create(
        root: impl Into<PathBuf>,
        cfg: RunConfig,
        registry: ScorerRegistry,
        agents: Agents,
        channel: Box<dyn ApprovalChannel>,
    ) -> Result<Self> {
        cfg.validate()?;
        let dir = RunDir::create(root, &cfg)?;
        let state = RunState::new(dir.run_id());
        dir.save_state(&state)?;
        Ok(Self {
            dir,
            cfg,
            registry,
            agents,
            channel,
            abort: Arc::new(AtomicBool::new(false)),
            sink: None,
            state,
        })
    }

    /// Reopens a run, discarding events written after its last checkpoint.
    pub fn resume(
        dir: RunDir,
        registry: ScorerRegistry,
        agents: Agents,
        channel: Box<dyn ApprovalChannel>,
    ) -> Result<Self> {
        let cfg = dir.load_config()?;
        let state: RunState = dir
            .load_state()?
            .ok_or_else(|| AgentError::Config(format!("`{}` has no checkpoint", dir.root().display())))?;
        if state.status == RunStatus::Failed {
            return Err(AgentError::Config(format!(
                "run failed and cannot be resumed: {}",
                state.failure.as_deref().unwrap_or("unknown reason")
            )));
        }
        let dropped = dir.truncate_events(state.next_seq)?;
        if dropped > 0 {
            log::info!("dropped {dropped} events written after the last checkpoint");
        }
        Ok(Self {
            dir,
            cfg,
            registry,
            agents,
            channel,
            abort: Arc::new(AtomicBool::new(false)),
            sink: None,
            state,
        })
    }

    pub fn with_abort(mut self, flag: Arc<AtomicBool>) -> Self {
        self.abort = flag;
        self
    }

    /// Called with every event after it is written.
    pub fn with_event_sink(mut self, sink: impl FnMut(&EventRecord) + Send + 'static) -> Self {
        self.sink = Some(Box::new(sink));
        self
    }

    pub fn abort_flag(&self) -> Arc<AtomicBool> {
        self.abort.clone()
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn dir(&self) -> &RunDir {
        &self.dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn emitter(&mut self) -> Emitter<'_> {
        Emitter {
            dir: &self.dir,
            run_id: &self.state.run_id,
            next_seq: &mut self.state.next_seq,
            sink: &mut self.sink,
        }
    }

    fn emit(&mut self, event: Event) -> Result<()> {
        let it = self.state.iteration;
        self.emitter().emit(it, event)
    }

    fn checkpoint(&self) -> Result<()> {
        self.dir.save_state(&self.state)
    }

    /// Runs until the run finishes, fails or parks at a gate.
    pub fn run(&mut self) -> Result<Outcome> {
        loop {
            match self.state.status {
                RunStatus::Finished => return Ok(Outcome::Finished),
                RunStatus::Failed => {
                    return Ok(Outcome::Failed {
                        reason: self.state.failure.clone().unwrap_or_default(),
                    })
                }
                _ => {}
            }
            match self.step() {
                Ok(Step::Continue) => {}
                Ok(Step::Done) => return Ok(Outcome::Finished),
                Ok(Step::Parked { gate_id }) => return Ok(Outcome::Parked { gate_id }),
                Err(e) => {
                    let reason = e.to_string();
                    log::error!("run {} failed: {reason}", self.state.run_id);
                    self.fail(reason.clone())?;
                    return Ok(Outcome::Failed { reason });
                }
            }
        }
    }

    fn fail(&mut self, reason: String) -> Result<()> {
        self.emit(Event::RunFailed { reason: reason.clone() })?;
        self.state.status = RunStatus::Failed;
        self.state.failure = Some(reason);
        self.checkpoint()
    }

    /// Executes the current phase and checkpoints.
    pub fn step(&mut self) -> Result<Step> {
        if self.abort.load(Ordering::SeqCst) {
            return Err(AgentError::Aborted);
        }
        if matches!(self.state.status, RunStatus::Pending | RunStatus::AwaitingApproval) {
            self.state.status = RunStatus::Running;
        }
        let step = match self.state.phase {
            Phase::Initialize => self.initialize()?,
            Phase::Plan => self.plan()?,
            Phase::PlanGate | Phase::AnalysisGate => self.gate()?,
            Phase::Match => self.match_objectives()?,
            Phase::Optimize => self.optimize()?,
            Phase::Analyze => self.analyze()?,
            Phase::Conclude => self.conclude()?,
            Phase::Finalize => self.finalize()?,
            Phase::Done => return Ok(Step::Done),
        };
        self.checkpoint()?;
        Ok(step)
    }

    fn initialize(&mut self) -> Result<Step> {
        self.emit(Event::RunStarted {
            goal: self.cfg.goal.clone(),
            mode: self.cfg.mode,
            outer_loop_enabled: self.cfg.outer_loop_enabled,
        })?;
        let spec = self.cfg.initial_population.clone().expect("validated");
        let mut rng = stream(self.cfg.outer_seed, 0, StreamRole::Initial);
        let payloads = spec.materialize(&self.cfg.base_dir(), &mut rng)?;
        if payloads.is_empty() {
            return Err(AgentError::Config("initial_population: produced no candidates".into()));
        }
        let candidates: Vec<Candidate> = payloads
            .into_iter()
            .map(|p| {
                Candidate::new(
                    self.state.ids.next_id(),
                    p,
                    Origin {
                        iteration: 0,
                        generation: 0,
                        parent_ids: Vec::new(),
                        proposer_tag: "initial".into(),
                    },
                )
            })
            .collect();
        self.emit(Event::PopulationInitialized {
            size: candidates.len(),
            first_id: candidates[0].id.0.clone(),
        })?;
        self.state.population = Some(Population::new(0, candidates));
        self.state.iteration = 1;
        if self.cfg.outer_loop_enabled {
            self.state.phase = Phase::Plan;
        } else {
            self.state.objectives = self.cfg.initial_objectives.clone();
            self.state.phase = Phase::Optimize;
        }
        Ok(Step::Continue)
    }

    fn plan(&mut self) -> Result<Step> {
        let catalog = self.registry.catalog();
        let req = PlanRequest {
            goal: &self.cfg.goal,
            context: &self.cfg.context,
            iteration: self.state.iteration,
            attempt: self.state.plan_attempt,
            prior_report: self.state.prior_report.as_ref(),
            registry: &catalog,
            initial_objectives: &self.cfg.initial_objectives,
            current_objectives: &self.state.objectives,
            unmatched: &self.state.last_unmatched,
        };
        let proposal = self.agents.planner.plan(&req)?;
        proposal.validate(self.cfg.max_objectives)?;
        self.emit(Event::PlanProposed {
            attempt: self.state.plan_attempt,
            proposal: proposal.clone(),
        })?;
        if self.cfg.mode.gates_plan() {
            let id = ApprovalGate::plan_gate_id(self.state.iteration, self.state.plan_attempt);
            self.open_gate(id, GateStage::Plan, GatePayload::Plan(proposal.clone()))?;
            self.state.pending_plan = Some(proposal);
            self.state.phase = Phase::PlanGate;
        } else {
            self.state.pending_plan = Some(proposal);
            self.state.phase = Phase::Match;
        }
        Ok(Step::Continue)
    }

    fn open_gate(&mut self, gate_id: String, stage: GateStage, payload: GatePayload) -> Result<()> {
        let gate = ApprovalGate {
            gate_id: gate_id.clone(),
            run_id: self.state.run_id.clone(),
            iteration: self.state.iteration,
            stage,
            proposed_payload: payload,
            resolution: None,
        };
        // A gate file may survive a crash after it was written; keep it (and
        // any resolution it received) when the proposal is unchanged.
        match self.dir.load_gate(&gate_id) {
            Ok(existing) if existing.proposed_payload == gate.proposed_payload => {}
            _ => self.dir.write_gate(&gate)?,
        }
        self.emit(Event::GateOpened {
            gate_id: gate_id.clone(),
            stage,
        })?;
        self.state.open_gate = Some(gate_id);
        Ok(())
    }

    fn gate(&mut self) -> Result<Step> {
        let gate_id = self
            .state
            .open_gate
            .clone()
            .ok_or_else(|| AgentError::Config("gate phase without an open gate".into()))?;
        let mut gate = self.dir.load_gate(&gate_id)?;
        if gate.is_open() {
            let resolver = GateResolver {
                dir: &self.dir,
                max_objectives: self.cfg.max_objectives,
            };
            match self.channel.decide(&gate, &resolver) {
                GateDecision::Resolved => gate = self.dir.load_gate(&gate_id)?,
                GateDecision::Park => {}
                GateDecision::Abort => return Err(AgentError::Aborted),
            }
            if gate.is_open() {
                self.state.status = RunStatus::AwaitingApproval;
                return Ok(Step::Parked { gate_id });
            }
        }
        let res = gate.resolution.clone().expect("resolved");
        self.emit(Event::GateResolved {
            gate_id: gate_id.clone(),
            stage: gate.stage,
            action: res.action,
            resolver: res.resolver.clone(),
        })?;
        self.state.open_gate = None;
        match gate.effective_payload().clone() {
            GatePayload::Plan(p) => {
                self.state.pending_plan = Some(p);
                self.state.phase = Phase::Match;
            }
            GatePayload::Analysis(r) => {
                self.state.pending_report = None;
                self.complete_iteration(*r)?;
            }
        }
        Ok(Step::Continue)
    }

    fn match_objectives(&mut self) -> Result<Step> {
        let proposal = self
            .state
            .pending_plan
            .clone()
            .ok_or_else(|| AgentError::Config("match phase without a plan".into()))?;
        let catalog = self.registry.catalog();
        let result = self.agents.matcher.match_objectives(&proposal, &catalog)?;
        self.emit(Event::ObjectivesMatched {
            attempt: self.state.plan_attempt,
            match_result: result.clone(),
        })?;
        if result.is_complete() {
            self.state.objectives = result.bind(&proposal);
            self.state.match_result = Some(result);
            self.state.plan_attempt = 0;
            self.state.last_unmatched.clear();
            self.state.phase = Phase::Optimize;
            return Ok(Step::Continue);
        }
        let attempts = self.state.plan_attempt + 1;
        if attempts >= self.cfg.plan_retry_limit.max(1) {
            return Err(AgentError::RetryExhausted { attempts, last: result });
        }
        self.emit(Event::PlanRetry {
            attempt: attempts,
            unmatched: result.unmatched.clone(),
        })?;
        self.state.plan_attempt = attempts;
        self.state.last_unmatched = result.unmatched;
        self.state.pending_plan = None;
        self.state.phase = Phase::Plan;
        Ok(Step::Continue)
    }

    fn evaluator(&self) -> Result<Evaluator> {
        Ok(Evaluator::bind(
            &self.state.objectives,
            &self.registry,
            &BindContext::new(self.cfg.base_dir()),
            &self.cfg.aggregator,
            self.cfg.constraints.clone(),
            self.cfg.exec_mode,
        )?)
    }

    fn optimize(&mut self) -> Result<Step> {
        let iteration = self.state.iteration;
        let evaluator = self.evaluator()?;
        let mut pop = self
            .state
            .population
            .clone()
            .expect("population exists after initialization");
        pop.iteration = iteration;
        if iteration > 1 && self.cfg.injection_ratio > 0.0 {
            let spec = self.cfg.random_spec().expect("validated");
            let mut rng = stream(self.cfg.outer_seed, u64::from(iteration), StreamRole::Injection);
            let (replaced, added) =
                inject_random(&mut pop, self.cfg.injection_ratio, &spec, &mut rng, &mut self.state.ids)?;
            self.emit(Event::RandomInjected { replaced, added })?;
        }
        if iteration > 1 {
            let stale: Vec<String> = self
                .state
                .objectives
                .iter()
                .filter(|o| {
                    !self
                        .state
                        .scored_under
                        .iter()
                        .any(|p| p.id == o.id && p.scorer_binding == o.scorer_binding && p.kind == o.kind)
                })
                .map(|o| o.id.clone())
                .collect();
            invalidate_rebound_scores(&mut pop.candidates, &self.state.scored_under, &self.state.objectives);
            if !stale.is_empty() {
                self.emit(Event::ScoresInvalidated { objective_ids: stale })?;
            }
        }

        let abort = self.abort.clone();
        let mut emit_err: Option<AgentError> = None;
        let outcome = {
            let Orchestrator {
                dir,
                cfg,
                agents,
                sink,
                state,
                ..
            } = self;
            let mut emitter = Emitter {
                dir,
                run_id: &state.run_id,
                next_seq: &mut state.next_seq,
                sink,
            };
            let mut observer = |rec: &GenerationRecord| -> ControlFlow<()> {
                if let Err(e) = emitter.emit(iteration, Event::Generation(rec.clone())) {
                    emit_err = Some(e);
                    return ControlFlow::Break(());
                }
                if abort.load(Ordering::SeqCst) {
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            };
            run_inner_loop(
                pop,
                agents.proposer.as_mut(),
                &cfg.inner,
                &evaluator,
                LoopContext {
                    iteration,
                    ids: &mut state.ids,
                    observer: Some(&mut observer),
                },
            )
        };
        if let Some(e) = emit_err {
            return Err(e);
        }
        let outcome = outcome?;
        if outcome.stop == StopReason::Interrupted {
            return Err(AgentError::Aborted);
        }
        let generations = outcome.history.last().map_or(0, |r| r.generation);
        self.emit(Event::InnerLoopFinished {
            stop: outcome.stop,
            generations,
            evaluations: outcome.evaluations_used,
            discarded: outcome.discarded.len(),
        })?;
        let mut final_pop = outcome.final_population;
        final_pop.iteration = iteration;
        self.dir.write_population(&final_pop)?;
        self.state.population = Some(final_pop);
        self.state.scored_under = self.state.objectives.clone();
        self.state.iteration_generations = generations;
        self.state.iteration_evaluations = outcome.evaluations_used;
        self.state.evaluations_total += outcome.evaluations_used;
        if self.cfg.outer_loop_enabled {
            self.state.phase = Phase::Analyze;
        } else {
            let stats = evaluator.stats(&self.state.population.as_ref().expect("set").candidates)?;
            self.record_iteration(None, stats)?;
            self.state.phase = Phase::Conclude;
        }
        Ok(Step::Continue)
    }

    fn analyze(&mut self) -> Result<Step> {
        let evaluator = self.evaluator()?;
        let pop = self.state.population.as_ref().expect("population exists");
        let stats = evaluator.stats(&pop.candidates)?;
        let analysis = self.agents.analyzer.analyze(&AnalyzeRequest {
            goal: &self.cfg.goal,
            iteration: self.state.iteration,
            objectives: &self.state.objectives,
            candidates: &pop.candidates,
            stats: &stats,
            history: &self.state.summaries,
        })?;
        if let Some(reason) = analysis.degraded {
            self.emit(Event::Degraded {
                agent: "analyzer".into(),
                reason,
            })?;
        }
        let report = analysis.report;
        self.emit(Event::AnalysisCompleted { report: report.clone() })?;
        if self.cfg.mode.gates_analysis() {
            let id = ApprovalGate::analysis_gate_id(self.state.iteration);
            self.open_gate(id, GateStage::Analysis, GatePayload::Analysis(Box::new(report.clone())))?;
            self.state.pending_report = Some(report);
            self.state.phase = Phase::AnalysisGate;
        } else {
            self.complete_iteration(report)?;
        }
        Ok(Step::Continue)
    }

    fn record_iteration(
        &mut self,
        report: Option<&AnalysisReport>,
        stats: BTreeMap<String, objevo_core::model::ObjectiveStats>,
    ) -> Result<()> {
        let iteration = self.state.iteration;
        let best = self.state.population.as_ref().and_then(|p| p.best()).cloned();
        let rec = IterationRecord {
            iteration,
            plan: self.state.pending_plan.clone(),
            match_result: self.state.match_result.clone(),
            generations: self.state.iteration_generations,
            evaluations: self.state.iteration_evaluations,
            report: report.cloned(),
            population_snapshot: RunDir::population_snapshot_rel(iteration),
        };
        self.dir.write_iteration(&rec)?;
        self.state.summaries.push(IterationSummary {
            iteration,
            objectives: self.state.objectives.clone(),
            stats: stats.clone(),
            best_id: best.as_ref().map(|c| c.id.0.clone()),
            best_aggregate: best.as_ref().and_then(|c| c.aggregate),
            evaluations: self.state.iteration_evaluations,
        });
        self.emit(Event::IterationCompleted {
            evaluations: self.state.iteration_evaluations,
            best_id: best.as_ref().map(|c| c.id.0.clone()),
            best_aggregate: best.as_ref().and_then(|c| c.aggregate),
            stats,
        })
    }

    fn complete_iteration(&mut self, report: AnalysisReport) -> Result<()> {
        let stats = report
            .objective_stats
            .iter()
            .map(|(k, s)| {
                (
                    k.clone(),
                    objevo_core::model::ObjectiveStats {
                        mean: s.mean,
                        std: s.std,
                        min: s.min,
                        max: s.max,
                    },
                )
            })
            .collect();
        self.record_iteration(Some(&report), stats)?;
        let stop = report.termination == crate::analyzer::Termination::Stop;
        self.state.prior_report = Some(report);
        self.state.pending_plan = None;
        self.state.match_result = None;
        if stop || self.state.iteration >= self.cfg.max_iterations {
            self.state.phase = Phase::Conclude;
        } else {
            self.state.iteration += 1;
            self.state.phase = Phase::Plan;
        }
        Ok(())
    }

    /// Candidates of every completed iteration with stale scores removed.
    fn eligible_candidates(&self) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        for k in 1..=self.state.iteration {
            let Ok(pop) = self.dir.load_population(k) else { continue };
            let scored_under = self
                .state
                .summaries
                .iter()
                .find(|s| s.iteration == k)
                .map(|s| s.objectives.clone())
                .unwrap_or_else(|| self.state.objectives.clone());
            let mut cands = pop.candidates;
            invalidate_rebound_scores(&mut cands, &scored_under, &self.state.objectives);
            out.extend(cands);
        }
        Ok(out)
    }

    fn conclude(&mut self) -> Result<Step> {
        let evaluator = self.evaluator()?;
        let candidates = self.eligible_candidates()?;
        let selection = self.agents.selector.select(SelectRequest {
            goal: &self.cfg.goal,
            candidates,
            evaluator: &evaluator,
            n: self.cfg.final_selection_n,
        })?;
        if let Some(reason) = selection.degraded {
            self.emit(Event::Degraded {
                agent: "selector".into(),
                reason,
            })?;
        }
        self.dir.write_final(&selection.candidates)?;
        self.emit(Event::FinalSelected {
            ids: selection.candidates.iter().map(|c| c.id.0.clone()).collect(),
            shortfall: selection.shortfall,
            evaluations: selection.evaluations,
        })?;
        self.state.phase = Phase::Finalize;
        Ok(Step::Continue)
    }

    fn finalize(&mut self) -> Result<Step> {
        self.emit(Event::RunFinished {
            evaluations_total: self.state.evaluations_total,
        })?;
        self.state.status = RunStatus::Finished;
        self.state.phase = Phase::Done;
        Ok(Step::Done)
    }
}

/// Re-runs final selection on a finished or parked run.
pub fn reselect(dir: &RunDir, registry: &ScorerRegistry, n: usize) -> Result<Vec<Candidate>> {
    let cfg = dir.load_config()?;
    let state: RunState = dir
        .load_state()?
        .ok_or_else(|| AgentError::Config("run has no checkpoint".into()))?;
    if state.objectives.is_empty() {
        return Err(AgentError::Config("run has no bound objectives yet".into()));
    }
    let evaluator = Evaluator::bind(
        &state.objectives,
        registry,
        &BindContext::new(cfg.base_dir()),
        &cfg.aggregator,
        cfg.constraints.clone(),
        cfg.exec_mode,
    )?;
    let mut candidates = Vec::new();
    for s in &state.summaries {
        let mut cands = dir.load_population(s.iteration)?.candidates;
        invalidate_rebound_scores(&mut cands, &s.objectives, &state.objectives);
        candidates.extend(cands);
    }
    let mut selected = ScriptedSelector
        .select(SelectRequest {
            goal: &cfg.goal,
            candidates,
            evaluator: &evaluator,
            n,
        })?
        .candidates;
    selected.sort_by(rank_order);
    Ok(selected)
}
