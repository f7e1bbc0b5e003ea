//! Records written to a run's `events.log`.

use objevo_core::model::ObjectiveStats;
use objevo_core::optimizer::{GenerationRecord, StopReason};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::analyzer::AnalysisReport;
use crate::config::AutonomyMode;
use crate::gates::{GateAction, GateStage};
use crate::matcher::{MatchResult, Unmatched};
use crate::planner::PlanProposal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        goal: String,
        mode: AutonomyMode,
        outer_loop_enabled: bool,
    },
    PopulationInitialized {
        size: usize,
        first_id: String,
    },
    PlanProposed {
        attempt: u32,
        proposal: PlanProposal,
    },
    PlanRetry {
        attempt: u32,
        unmatched: Vec<Unmatched>,
    },
    GateOpened {
        gate_id: String,
        stage: GateStage,
    },
    GateResolved {
        gate_id: String,
        stage: GateStage,
        action: GateAction,
        resolver: String,
    },
    ObjectivesMatched {
        attempt: u32,
        match_result: MatchResult,
    },
    RandomInjected {
        replaced: Vec<String>,
        added: Vec<String>,
    },
    ScoresInvalidated {
        objective_ids: Vec<String>,
    },
    Generation(GenerationRecord),
    InnerLoopFinished {
        stop: StopReason,
        generations: u32,
        evaluations: usize,
        discarded: usize,
    },
    AnalysisCompleted {
        report: AnalysisReport,
    },
    IterationCompleted {
        evaluations: usize,
        best_id: Option<String>,
        best_aggregate: Option<f64>,
        stats: BTreeMap<String, ObjectiveStats>,
    },
    FinalSelected {
        ids: Vec<String>,
        shortfall: usize,
        evaluations: usize,
    },
    Degraded {
        agent: String,
        reason: String,
    },
    RunFinished {
        evaluations_total: usize,
    },
    RunFailed {
        reason: String,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::RunStarted { .. } => "run_started",
            Event::PopulationInitialized { .. } => "population_initialized",
            Event::PlanProposed { .. } => "plan_proposed",
            Event::PlanRetry { .. } => "plan_retry",
            Event::GateOpened { .. } => "gate_opened",
            Event::GateResolved { .. } => "gate_resolved",
            Event::ObjectivesMatched { .. } => "objectives_matched",
            Event::RandomInjected { .. } => "random_injected",
            Event::ScoresInvalidated { .. } => "scores_invalidated",
            Event::Generation(_) => "generation",
            Event::InnerLoopFinished { .. } => "inner_loop_finished",
            Event::AnalysisCompleted { .. } => "analysis_completed",
            Event::IterationCompleted { .. } => "iteration_completed",
            Event::FinalSelected { .. } => "final_selected",
            Event::Degraded { .. } => "degraded",
            Event::RunFinished { .. } => "run_finished",
            Event::RunFailed { .. } => "run_failed",
        }
    }
}

/// One line of `events.log`. `ts` is wall-clock and the only field that
/// differs between replays of a deterministic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub run_id: String,
    pub iteration: u32,
    pub ts: String,
    pub event: Event,
}

impl EventRecord {
    /// The record serialized without its timestamp.
    pub fn without_ts(&self) -> String {
        let mut v = serde_json::to_value(self).expect("event serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("ts");
        }
        v.to_string()
    }
}
