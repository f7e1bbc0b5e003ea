//! Planner: turns the goal (and the previous analysis) into objectives.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use objevo_core::model::{validate_objectives, Direction, Objective, ObjectiveKind};
use objevo_core::scorers::ScoringFunctionDescriptor;
use serde::{Deserialize, Serialize};

use crate::analyzer::AnalysisReport;
use crate::completion::CompletionClient;
use crate::error::{AgentError, Result};
use crate::matcher::Unmatched;
use crate::wire::parse_block;

pub const DEFAULT_MAX_OBJECTIVES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProposal {
    pub objectives: Vec<Objective>,
    #[serde(default)]
    pub rationale: String,
    /// 0 in a submitted revision means "the gate's iteration".
    #[serde(default)]
    pub iteration: u32,
}

impl PlanProposal {
    pub fn validate(&self, max_objectives: usize) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(AgentError::Validation("plan has no objectives".into()));
        }
        if self.objectives.len() > max_objectives {
            return Err(AgentError::Validation(format!(
                "plan has {} objectives, at most {max_objectives} allowed",
                self.objectives.len()
            )));
        }
        validate_objectives(&self.objectives).map_err(|e| AgentError::Validation(e.to_string()))
    }
}

pub struct PlanRequest<'a> {
    pub goal: &'a str,
    pub context: &'a str,
    pub iteration: u32,
    /// 0 for the first proposal of an iteration, then one per retry.
    pub attempt: u32,
    pub prior_report: Option<&'a AnalysisReport>,
    pub registry: &'a [ScoringFunctionDescriptor],
    pub initial_objectives: &'a [Objective],
    /// Objectives of the previous iteration (bound), empty at iteration 1.
    pub current_objectives: &'a [Objective],
    /// Objectives the matcher rejected on the previous attempt.
    pub unmatched: &'a [Unmatched],
}

pub trait Planner: Send {
    fn plan(&mut self, req: &PlanRequest<'_>) -> Result<PlanProposal>;
}

/// One iteration of a plan schedule.
///
/// Either `objectives` replaces the set outright, or the previous iteration's
/// objectives are carried with `add` appended and `remove` dropped.
/// `revisions[i]` is proposed on retry `i + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleEntry {
    pub iteration: u32,
    pub rationale: String,
    pub objectives: Option<Vec<Objective>>,
    pub add: Vec<Objective>,
    pub remove: Vec<String>,
    pub revisions: Vec<Vec<Objective>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSchedule {
    #[serde(default)]
    pub iterations: Vec<ScheduleEntry>,
}

impl PlanSchedule {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| AgentError::json(path, e))
        } else {
            serde_json::from_str(&text).map_err(|e| AgentError::json(path, e))
        }
    }
}

/// Deterministic planner reading an iteration-indexed schedule.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPlanner {
    pub schedule: PlanSchedule,
}

impl ScriptedPlanner {
    pub fn new(schedule: PlanSchedule) -> Self {
        Self { schedule }
    }
}

impl Planner for ScriptedPlanner {
    fn plan(&mut self, req: &PlanRequest<'_>) -> Result<PlanProposal> {
        let entry = self.schedule.iterations.iter().find(|e| e.iteration == req.iteration);
        let Some(entry) = entry else {
            if req.iteration == 1 && !req.initial_objectives.is_empty() {
                return Ok(PlanProposal {
                    objectives: req.initial_objectives.to_vec(),
                    rationale: "initial objectives".into(),
                    iteration: req.iteration,
                });
            }
            return Err(AgentError::NoPlan(req.iteration));
        };
        let revision = req.attempt.checked_sub(1).and_then(|i| entry.revisions.get(i as usize));
        let objectives = match (revision, &entry.objectives) {
            (Some(rev), _) => rev.clone(),
            (None, Some(list)) => list.clone(),
            (None, None) => {
                let base = if req.current_objectives.is_empty() {
                    req.initial_objectives
                } else {
                    req.current_objectives
                };
                let drop: BTreeSet<&str> = entry.remove.iter().map(String::as_str).collect();
                let mut out: Vec<Objective> = base.iter().filter(|o| !drop.contains(o.id.as_str())).cloned().collect();
                out.extend(entry.add.iter().cloned());
                out
            }
        };
        Ok(PlanProposal {
            objectives,
            rationale: entry.rationale.clone(),
            iteration: req.iteration,
        })
    }
}

/// Objective record as requested from a language model.
#[derive(Debug, Clone, Deserialize)]
pub struct ObjectiveRecord {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: String,
    pub kind: ObjectiveKind,
    pub direction: Direction,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub scorer_hint: Option<String>,
}

impl From<ObjectiveRecord> for Objective {
    fn from(r: ObjectiveRecord) -> Self {
        Objective {
            name: r.name.unwrap_or_else(|| r.id.clone()),
            id: r.id,
            description: r.description,
            kind: r.kind,
            direction: r.direction,
            weight: r.weight,
            scorer_binding: None,
            scorer_hint: r.scorer_hint,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PlanReply {
    Full {
        #[serde(default)]
        rationale: String,
        objectives: Vec<ObjectiveRecord>,
    },
    List(Vec<ObjectiveRecord>),
}

const PLANNER_SYSTEM: &str = "You are the planning module of an optimization system. \
Decompose the scientific goal into computable objectives. Every objective must be scorable \
by one of the listed scoring functions; name it in `scorer_hint` and put any parameter \
overrides in the description as `name=value`. Reply with a fenced ```objectives block holding \
JSON: {\"rationale\": string, \"objectives\": [{\"id\", \"name\", \"description\", \"kind\" \
(candidate_wise|population_wise|filter), \"direction\" (maximize|minimize|not_applicable), \
\"weight\", \"scorer_hint\"}]}.";

pub struct LlmPlanner {
    pub client: Arc<dyn CompletionClient>,
    pub parse_retries: u32,
}

impl LlmPlanner {
    pub fn new(client: Arc<dyn CompletionClient>) -> Self {
        Self {
            client,
            parse_retries: 2,
        }
    }

    fn prompt(req: &PlanRequest<'_>) -> String {
        let catalog: Vec<String> = req
            .registry
            .iter()
            .map(|d| {
                format!(
                    "- {} ({:?}, {:?}): {}",
                    d.descriptor_id, d.kind, d.direction_hint, d.description
                )
            })
            .collect();
        let mut s = format!(
            "Goal:\n{}\n\nContext:\n{}\n\nIteration: {}\n",
            req.goal, req.context, req.iteration
        );
        s += &format!("\nAvailable scoring functions:\n{}\n", catalog.join("\n"));
        if !req.initial_objectives.is_empty() && req.iteration == 1 {
            s += &format!(
                "\nInitial objectives suggested by the user:\n{}\n",
                serde_json::to_string_pretty(req.initial_objectives).unwrap_or_default()
            );
        }
        if !req.current_objectives.is_empty() {
            s += &format!(
                "\nObjectives of the previous iteration:\n{}\n",
                serde_json::to_string_pretty(req.current_objectives).unwrap_or_default()
            );
        }
        if let Some(r) = req.prior_report {
            s += &format!(
                "\nPrevious analysis report:\n{}\n",
                serde_json::to_string_pretty(r).unwrap_or_default()
            );
        }
        if !req.unmatched.is_empty() {
            let lines: Vec<String> = req
                .unmatched
                .iter()
                .map(|u| format!("- {}: {}", u.objective_id, u.reason))
                .collect();
            s += &format!(
                "\nThese objectives could not be bound to a scoring function:\n{}\n",
                lines.join("\n")
            );
        }
        s
    }
}

impl Planner for LlmPlanner {
    fn plan(&mut self, req: &PlanRequest<'_>) -> Result<PlanProposal> {
        let prompt = Self::prompt(req);
        let mut last = None;
        for _ in 0..=self.parse_retries {
            let text = self.client.complete(PLANNER_SYSTEM, &prompt, "objectives")?;
            match parse_block::<PlanReply>(&text, "objectives") {
                Ok(PlanReply::Full { rationale, objectives }) => {
                    return Ok(PlanProposal {
                        objectives: objectives.into_iter().map(Objective::from).collect(),
                        rationale,
                        iteration: req.iteration,
                    })
                }
                Ok(PlanReply::List(objectives)) => {
                    return Ok(PlanProposal {
                        objectives: objectives.into_iter().map(Objective::from).collect(),
                        rationale: String::new(),
                        iteration: req.iteration,
                    })
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
