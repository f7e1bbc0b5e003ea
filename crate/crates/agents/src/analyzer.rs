//! Analyzer: summarizes an iteration and decides whether to continue.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use objevo_core::model::{rank_order, Candidate, Direction, Objective, ObjectiveStats};
use serde::{Deserialize, Serialize};

use crate::completion::CompletionClient;
use crate::error::Result;
use crate::wire::parse_block;

pub const TOP_CANDIDATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsWithDelta {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vs_previous: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCandidate {
    pub id: String,
    pub aggregate: Option<f64>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub overview: String,
    pub performance_analysis: String,
    pub issues_and_concerns: String,
    pub strategic_recommendations: String,
    pub objective_stats: BTreeMap<String, StatsWithDelta>,
    pub top_candidates: Vec<TopCandidate>,
    pub termination: Termination,
    pub termination_reason: String,
}

/// What the analyzer keeps about a finished iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: u32,
    pub objectives: Vec<Objective>,
    pub stats: BTreeMap<String, ObjectiveStats>,
    pub best_id: Option<String>,
    pub best_aggregate: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Minimum direction-aware mean improvement that counts as progress.
    pub epsilon: f64,
    /// Per-objective target means; the run stops once every target is met.
    pub targets: BTreeMap<String, f64>,
}

pub struct AnalyzeRequest<'a> {
    pub goal: &'a str,
    pub iteration: u32,
    pub objectives: &'a [Objective],
    pub candidates: &'a [Candidate],
    /// Statistics of `candidates` under `objectives`, computed by the evaluator.
    pub stats: &'a BTreeMap<String, ObjectiveStats>,
    /// Earlier iterations, oldest first.
    pub history: &'a [IterationSummary],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: AnalysisReport,
    /// Set when the narrative came from the template after a backend failure.
    pub degraded: Option<String>,
}

pub trait Analyzer: Send {
    fn analyze(&mut self, req: &AnalyzeRequest<'_>) -> Result<Analysis>;
}

fn improvement(direction: Direction, delta: f64) -> Option<f64> {
    match direction {
        Direction::Maximize => Some(delta),
        Direction::Minimize => Some(-delta),
        Direction::NotApplicable => None,
    }
}

fn target_met(direction: Direction, mean: f64, target: f64) -> bool {
    match direction {
        Direction::Minimize => mean <= target,
        _ => mean >= target,
    }
}

/// Statistics plus deltas against the latest summary that has the objective.
pub fn stats_with_deltas(req: &AnalyzeRequest<'_>) -> BTreeMap<String, StatsWithDelta> {
    let prev = req.history.last();
    req.stats
        .iter()
        .map(|(id, s)| {
            let delta = prev.and_then(|p| p.stats.get(id)).map(|p| s.mean - p.mean);
            (
                id.clone(),
                StatsWithDelta {
                    mean: s.mean,
                    std: s.std,
                    min: s.min,
                    max: s.max,
                    delta_vs_previous: delta,
                },
            )
        })
        .collect()
}

/// Stop rules: all configured targets met, or (with an unchanged objective
/// set) no mean improved by more than `epsilon`.
pub fn termination(
    cfg: &AnalyzerConfig,
    req: &AnalyzeRequest<'_>,
    stats: &BTreeMap<String, StatsWithDelta>,
) -> (Termination, String) {
    if !cfg.targets.is_empty() {
        let all = cfg.targets.iter().all(|(id, t)| {
            let dir = req.objectives.iter().find(|o| &o.id == id).map(|o| o.direction);
            match (dir, stats.get(id)) {
                (Some(d), Some(s)) => target_met(d, s.mean, *t),
                _ => false,
            }
        });
        if all {
            return (Termination::Stop, "targets met".into());
        }
    }
    let Some(prev) = req.history.last() else {
        return (Termination::Continue, "first iteration".into());
    };
    let same_set = prev.objectives.len() == req.objectives.len()
        && req
            .objectives
            .iter()
            .all(|o| prev.objectives.iter().any(|p| p.id == o.id));
    if !same_set {
        return (Termination::Continue, "objective set changed".into());
    }
    let progressed = req.objectives.iter().any(|o| {
        stats
            .get(&o.id)
            .and_then(|s| s.delta_vs_previous)
            .and_then(|d| improvement(o.direction, d))
            .is_some_and(|imp| imp > cfg.epsilon)
    });
    if progressed {
        (Termination::Continue, "objectives still improving".into())
    } else {
        (Termination::Stop, "converged".into())
    }
}

pub fn top_candidates(cands: &[Candidate], n: usize) -> Vec<TopCandidate> {
    let mut ranked: Vec<&Candidate> = cands.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    ranked
        .into_iter()
        .take(n)
        .map(|c| TopCandidate {
            id: c.id.0.clone(),
            aggregate: c.aggregate,
            scores: c.scores.clone(),
        })
        .collect()
}

/// Narrative sections rendered from the statistics alone. Every number in
/// the text is a formatted statistic.
pub fn template_narrative(
    objectives: &[Objective],
    stats: &BTreeMap<String, StatsWithDelta>,
    term: &(Termination, String),
) -> [String; 4] {
    let mut overview = String::from("Population statistics per objective:");
    let mut perf = String::new();
    let mut issues = String::new();
    let mut recs = String::new();
    for o in objectives {
        let Some(s) = stats.get(&o.id) else { continue };
        let _ = write!(
            overview,
            " {} mean {:.4} (std {:.4}, range {:.4} to {:.4});",
            o.id, s.mean, s.std, s.min, s.max
        );
        match s.delta_vs_previous {
            Some(d) => {
                let verdict = match improvement(o.direction, d) {
                    Some(i) if i > 0.0 => "improved",
                    Some(i) if i < 0.0 => "regressed",
                    Some(_) => "unchanged",
                    None => "changed",
                };
                let _ = write!(perf, "{} {} by {:.4} in mean. ", o.id, verdict, d);
                if verdict == "regressed" {
                    let _ = write!(issues, "{} regressed (mean change {:.4}). ", o.id, d);
                    let _ = write!(recs, "Revisit the weighting of {}. ", o.id);
                }
            }
            None => {
                let _ = write!(perf, "{} has no earlier value to compare against. ", o.id);
            }
        }
        if s.std == 0.0 && s.min == s.max {
            let _ = write!(issues, "The population has collapsed on {} (std {:.4}). ", o.id, s.std);
            let _ = write!(recs, "Inject random candidates to restore diversity on {}. ", o.id);
        }
    }
    if perf.is_empty() {
        perf.push_str("No objective statistics are available.");
    }
    if issues.is_empty() {
        issues.push_str("No regressions or diversity collapse detected.");
    }
    match term.0 {
        Termination::Stop => {
            let _ = write!(recs, "Stop optimizing: {}.", term.1);
        }
        Termination::Continue if recs.is_empty() => {
            recs.push_str("Continue with the current objectives and refine weights where progress stalls.");
        }
        Termination::Continue => {}
    }
    [
        overview,
        perf.trim_end().into(),
        issues.trim_end().into(),
        recs.trim_end().into(),
    ]
}

fn assemble(
    req: &AnalyzeRequest<'_>,
    stats: BTreeMap<String, StatsWithDelta>,
    term: (Termination, String),
    narrative: [String; 4],
) -> AnalysisReport {
    let [overview, performance_analysis, issues_and_concerns, strategic_recommendations] = narrative;
    AnalysisReport {
        overview,
        performance_analysis,
        issues_and_concerns,
        strategic_recommendations,
        objective_stats: stats,
        top_candidates: top_candidates(req.candidates, TOP_CANDIDATES),
        termination: term.0,
        termination_reason: term.1,
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedAnalyzer {
    pub config: AnalyzerConfig,
}

impl Analyzer for ScriptedAnalyzer {
    fn analyze(&mut self, req: &AnalyzeRequest<'_>) -> Result<Analysis> {
        let stats = stats_with_deltas(req);
        let term = termination(&self.config, req, &stats);
        let narrative = template_narrative(req.objectives, &stats, &term);
        Ok(Analysis {
            report: assemble(req, stats, term, narrative),
            degraded: None,
        })
    }
}

#[derive(Debug, Deserialize)]
struct NarrativeReply {
    overview: String,
    performance_analysis: String,
    issues_and_concerns: String,
    strategic_recommendations: String,
    #[serde(default)]
    terminate: bool,
    #[serde(default)]
    termination_reason: Option<String>,
}

const ANALYZER_SYSTEM: &str = "You are the analysis module of an optimization system. \
Given objective statistics and the top candidates, write a report. Use only numbers that appear \
in the input. Reply with a fenced ```report block holding JSON: {\"overview\", \
\"performance_analysis\", \"issues_and_concerns\", \"strategic_recommendations\" (strings), \
\"terminate\" (bool), \"termination_reason\" (string)}.";

/// Narrative from a language model; statistics and the stop rules stay
/// in-process. The model may ask to stop early but cannot keep a run going
/// once the rules stop it.
pub struct LlmAnalyzer {
    pub client: Arc<dyn CompletionClient>,
    pub config: AnalyzerConfig,
}

impl Analyzer for LlmAnalyzer {
    fn analyze(&mut self, req: &AnalyzeRequest<'_>) -> Result<Analysis> {
        let stats = stats_with_deltas(req);
        let term = termination(&self.config, req, &stats);
        let top = top_candidates(req.candidates, TOP_CANDIDATES);
        let user = format!(
            "Goal:\n{}\n\nIteration: {}\n\nObjectives:\n{}\n\nStatistics:\n{}\n\nTop candidates:\n{}\n\nHistory:\n{}\n\nRule-based verdict: {:?} ({})",
            req.goal,
            req.iteration,
            serde_json::to_string_pretty(req.objectives).unwrap_or_default(),
            serde_json::to_string_pretty(&stats).unwrap_or_default(),
            serde_json::to_string_pretty(&top).unwrap_or_default(),
            serde_json::to_string_pretty(req.history).unwrap_or_default(),
            term.0,
            term.1,
        );
        let reply = self
            .client
            .complete(ANALYZER_SYSTEM, &user, "report")
            .and_then(|text| parse_block::<NarrativeReply>(&text, "report"));
        match reply {
            Ok(r)
                if ![
                    &r.overview,
                    &r.performance_analysis,
                    &r.issues_and_concerns,
                    &r.strategic_recommendations,
                ]
                .iter()
                .any(|s| s.trim().is_empty()) =>
            {
                let term = if term.0 == Termination::Continue && r.terminate {
                    (
                        Termination::Stop,
                        r.termination_reason.unwrap_or_else(|| "analyzer requested stop".into()),
                    )
                } else {
                    term
                };
                let narrative = [
                    r.overview,
                    r.performance_analysis,
                    r.issues_and_concerns,
                    r.strategic_recommendations,
                ];
                Ok(Analysis {
                    report: assemble(req, stats, term, narrative),
                    degraded: None,
                })
            }
            other => {
                let why = match other {
                    Err(e) => e.to_string(),
                    Ok(_) => "empty narrative section".into(),
                };
                log::warn!("analyzer narrative unavailable, using template: {why}");
                let narrative = template_narrative(req.objectives, &stats, &term);
                Ok(Analysis {
                    report: assemble(req, stats, term, narrative),
                    degraded: Some(why),
                })
            }
        }
    }
}
