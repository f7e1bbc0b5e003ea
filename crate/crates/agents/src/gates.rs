//! Approval gates: persisted decision points awaiting a human.

use serde::{Deserialize, Serialize};

use crate::analyzer::AnalysisReport;
use crate::error::{AgentError, Result};
use crate::planner::PlanProposal;
use crate::store::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateStage {
    Plan,
    Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateAction {
    Accept,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GatePayload {
    Plan(PlanProposal),
    Analysis(Box<AnalysisReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResolution {
    pub action: GateAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_payload: Option<GatePayload>,
    #[serde(default)]
    pub resolver: String,
    #[serde(default)]
    pub timestamp: Option<String>,
}

impl GateResolution {
    pub fn accept(resolver: &str) -> Self {
        Self {
            action: GateAction::Accept,
            revised_payload: None,
            resolver: resolver.into(),
            timestamp: None,
        }
    }

    pub fn revise(resolver: &str, payload: GatePayload) -> Self {
        Self {
            action: GateAction::Revise,
            revised_payload: Some(payload),
            resolver: resolver.into(),
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalGate {
    pub gate_id: String,
    pub run_id: String,
    pub iteration: u32,
    pub stage: GateStage,
    pub proposed_payload: GatePayload,
    #[serde(default)]
    pub resolution: Option<GateResolution>,
}

impl ApprovalGate {
    pub fn plan_gate_id(iteration: u32, attempt: u32) -> String {
        format!("it{iteration}-plan-{attempt}")
    }

    pub fn analysis_gate_id(iteration: u32) -> String {
        format!("it{iteration}-analysis")
    }

    pub fn is_open(&self) -> bool {
        self.resolution.is_none()
    }

    /// The payload downstream phases consume: the revision if any, else the proposal.
    pub fn effective_payload(&self) -> &GatePayload {
        self.resolution
            .as_ref()
            .and_then(|r| r.revised_payload.as_ref())
            .unwrap_or(&self.proposed_payload)
    }

    /// Checks a resolution against the rules the proposal itself had to pass.
    pub fn validate_resolution(&self, res: &GateResolution, max_objectives: usize) -> Result<()> {
        match (res.action, &res.revised_payload) {
            (GateAction::Accept, None) => Ok(()),
            (GateAction::Accept, Some(_)) => {
                Err(AgentError::Validation("accept must not carry a revised payload".into()))
            }
            (GateAction::Revise, None) => Err(AgentError::Validation("revise requires a revised payload".into())),
            (GateAction::Revise, Some(GatePayload::Plan(p))) => {
                if self.stage != GateStage::Plan {
                    return Err(AgentError::Validation(
                        "plan payload submitted to an analysis gate".into(),
                    ));
                }
                if p.iteration != self.iteration {
                    return Err(AgentError::Validation(format!(
                        "revised plan is for iteration {}, gate is for iteration {}",
                        p.iteration, self.iteration
                    )));
                }
                p.validate(max_objectives)
            }
            (GateAction::Revise, Some(GatePayload::Analysis(r))) => {
                if self.stage != GateStage::Analysis {
                    return Err(AgentError::Validation(
                        "analysis payload submitted to a plan gate".into(),
                    ));
                }
                let sections = [
                    ("overview", &r.overview),
                    ("performance_analysis", &r.performance_analysis),
                    ("issues_and_concerns", &r.issues_and_concerns),
                    ("strategic_recommendations", &r.strategic_recommendations),
                ];
                match sections.iter().find(|(_, s)| s.trim().is_empty()) {
                    Some((name, _)) => Err(AgentError::Validation(format!("report section `{name}` is empty"))),
                    None => Ok(()),
                }
            }
        }
    }
}

/// Records `res` on an open gate of `dir`. Fails when the gate is already
/// resolved or the revision does not validate; the gate then stays open.
pub fn resolve_gate(
    dir: &RunDir,
    gate_id: &str,
    mut res: GateResolution,
    max_objectives: usize,
) -> Result<ApprovalGate> {
    let mut gate = dir.load_gate(gate_id)?;
    if !gate.is_open() {
        return Err(AgentError::AlreadyResolved(gate_id.into()));
    }
    if let Some(GatePayload::Plan(p)) = &mut res.revised_payload {
        if p.iteration == 0 {
            p.iteration = gate.iteration;
        }
    }
    gate.validate_resolution(&res, max_objectives)?;
    if res.resolver.is_empty() {
        res.resolver = "unknown".into();
    }
    if res.timestamp.is_none() {
        res.timestamp = Some(chrono::Utc::now().to_rfc3339());
    }
    gate.resolution = Some(res);
    dir.write_gate(&gate)?;
    Ok(gate)
}

/// Handle an approval channel uses to record decisions.
pub struct GateResolver<'a> {
    pub dir: &'a RunDir,
    pub max_objectives: usize,
}

impl GateResolver<'_> {
    pub fn resolve(&self, gate_id: &str, res: GateResolution) -> Result<ApprovalGate> {
        resolve_gate(self.dir, gate_id, res, self.max_objectives)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision {
    /// The gate has been resolved through the resolver.
    Resolved,
    /// Leave the gate open and suspend the run.
    Park,
    Abort,
}

/// Where open gates are presented for a decision.
pub trait ApprovalChannel: Send {
    fn decide(&mut self, gate: &ApprovalGate, resolver: &GateResolver<'_>) -> GateDecision;
}

/// Never decides; runs suspend at every gate (headless operation).
#[derive(Debug, Clone, Default)]
pub struct ParkChannel;

impl ApprovalChannel for ParkChannel {
    fn decide(&mut self, _gate: &ApprovalGate, _resolver: &GateResolver<'_>) -> GateDecision {
        GateDecision::Park
    }
}

/// Accepts every gate unchanged.
#[derive(Debug, Clone)]
pub struct AutoAcceptChannel {
    pub resolver: String,
}

impl Default for AutoAcceptChannel {
    fn default() -> Self {
        Self {
            resolver: "auto".into(),
        }
    }
}

impl ApprovalChannel for AutoAcceptChannel {
    fn decide(&mut self, gate: &ApprovalGate, resolver: &GateResolver<'_>) -> GateDecision {
        match resolver.resolve(&gate.gate_id, GateResolution::accept(&self.resolver)) {
            Ok(_) => GateDecision::Resolved,
            Err(e) => {
                log::error!("auto-accept of gate {} failed: {e}", gate.gate_id);
                GateDecision::Park
            }
        }
    }
}

/// Applies prepared resolutions by gate id; other gates follow `fallback`.
pub struct ScriptedChannel {
    pub resolutions: std::collections::BTreeMap<String, GateResolution>,
    pub fallback: Box<dyn ApprovalChannel>,
}

impl ApprovalChannel for ScriptedChannel {
    fn decide(&mut self, gate: &ApprovalGate, resolver: &GateResolver<'_>) -> GateDecision {
        match self.resolutions.remove(&gate.gate_id) {
            Some(res) => match resolver.resolve(&gate.gate_id, res) {
                Ok(_) => GateDecision::Resolved,
                Err(e) => {
                    log::error!("scripted resolution of gate {} rejected: {e}", gate.gate_id);
                    GateDecision::Park
                }
            },
            None => self.fallback.decide(gate, resolver),
        }
    }
}
