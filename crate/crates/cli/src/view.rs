//! Plain-text rendering of gates and their payloads, and parsing of
//! revisions submitted from files.

use std::fmt::Write as _;
use std::path::Path;

use objevo_agents::analyzer::AnalysisReport;
use objevo_agents::gates::{ApprovalGate, GatePayload, GateStage};
use objevo_agents::planner::PlanProposal;

use crate::style::Style;

fn cell(s: &str, width: usize) -> String {
    let mut s: String = s.chars().take(width).collect();
    while s.chars().count() < width {
        s.push(' ');
    }
    s
}

pub fn plan_table(p: &PlanProposal) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{} {} {} {} {} DESCRIPTION",
        cell("ID", 14),
        cell("KIND", 15),
        cell("DIRECTION", 9),
        cell("WEIGHT", 6),
        cell("SCORER", 22)
    )
    .unwrap();
    for o in &p.objectives {
        let scorer = o
            .scorer_binding
            .as_ref()
            .map(|b| b.descriptor_id.clone())
            .or_else(|| o.scorer_hint.as_ref().map(|h| format!("~{h}")))
            .unwrap_or_else(|| "-".into());
        let weight = o.weight.map(|w| format!("{w}")).unwrap_or_else(|| "1".into());
        let kind = serde_json::to_value(o.kind).unwrap();
        let dir = serde_json::to_value(o.direction).unwrap();
        writeln!(
            out,
            "{} {} {} {} {} {}",
            cell(&o.id, 14),
            cell(kind.as_str().unwrap_or(""), 15),
            cell(dir.as_str().unwrap_or(""), 9),
            cell(&weight, 6),
            cell(&scorer, 22),
            o.description
        )
        .unwrap();
    }
    out
}

pub fn report_text(r: &AnalysisReport) -> String {
    let mut out = String::new();
    for (title, body) in [
        ("Overview", &r.overview),
        ("Performance", &r.performance_analysis),
        ("Issues", &r.issues_and_concerns),
        ("Recommendations", &r.strategic_recommendations),
    ] {
        writeln!(out, "{title}:\n  {}\n", body.trim().replace('\n', "\n  ")).unwrap();
    }
    let verdict = serde_json::to_value(r.termination).unwrap();
    writeln!(
        out,
        "Termination: {} ({})",
        verdict.as_str().unwrap_or(""),
        r.termination_reason
    )
    .unwrap();
    out
}

pub fn gate_text(gate: &ApprovalGate, style: &Style) -> String {
    let stage = match gate.stage {
        GateStage::Plan => "plan",
        GateStage::Analysis => "analysis",
    };
    let status = match &gate.resolution {
        None => style.yellow("open"),
        Some(r) => style.green(&format!("resolved by {}", r.resolver)),
    };
    let mut out = format!(
        "{} {} gate, iteration {} [{}]\n",
        style.bold(&gate.gate_id),
        stage,
        gate.iteration,
        status
    );
    match gate.effective_payload() {
        GatePayload::Plan(p) => {
            if !p.rationale.is_empty() {
                writeln!(out, "Rationale: {}", p.rationale).unwrap();
            }
            out.push_str(&plan_table(p));
        }
        GatePayload::Analysis(r) => out.push_str(&report_text(r)),
    }
    out
}

/// One line per gate.
pub fn gate_list(gates: &[ApprovalGate], style: &Style) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        cell("GATE", 16),
        cell("ITERATION", 9),
        cell("STAGE", 8),
        "STATUS"
    );
    for g in gates {
        let stage = if g.stage == GateStage::Plan { "plan" } else { "analysis" };
        let status = match &g.resolution {
            None => style.yellow("open"),
            Some(r) => {
                let action = serde_json::to_value(r.action).unwrap();
                format!("{} by {}", action.as_str().unwrap_or(""), r.resolver)
            }
        };
        writeln!(
            out,
            "{} {} {} {}",
            cell(&g.gate_id, 16),
            cell(&g.iteration.to_string(), 9),
            cell(stage, 8),
            status
        )
        .unwrap();
    }
    out
}

/// The payload as a user edits it: pretty JSON of the effective payload.
pub fn editable(gate: &ApprovalGate) -> String {
    let value = match gate.effective_payload() {
        GatePayload::Plan(p) => serde_json::to_string_pretty(p),
        GatePayload::Analysis(r) => serde_json::to_string_pretty(r),
    };
    value.expect("payload serializes") + "\n"
}

/// Parses a revision for a gate of `stage` from JSON, or TOML when `path`
/// ends in `.toml`.
pub fn parse_revision(stage: GateStage, text: &str, path: Option<&Path>) -> Result<GatePayload, String> {
    let toml = path.is_some_and(|p| p.extension().is_some_and(|e| e == "toml"));
    fn de<T: serde::de::DeserializeOwned>(text: &str, toml: bool) -> Result<T, String> {
        if toml {
            toml::from_str(text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(text).map_err(|e| e.to_string())
        }
    }
    Ok(match stage {
        GateStage::Plan => GatePayload::Plan(de(text, toml)?),
        GateStage::Analysis => GatePayload::Analysis(Box::new(de(text, toml)?)),
    })
}
