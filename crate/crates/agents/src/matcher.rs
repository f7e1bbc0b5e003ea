//! Implementer: binds proposed objectives to registered scoring functions.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use objevo_core::model::{Objective, ScorerBinding};
use objevo_core::scorers::ScoringFunctionDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::completion::CompletionClient;
use crate::error::Result;
use crate::planner::PlanProposal;

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matched {
    pub objective_id: String,
    pub descriptor_id: String,
    pub params: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub objective_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: Vec<Matched>,
    pub unmatched: Vec<Unmatched>,
}

impl MatchResult {
    pub fn is_complete(&self) -> bool {
        self.unmatched.is_empty()
    }

    /// The proposal's objectives with their bindings filled in.
    pub fn bind(&self, proposal: &PlanProposal) -> Vec<Objective> {
        proposal
            .objectives
            .iter()
            .map(|o| {
                let mut o = o.clone();
                if let Some(m) = self.matched.iter().find(|m| m.objective_id == o.id) {
                    o.scorer_binding = Some(ScorerBinding {
                        descriptor_id: m.descriptor_id.clone(),
                        params: m.params.clone(),
                    });
                }
                o
            })
            .collect()
    }
}

pub trait Matcher: Send {
    fn match_objectives(
        &mut self,
        proposal: &PlanProposal,
        registry: &[ScoringFunctionDescriptor],
    ) -> Result<MatchResult>;
}

/// Lowercase alphanumeric words, with `name=value` pairs removed first.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .filter(|w| !w.contains('='))
        .flat_map(|w| w.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// `name=value` pairs in free text; values parse as JSON when they can.
pub fn embedded_params(text: &str) -> BTreeMap<String, Value> {
    text.split_whitespace()
        .filter_map(|w| {
            let w = w.trim_end_matches([',', ';', '.', ')']).trim_start_matches('(');
            let (k, v) = w.split_once('=')?;
            if k.is_empty() || v.is_empty() || !k.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return None;
            }
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Some((k.to_string(), value))
        })
        .collect()
}

fn mentions(text: &str, id: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|w| w == id)
}

/// Binds `desc` for `obj`: explicit params, else schema keys found in the
/// description; defaults fill the rest. Fails when parameters do not validate.
fn bind_params(
    obj: &Objective,
    desc: &ScoringFunctionDescriptor,
    explicit: Option<&BTreeMap<String, Value>>,
) -> std::result::Result<BTreeMap<String, Value>, String> {
    let supplied: BTreeMap<String, Value> = match explicit {
        Some(p) => p.clone(),
        None => embedded_params(&obj.description)
            .into_iter()
            .filter(|(k, _)| desc.param_schema.contains_key(k))
            .collect(),
    };
    desc.resolve_params(&supplied).map_err(|e| e.to_string())?;
    Ok(supplied)
}

fn finish(
    obj: &Objective,
    desc: &ScoringFunctionDescriptor,
    explicit: Option<&BTreeMap<String, Value>>,
    out: &mut MatchResult,
) {
    if desc.kind != obj.kind {
        out.unmatched.push(Unmatched {
            objective_id: obj.id.clone(),
            reason: format!(
                "kind mismatch: objective is {:?}, `{}` is {:?}",
                obj.kind, desc.descriptor_id, desc.kind
            ),
        });
        return;
    }
    match bind_params(obj, desc, explicit) {
        Ok(params) => out.matched.push(Matched {
            objective_id: obj.id.clone(),
            descriptor_id: desc.descriptor_id.clone(),
            params,
        }),
        Err(reason) => out.unmatched.push(Unmatched {
            objective_id: obj.id.clone(),
            reason: format!("parameters for `{}` invalid: {reason}", desc.descriptor_id),
        }),
    }
}

type DirectMatch<'a> = std::result::Result<(&'a ScoringFunctionDescriptor, Option<BTreeMap<String, Value>>), String>;

/// Resolves explicit bindings, hints and verbatim mentions. Returns `None`
/// when the objective needs fuzzy matching.
fn direct_match<'a>(obj: &Objective, registry: &'a [ScoringFunctionDescriptor]) -> Option<DirectMatch<'a>> {
    if let Some(b) = &obj.scorer_binding {
        return Some(
            registry
                .iter()
                .find(|d| d.descriptor_id == b.descriptor_id)
                .map(|d| (d, Some(b.params.clone())))
                .ok_or_else(|| format!("unknown scoring function `{}`", b.descriptor_id)),
        );
    }
    let by_mention = |text: &str| {
        let mut hits: Vec<&ScoringFunctionDescriptor> =
            registry.iter().filter(|d| mentions(text, &d.descriptor_id)).collect();
        // prefer the longest id so `kmer_novelty` beats a hypothetical `kmer`
        hits.sort_by(|a, b| {
            b.descriptor_id
                .len()
                .cmp(&a.descriptor_id.len())
                .then(a.descriptor_id.cmp(&b.descriptor_id))
        });
        hits.first().copied()
    };
    if let Some(d) = obj.scorer_hint.as_deref().and_then(by_mention) {
        return Some(Ok((d, None)));
    }
    by_mention(&obj.description).map(|d| Ok((d, None)))
}

/// Deterministic matcher: explicit binding, then a descriptor id named in the
/// scorer hint, then one named in the description, then word-set Jaccard
/// similarity between descriptions at or above `threshold`.
#[derive(Debug, Clone)]
pub struct ScriptedMatcher {
    pub threshold: f64,
}

impl Default for ScriptedMatcher {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl Matcher for ScriptedMatcher {
    fn match_objectives(
        &mut self,
        proposal: &PlanProposal,
        registry: &[ScoringFunctionDescriptor],
    ) -> Result<MatchResult> {
        let mut out = MatchResult::default();
        for obj in &proposal.objectives {
            match direct_match(obj, registry) {
                Some(Ok((d, explicit))) => finish(obj, d, explicit.as_ref(), &mut out),
                Some(Err(reason)) => out.unmatched.push(Unmatched {
                    objective_id: obj.id.clone(),
                    reason,
                }),
                None => {
                    let text = if obj.description.trim().is_empty() {
                        &obj.name
                    } else {
                        &obj.description
                    };
                    let words = tokens(text);
                    let best = registry
                        .iter()
                        .filter(|d| d.kind == obj.kind)
                        .map(|d| (jaccard(&words, &tokens(&d.description)), d))
                        .filter(|(s, _)| *s >= self.threshold)
                        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.descriptor_id.cmp(&a.1.descriptor_id)));
                    match best {
                        Some((_, d)) => finish(obj, d, None, &mut out),
                        None => out.unmatched.push(Unmatched {
                            objective_id: obj.id.clone(),
                            reason: "no descriptor above threshold".into(),
                        }),
                    }
                }
            }
        }
        Ok(out)
    }
}

const MATCH_SYSTEM: &str = "You decide whether a scoring function computes an optimization objective. \
Answer with a single word: yes or no.";

/// Pairwise yes/no prompts; the first affirmative in registry order wins.
pub struct LlmMatcher {
    pub client: Arc<dyn CompletionClient>,
}

impl Matcher for LlmMatcher {
    fn match_objectives(
        &mut self,
        proposal: &PlanProposal,
        registry: &[ScoringFunctionDescriptor],
    ) -> Result<MatchResult> {
        let mut out = MatchResult::default();
        for obj in &proposal.objectives {
            if let Some(Ok((d, explicit))) = direct_match(obj, registry) {
                finish(obj, d, explicit.as_ref(), &mut out);
                continue;
            }
            let mut chosen = None;
            for d in registry.iter().filter(|d| d.kind == obj.kind) {
                let user = format!(
                    "Objective `{}` ({:?}): {}\n\nScoring function `{}`: {}\n\nDoes this scoring function compute the objective?",
                    obj.name, obj.direction, obj.description, d.descriptor_id, d.description
                );
                let reply = self.client.complete(MATCH_SYSTEM, &user, "match")?;
                if reply.trim().to_lowercase().starts_with("yes") {
                    chosen = Some(d);
                    break;
                }
            }
            match chosen {
                Some(d) => finish(obj, d, None, &mut out),
                None => out.unmatched.push(Unmatched {
                    objective_id: obj.id.clone(),
                    reason: "no scoring function judged equivalent".into(),
                }),
            }
        }
        Ok(out)
    }
}
