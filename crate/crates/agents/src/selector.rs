//! Selector: picks the final candidates across all iterations.

use std::collections::BTreeSet;
use std::sync::Arc;

use objevo_core::model::{rank_order, Candidate, Objective};
use objevo_core::optimizer::selection::dedupe_payloads;
use objevo_core::Evaluator;
use serde::Deserialize;

use crate::completion::CompletionClient;
use crate::error::Result;
use crate::wire::parse_block;

/// Removes scores that `current` would compute differently: objectives whose
/// binding changed since `scored_under`, or that were not active then.
/// Scores of objectives absent from `current` are kept as history.
pub fn invalidate_rebound_scores(cands: &mut [Candidate], scored_under: &[Objective], current: &[Objective]) {
    let stale: BTreeSet<&str> = current
        .iter()
        .filter(|o| {
            !scored_under
                .iter()
                .any(|p| p.id == o.id && p.scorer_binding == o.scorer_binding && p.kind == o.kind)
        })
        .map(|o| o.id.as_str())
        .collect();
    for c in cands {
        c.scores.retain(|k, _| !stale.contains(k.as_str()));
        c.aggregate = None;
    }
}

pub struct SelectRequest<'a> {
    pub goal: &'a str,
    /// Every candidate eligible for selection, with stale scores removed
    /// (see [`invalidate_rebound_scores`]).
    pub candidates: Vec<Candidate>,
    pub evaluator: &'a Evaluator,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidates: Vec<Candidate>,
    /// Scorer calls spent filling in missing scores.
    pub evaluations: usize,
    /// How many fewer than `n` distinct candidates were available.
    pub shortfall: usize,
    pub degraded: Option<String>,
}

pub trait Selector: Send {
    fn select(&mut self, req: SelectRequest<'_>) -> Result<Selection>;
}

/// Scores, deduplicates and ranks every eligible candidate.
fn ranked_pool(req: SelectRequest<'_>) -> (Vec<Candidate>, usize, usize) {
    let n = req.n;
    let (scored, discarded, used) = req.evaluator.evaluate(req.candidates);
    if !discarded.is_empty() {
        log::warn!(
            "{} candidates could not be scored under the final objectives",
            discarded.len()
        );
    }
    let mut pool = dedupe_payloads(scored);
    pool.sort_by(rank_order);
    let shortfall = n.saturating_sub(pool.len());
    if shortfall > 0 {
        log::warn!("only {} distinct candidates available for {n} final slots", pool.len());
    }
    (pool, used, shortfall)
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedSelector;

impl Selector for ScriptedSelector {
    fn select(&mut self, req: SelectRequest<'_>) -> Result<Selection> {
        let n = req.n.max(1);
        let (mut pool, evaluations, shortfall) = ranked_pool(req);
        pool.truncate(n);
        Ok(Selection {
            candidates: pool,
            evaluations,
            shortfall,
            degraded: None,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RankingReply {
    Wrapped { ranking: Vec<String> },
    Bare(Vec<String>),
}

const SELECTOR_SYSTEM: &str = "You are the final selection module of an optimization system. \
Rank the shortlisted candidates holistically against the goal. Reply with a fenced ```ranking \
block holding JSON: {\"ranking\": [candidate ids, best first]}.";

/// Lets a language model re-rank the scripted top `3n`.
pub struct LlmSelector {
    pub client: Arc<dyn CompletionClient>,
}

impl Selector for LlmSelector {
    fn select(&mut self, req: SelectRequest<'_>) -> Result<Selection> {
        let n = req.n.max(1);
        let goal = req.goal.to_string();
        let (mut pool, evaluations, shortfall) = ranked_pool(req);
        pool.truncate(3 * n);
        let listing: Vec<String> = pool
            .iter()
            .map(|c| {
                format!(
                    "- {} aggregate={:?} scores={} payload={}",
                    c.id,
                    c.aggregate,
                    serde_json::to_string(&c.scores).unwrap_or_default(),
                    c.payload.canonical_key()
                )
            })
            .collect();
        let user = format!(
            "Goal:\n{goal}\n\nSelect the best {n}.\n\nShortlist:\n{}",
            listing.join("\n")
        );
        let reply = self
            .client
            .complete(SELECTOR_SYSTEM, &user, "ranking")
            .and_then(|t| parse_block::<RankingReply>(&t, "ranking"));
        let degraded = match reply {
            Ok(RankingReply::Wrapped { ranking } | RankingReply::Bare(ranking)) => {
                let mut ordered = Vec::with_capacity(pool.len());
                for id in &ranking {
                    if let Some(pos) = pool.iter().position(|c| &c.id.0 == id) {
                        ordered.push(pool.remove(pos));
                    }
                }
                ordered.append(&mut pool);
                pool = ordered;
                None
            }
            Err(e) => {
                log::warn!("re-ranking failed, keeping aggregate order: {e}");
                Some(e.to_string())
            }
        };
        pool.truncate(n);
        Ok(Selection {
            candidates: pool,
            evaluations,
            shortfall,
            degraded,
        })
    }
}
