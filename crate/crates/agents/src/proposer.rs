//! Candidate proposer backed by a language model.

use std::sync::Arc;

use objevo_core::model::{Candidate, CandidatePayload};
use objevo_core::optimizer::{Proposer, RandomSpec};
use objevo_core::rng::StreamRng;
use objevo_core::CoreError;
use serde::Deserialize;

use crate::completion::CompletionClient;
use crate::wire::parse_block;

const PROPOSER_SYSTEM: &str = "You propose new candidates for an optimization loop. \
Reply with a fenced ```candidates block holding a JSON list of payloads, each either \
{\"sequence\": \"ACGT...\"} or {\"fingerprint\": \"hex\", \"width\": n}.";

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PayloadReply {
    Payload(CandidatePayload),
    Sequence { sequence: String },
    Bare(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CandidatesReply {
    Wrapped { candidates: Vec<PayloadReply> },
    Bare(Vec<PayloadReply>),
}

/// Crossover and mutation by prompting with parents and their scores.
/// Random candidates come from `random` so initialization stays seeded.
pub struct LlmProposer {
    pub client: Arc<dyn CompletionClient>,
    pub goal: String,
    pub random: RandomSpec,
}

impl LlmProposer {
    fn ask(&self, instruction: &str, parents: &[&Candidate], n: usize) -> objevo_core::Result<Vec<CandidatePayload>> {
        let listing: Vec<String> = parents
            .iter()
            .map(|c| {
                format!(
                    "- {} aggregate={:?} scores={}",
                    c.payload.canonical_key(),
                    c.aggregate,
                    serde_json::to_string(&c.scores).unwrap_or_default()
                )
            })
            .collect();
        let user = format!(
            "Goal:\n{}\n\n{instruction} Propose {n}.\n\nParents:\n{}",
            self.goal,
            listing.join("\n")
        );
        let parsed = self
            .client
            .complete(PROPOSER_SYSTEM, &user, "candidates")
            .and_then(|t| parse_block::<CandidatesReply>(&t, "candidates"))
            .map_err(|e| CoreError::Proposer(e.to_string()))?;
        let items = match parsed {
            CandidatesReply::Wrapped { candidates } | CandidatesReply::Bare(candidates) => candidates,
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items.into_iter().take(n) {
            let payload = match item {
                PayloadReply::Payload(p) => p,
                PayloadReply::Sequence { sequence: s } | PayloadReply::Bare(s) => {
                    match CandidatePayload::sequence(&s) {
                        Ok(p) => p,
                        Err(e) => {
                            log::debug!("dropping proposed payload: {e}");
                            continue;
                        }
                    }
                }
            };
            out.push(payload);
        }
        Ok(out)
    }
}

impl Proposer for LlmProposer {
    fn tag(&self) -> &str {
        "llm"
    }

    fn propose_crossover(
        &mut self,
        parents: &[&Candidate],
        n: usize,
        _rng: &mut StreamRng,
    ) -> objevo_core::Result<Vec<CandidatePayload>> {
        self.ask("Combine features of these parents into new candidates.", parents, n)
    }

    fn propose_mutations(
        &mut self,
        best: &[&Candidate],
        n: usize,
        _rng: &mut StreamRng,
    ) -> objevo_core::Result<Vec<CandidatePayload>> {
        self.ask("Make small improvements to these top candidates.", best, n)
    }

    fn generate_random(&mut self, n: usize, rng: &mut StreamRng) -> objevo_core::Result<Vec<CandidatePayload>> {
        (0..n).map(|_| self.random.generate(rng)).collect()
    }
}
