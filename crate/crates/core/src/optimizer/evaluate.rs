//! Binds objectives to scorers and evaluates candidates.

use std::collections::BTreeMap;

use crate::aggregate::Aggregator;
use crate::error::{CoreError, Result};
use crate::model::{
    population_stats, validate_objectives, Candidate, CandidateId, CandidatePayload, Objective, ObjectiveKind,
    ObjectiveStats, PayloadConstraints,
};
use crate::par::{map_ordered, ExecMode};
use crate::scorers::{BindContext, BoundScorer, ScorerRegistry};

/// A candidate that could not be scored, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Discarded {
    pub id: CandidateId,
    pub reason: String,
}

/// Executable objective set: every objective bound to a scorer plus the
/// aggregation rule.
#[derive(Clone, Debug)]
pub struct Evaluator {
    objectives: Vec<Objective>,
    scorers: BTreeMap<String, BoundScorer>,
    aggregator: Aggregator,
    pub constraints: PayloadConstraints,
    pub mode: ExecMode,
}

impl Evaluator {
    /// Binds every objective through the registry. Descriptor default
    /// normalizers fill in for objectives the aggregator does not cover.
    pub fn bind(
        objectives: &[Objective],
        registry: &ScorerRegistry,
        ctx: &BindContext,
        aggregator: &Aggregator,
        constraints: PayloadConstraints,
        mode: ExecMode,
    ) -> Result<Self> {
        let mut aggregator = aggregator.clone();
        let mut scorers = BTreeMap::new();
        for obj in objectives {
            let binding = obj.require_bound()?;
            let desc = registry
                .descriptor(&binding.descriptor_id)
                .ok_or_else(|| CoreError::UnknownDescriptor(binding.descriptor_id.clone()))?;
            if desc.kind != obj.kind {
                return Err(CoreError::InvalidObjective {
                    id: obj.id.clone(),
                    reason: format!(
                        "kind {:?} cannot bind {:?} descriptor `{}`",
                        obj.kind, desc.kind, desc.descriptor_id
                    ),
                });
            }
            if let Some(n) = desc.default_normalizer {
                aggregator.normalizers.entry(obj.id.clone()).or_insert(n);
            }
            scorers.insert(obj.id.clone(), registry.bind(binding, ctx)?);
        }
        Self::from_parts(objectives, scorers, aggregator, constraints, mode)
    }

    pub fn from_parts(
        objectives: &[Objective],
        scorers: BTreeMap<String, BoundScorer>,
        aggregator: Aggregator,
        constraints: PayloadConstraints,
        mode: ExecMode,
    ) -> Result<Self> {
        validate_objectives(objectives)?;
        for obj in objectives {
            let ok = matches!(
                (scorers.get(&obj.id), obj.kind),
                (Some(BoundScorer::Population(_)), ObjectiveKind::PopulationWise)
                    | (
                        Some(BoundScorer::Candidate(_)),
                        ObjectiveKind::CandidateWise | ObjectiveKind::Filter
                    )
            );
            if !ok {
                return Err(CoreError::InvalidObjective {
                    id: obj.id.clone(),
                    reason: "no scorer of matching kind".into(),
                });
            }
            if !obj.is_filter()
                && obj.kind == ObjectiveKind::CandidateWise
                && !aggregator.normalizers.contains_key(&obj.id)
            {
                return Err(CoreError::MissingNormalizer(obj.id.clone()));
            }
        }
        Ok(Self {
            objectives: objectives.to_vec(),
            scorers,
            aggregator,
            constraints,
            mode,
        })
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn objective_ids(&self) -> impl Iterator<Item = &str> {
        self.objectives.iter().map(|o| o.id.as_str())
    }

    fn per_candidate(&self) -> impl Iterator<Item = &Objective> {
        self.objectives
            .iter()
            .filter(|o| o.kind != ObjectiveKind::PopulationWise)
    }

    /// Raw scores of a payload on every candidate-wise and filter objective.
    pub fn score_payload(&self, payload: &CandidatePayload) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for obj in self.per_candidate() {
            let Some(BoundScorer::Candidate(s)) = self.scorers.get(&obj.id) else {
                continue;
            };
            let v = s.score(payload)?;
            if !v.is_finite() {
                return Err(CoreError::InvalidObjective {
                    id: obj.id.clone(),
                    reason: format!("scorer returned non-finite value {v}"),
                });
            }
            if obj.is_filter() && v != 0.0 && v != 1.0 {
                return Err(CoreError::NormalizerContract {
                    id: obj.id.clone(),
                    value: v,
                });
            }
            out.insert(obj.id.clone(), v);
        }
        Ok(out)
    }

    fn needs_scoring(&self, c: &Candidate) -> bool {
        self.per_candidate().any(|o| !c.scores.contains_key(&o.id))
    }

    /// Fills in missing scores and recomputes aggregates.
    ///
    /// Returns the scored candidates (input order), the discarded ones and
    /// the number of candidates that needed scorer calls.
    pub fn evaluate(&self, cands: Vec<Candidate>) -> (Vec<Candidate>, Vec<Discarded>, usize) {
        let used = cands.iter().filter(|c| self.needs_scoring(c)).count();
        let results = map_ordered(self.mode, &cands, |c| -> Result<(BTreeMap<String, f64>, f64)> {
            c.payload.validate(&self.constraints)?;
            let mut scores = c.scores.clone();
            if self.needs_scoring(c) {
                for (k, v) in self.score_payload(&c.payload)? {
                    scores.insert(k, v);
                }
            }
            let agg = self.aggregator.aggregate(&scores, &self.objectives)?;
            Ok((scores, agg))
        });
        let mut ok = Vec::with_capacity(cands.len());
        let mut bad = Vec::new();
        for (mut c, r) in cands.into_iter().zip(results) {
            match r {
                Ok((scores, agg)) => {
                    c.scores = scores;
                    c.aggregate = Some(agg);
                    ok.push(c);
                }
                Err(e) => {
                    log::warn!("discarding candidate {}: {e}", c.id);
                    bad.push(Discarded {
                        id: c.id,
                        reason: e.to_string(),
                    });
                }
            }
        }
        (ok, bad, used)
    }

    /// Population-wise objective values over the given candidates.
    pub fn population_scores(&self, cands: &[Candidate]) -> Result<BTreeMap<String, f64>> {
        let payloads: Vec<&CandidatePayload> = cands.iter().map(|c| &c.payload).collect();
        let mut out = BTreeMap::new();
        for obj in self
            .objectives
            .iter()
            .filter(|o| o.kind == ObjectiveKind::PopulationWise)
        {
            if let Some(BoundScorer::Population(s)) = self.scorers.get(&obj.id) {
                out.insert(obj.id.clone(), s.score(&payloads)?);
            }
        }
        Ok(out)
    }

    /// Statistics for every active objective. Population-wise objectives
    /// report their single value as mean, min and max with zero spread.
    pub fn stats(&self, cands: &[Candidate]) -> Result<BTreeMap<String, ObjectiveStats>> {
        let mut out = population_stats(cands, self.per_candidate().map(|o| o.id.as_str()))?;
        for (id, v) in self.population_scores(cands)? {
            out.insert(
                id,
                ObjectiveStats {
                    mean: v,
                    std: 0.0,
                    min: v,
                    max: v,
                },
            );
        }
        Ok(out)
    }
}
