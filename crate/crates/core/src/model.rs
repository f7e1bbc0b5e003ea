//! Domain types shared by every part of the engine.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dna::DnaSequence;
use crate::error::{CoreError, Result};
use crate::fingerprint::Fingerprint;

/// Opaque candidate identifier. Ordering is lexicographic and is used for
/// every deterministic tie-break in the engine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub String);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CandidateId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Hands out run-unique ids whose lexicographic order is creation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdAllocator {
    next: u64,
}

impl IdAllocator {
    pub fn starting_at(next: u64) -> Self {
        Self { next }
    }

    pub fn next_id(&mut self) -> CandidateId {
        let id = CandidateId(format!("c{:010}", self.next));
        self.next += 1;
        id
    }

    pub fn peek(&self) -> u64 {
        self.next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CandidatePayload {
    Sequence { text: DnaSequence },
    Fingerprint(Fingerprint),
    Attributes { values: BTreeMap<String, f64> },
}

impl CandidatePayload {
    pub fn sequence(text: &str) -> Result<Self> {
        Ok(Self::Sequence {
            text: DnaSequence::new(text)?,
        })
    }

    pub fn as_sequence(&self) -> Option<&DnaSequence> {
        match self {
            Self::Sequence { text } => Some(text),
            _ => None,
        }
    }

    pub fn as_fingerprint(&self) -> Option<&Fingerprint> {
        match self {
            Self::Fingerprint(fp) => Some(fp),
            _ => None,
        }
    }

    pub fn attribute(&self, key: &str) -> Result<f64> {
        match self {
            Self::Attributes { values } => values
                .get(key)
                .copied()
                .ok_or_else(|| CoreError::AttributeNotPresent(key.to_string())),
            _ => Err(CoreError::AttributeNotPresent(key.to_string())),
        }
    }

    /// A string that is equal for two payloads iff the payloads are equal.
    pub fn canonical_key(&self) -> String {
        match self {
            Self::Sequence { text } => format!("seq:{text}"),
            Self::Fingerprint(fp) => format!("fp:{}:{}", fp.width(), fp.to_hex()),
            Self::Attributes { values } => {
                let parts: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
                format!("attr:{}", parts.join(","))
            }
        }
    }

    /// Checks domain constraints that the inner loop enforces on proposals.
    pub fn validate(&self, constraints: &PayloadConstraints) -> Result<()> {
        match self {
            Self::Sequence { text } => {
                if let Some(len) = constraints.sequence_length {
                    if text.len() != len {
                        return Err(CoreError::InvalidPayload(format!(
                            "sequence length {} != required {}",
                            text.len(),
                            len
                        )));
                    }
                }
            }
            Self::Fingerprint(fp) => {
                if let Some(w) = constraints.fingerprint_width {
                    if fp.width() != w {
                        return Err(CoreError::InvalidPayload(format!(
                            "fingerprint width {} != required {}",
                            fp.width(),
                            w
                        )));
                    }
                }
            }
            Self::Attributes { values } => {
                if let Some((k, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(CoreError::InvalidPayload(format!("attribute `{k}` is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Domain constraints applied to every proposed payload.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadConstraints {
    #[serde(default)]
    pub sequence_length: Option<usize>,
    #[serde(default)]
    pub fingerprint_width: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub iteration: u32,
    pub generation: u32,
    #[serde(default)]
    pub parent_ids: Vec<CandidateId>,
    pub proposer_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub payload: CandidatePayload,
    pub origin: Origin,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<f64>,
}

impl Candidate {
    pub fn new(id: CandidateId, payload: CandidatePayload, origin: Origin) -> Self {
        Self {
            id,
            payload,
            origin,
            scores: BTreeMap::new(),
            aggregate: None,
        }
    }

    /// Aggregate for ranking; unscored candidates rank below everything.
    pub fn rank_value(&self) -> f64 {
        self.aggregate.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Descending aggregate, then ascending id.
pub fn rank_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.rank_value().total_cmp(&a.rank_value()).then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    CandidateWise,
    PopulationWise,
    Filter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerBinding {
    pub descriptor_id: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: ObjectiveKind,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_binding: Option<ScorerBinding>,
    /// Free-text pointer to a scoring function, used by the matcher.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_hint: Option<String>,
}

impl Objective {
    pub fn new(id: &str, kind: ObjectiveKind, direction: Direction) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            description: String::new(),
            kind,
            direction,
            weight: None,
            scorer_binding: None,
            scorer_hint: None,
        }
    }

    pub fn with_binding(mut self, descriptor_id: &str, params: BTreeMap<String, serde_json::Value>) -> Self {
        self.scorer_binding = Some(ScorerBinding {
            descriptor_id: descriptor_id.to_string(),
            params,
        });
        self
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = Some(w);
        self
    }

    pub fn with_description(mut self, d: &str) -> Self {
        self.description = d.to_string();
        self
    }

    pub fn is_filter(&self) -> bool {
        self.kind == ObjectiveKind::Filter
    }

    pub fn effective_weight(&self) -> f64 {
        self.weight.unwrap_or(1.0)
    }

    /// Structural invariants: kind/direction agreement and weight sanity.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| CoreError::InvalidObjective {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(bad("empty id"));
        }
        match (self.kind, self.direction) {
            (ObjectiveKind::Filter, Direction::NotApplicable) => {}
            (ObjectiveKind::Filter, _) => return Err(bad("filter objectives take direction not_applicable")),
            (_, Direction::NotApplicable) => {
                return Err(bad("non-filter objectives need direction maximize or minimize"))
            }
            _ => {}
        }
        if let Some(w) = self.weight {
            if self.is_filter() {
                return Err(bad("filter objectives cannot carry a weight"));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(bad("weight must be a finite value >= 0"));
            }
        }
        Ok(())
    }

    /// Required before an objective may enter the inner loop.
    pub fn require_bound(&self) -> Result<&ScorerBinding> {
        self.scorer_binding.as_ref().ok_or_else(|| CoreError::InvalidObjective {
            id: self.id.clone(),
            reason: "no scorer binding".into(),
        })
    }
}

/// Validates a list of objectives: each individually and ids unique.
pub fn validate_objectives(objectives: &[Objective]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for o in objectives {
        o.validate()?;
        if !seen.insert(o.id.as_str()) {
            return Err(CoreError::InvalidObjective {
                id: o.id.clone(),
                reason: "duplicate objective id".into(),
            });
        }
    }
    Ok(())
}

/// One objective's score for one candidate, as exported to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub objective_id: String,
    pub value: f64,
    pub is_filter: bool,
}

impl ScoreRecord {
    pub fn new(objective: &Objective, value: f64) -> Result<Self> {
        if objective.is_filter() && value != 0.0 && value != 1.0 {
            return Err(CoreError::InvalidArgument(format!(
                "filter `{}` produced {value}, expected 0.0 or 1.0",
                objective.id
            )));
        }
        Ok(Self {
            objective_id: objective.id.clone(),
            value,
            is_filter: objective.is_filter(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub iteration: u32,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub stats: BTreeMap<String, ObjectiveStats>,
}

impl Population {
    pub fn new(iteration: u32, candidates: Vec<Candidate>) -> Self {
        Self {
            iteration,
            candidates,
            stats: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Recomputes `stats` for the given objective ids.
    pub fn refresh_stats<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        self.stats = population_stats(&self.candidates, ids)?;
        Ok(())
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.iter().min_by(|a, b| rank_order(a, b))
    }
}

/// Moments of a list of values (population convention, divisor N).
pub fn summarize(values: &[f64]) -> Result<ObjectiveStats> {
    if values.is_empty() {
        return Err(CoreError::EmptyPopulation);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ObjectiveStats {
        mean,
        std: var.sqrt(),
        min,
        max,
    })
}

/// Per-objective mean, std, min and max over the candidates.
pub fn population_stats<'a>(
    candidates: &[Candidate],
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<BTreeMap<String, ObjectiveStats>> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyPopulation);
    }
    let mut out = BTreeMap::new();
    for id in ids {
        let values = candidates
            .iter()
            .map(|c| {
                c.scores
                    .get(id)
                    .copied()
                    .ok_or_else(|| CoreError::UnscoredObjective(id.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(id.to_string(), summarize(&values)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(id: &str, v: f64) -> Candidate {
        let mut c = Candidate::new(
            CandidateId::from(id),
            CandidatePayload::sequence("ACGT").unwrap(),
            Origin::default(),
        );
        c.scores.insert("o".into(), v);
        c
    }

    #[test]
    fn stats_examples() {
        let s = population_stats(&[scored("a", 0.0), scored("b", 1.0)], ["o"]).unwrap()["o"];
        assert_eq!((s.mean, s.std, s.min, s.max), (0.5, 0.5, 0.0, 1.0));

        let s = population_stats(&[scored("a", 0.7)], ["o"]).unwrap()["o"];
        assert_eq!((s.mean, s.std), (0.7, 0.0));

        let s = population_stats(&[scored("a", 0.2), scored("b", 0.4), scored("c", 0.9)], ["o"]).unwrap()["o"];
        approx::assert_abs_diff_eq!(s.mean, 0.5, epsilon = 1e-12);
        // sqrt((0.09 + 0.01 + 0.16) / 3)
        approx::assert_abs_diff_eq!(s.std, 0.294_392_028_877_595, epsilon = 1e-9);
    }

    #[test]
    fn stats_errors() {
        assert_eq!(population_stats(&[], ["o"]), Err(CoreError::EmptyPopulation));
        assert!(matches!(
            population_stats(&[scored("a", 1.0)], ["missing"]),
            Err(CoreError::UnscoredObjective(_))
        ));
    }

    #[test]
    fn objective_validation() {
        let ok = Objective::new("f", ObjectiveKind::Filter, Direction::NotApplicable);
        assert!(ok.validate().is_ok());
        assert!(ok.clone().with_weight(1.0).validate().is_err());
        assert!(Objective::new("f", ObjectiveKind::Filter, Direction::Maximize)
            .validate()
            .is_err());
        assert!(
            Objective::new("c", ObjectiveKind::CandidateWise, Direction::NotApplicable)
                .validate()
                .is_err()
        );
        assert!(Objective::new("c", ObjectiveKind::CandidateWise, Direction::Minimize)
            .with_weight(-1.0)
            .validate()
            .is_err());
        let a = Objective::new("x", ObjectiveKind::CandidateWise, Direction::Maximize);
        assert!(validate_objectives(&[a.clone(), a]).is_err());
    }

    #[test]
    fn payload_json_shape() {
        let p = CandidatePayload::sequence("ACGT").unwrap();
        let j = serde_json::to_value(&p).unwrap();
        assert_eq!(j, serde_json::json!({"type": "sequence", "text": "ACGT"}));
        let fp = CandidatePayload::Fingerprint(Fingerprint::from_bits(8, [1]).unwrap());
        let j = serde_json::to_value(&fp).unwrap();
        assert_eq!(j, serde_json::json!({"type": "fingerprint", "bits": "02", "width": 8}));
        let back: CandidatePayload = serde_json::from_value(j).unwrap();
        assert_eq!(back, fp);
    }

    #[test]
    fn ids_sort_in_creation_order() {
        let mut ids = IdAllocator::default();
        let a = ids.next_id();
        let b = ids.next_id();
        assert!(a < b);
    }
}
