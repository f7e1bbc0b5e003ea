//! Scoring-function registry.
//!
//! Every built-in scorer is described by a [`ScoringFunctionDescriptor`]
//! (identifier, kind, parameter schema, output range) and a factory that turns
//! a [`ScorerBinding`] into an executable [`BoundScorer`]. Context files
//! (weight tables, motif sets, reference archives) are loaded once at bind time.

pub mod formulas;
pub mod kmer;
pub mod motif;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::Normalizer;
use crate::error::{CoreError, Result};
use crate::fingerprint::{tanimoto_similarity, Fingerprint};
use crate::model::{CandidatePayload, ObjectiveKind, ScorerBinding};
use crate::pwm::{log_odds, read_jaspar_file, UNIFORM_BACKGROUND};

use formulas::{Comparison, StabilityParams};
use kmer::{KmerVector, KmerWeightTable};
use motif::ThresholdedMotif;

pub trait CandidateScorer: Send + Sync {
    fn score(&self, payload: &CandidatePayload) -> Result<f64>;
}

pub trait PopulationScorer: Send + Sync {
    fn score(&self, payloads: &[&CandidatePayload]) -> Result<f64>;
}

#[derive(Clone)]
pub enum BoundScorer {
    Candidate(Arc<dyn CandidateScorer>),
    Population(Arc<dyn PopulationScorer>),
}

impl std::fmt::Debug for BoundScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Candidate(_) => f.write_str("BoundScorer::Candidate"),
            Self::Population(_) => f.write_str("BoundScorer::Population"),
        }
    }
}

impl<F> CandidateScorer for F
where
    F: Fn(&CandidatePayload) -> Result<f64> + Send + Sync,
{
    fn score(&self, payload: &CandidatePayload) -> Result<f64> {
        self(payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Real,
    Int,
    String,
    Path,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "values")]
pub enum ParamConstraint {
    Any,
    Positive,
    NonNegative,
    UnitInterval,
    OpenUnitInterval,
    AtLeastOne,
    OneOf(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: ParamType,
    /// `None` marks a required parameter.
    pub default: Option<Value>,
    pub constraint: ParamConstraint,
}

impl ParamSpec {
    fn check(&self, name: &str, v: &Value) -> Result<()> {
        let bad = |reason: String| CoreError::Param {
            name: name.to_string(),
            reason,
        };
        match self.ty {
            ParamType::Real => {
                let x = v.as_f64().ok_or_else(|| bad(format!("expected a number, got {v}")))?;
                if !x.is_finite() {
                    return Err(bad("must be finite".into()));
                }
                self.check_numeric(x).map_err(bad)
            }
            ParamType::Int => {
                let x = v.as_i64().ok_or_else(|| bad(format!("expected an integer, got {v}")))?;
                self.check_numeric(x as f64).map_err(bad)
            }
            ParamType::String | ParamType::Path => {
                let s = v.as_str().ok_or_else(|| bad(format!("expected a string, got {v}")))?;
                match &self.constraint {
                    ParamConstraint::OneOf(opts) if !opts.iter().any(|o| o == s) => {
                        Err(bad(format!("must be one of {opts:?}")))
                    }
                    _ => Ok(()),
                }
            }
            ParamType::Object => v
                .is_object()
                .then_some(())
                .ok_or_else(|| bad(format!("expected an object, got {v}"))),
        }
    }

    fn check_numeric(&self, x: f64) -> std::result::Result<(), String> {
        let ok = match &self.constraint {
            ParamConstraint::Any | ParamConstraint::OneOf(_) => true,
            ParamConstraint::Positive => x > 0.0,
            ParamConstraint::NonNegative => x >= 0.0,
            ParamConstraint::UnitInterval => (0.0..=1.0).contains(&x),
            ParamConstraint::OpenUnitInterval => x > 0.0 && x < 1.0,
            ParamConstraint::AtLeastOne => x >= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{x} violates {:?}", self.constraint))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionHint {
    Maximize,
    Minimize,
    Filter,
}

/// Declared output range; `None` bounds are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl ScoreRange {
    pub const UNBOUNDED: Self = Self { lo: None, hi: None };
    pub const NON_NEGATIVE: Self = Self {
        lo: Some(0.0),
        hi: None,
    };
    pub const UNIT: Self = Self {
        lo: Some(0.0),
        hi: Some(1.0),
    };

    pub fn contains(&self, v: f64) -> bool {
        self.lo.is_none_or(|lo| v >= lo) && self.hi.is_none_or(|hi| v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringFunctionDescriptor {
    pub descriptor_id: String,
    pub kind: ObjectiveKind,
    pub param_schema: BTreeMap<String, ParamSpec>,
    pub range: ScoreRange,
    pub direction_hint: DirectionHint,
    pub description: String,
    /// Normalizer used for aggregation when a run does not declare one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_normalizer: Option<Normalizer>,
}

impl ScoringFunctionDescriptor {
    /// Defaults satisfy their own constraints and the range agrees with the kind.
    pub fn validate(&self) -> Result<()> {
        for (name, spec) in &self.param_schema {
            if let Some(d) = &spec.default {
                spec.check(name, d)?;
            }
        }
        let filter_range = self.range == ScoreRange::UNIT;
        let consistent = match self.kind {
            ObjectiveKind::Filter => filter_range && self.direction_hint == DirectionHint::Filter,
            _ => self.direction_hint != DirectionHint::Filter,
        };
        if !consistent {
            return Err(CoreError::Config(format!(
                "descriptor `{}` has a range or direction inconsistent with its kind",
                self.descriptor_id
            )));
        }
        Ok(())
    }

    /// Fills defaults, rejects unknown or ill-typed parameters.
    pub fn resolve_params(&self, supplied: &BTreeMap<String, Value>) -> Result<ResolvedParams> {
        if let Some(unknown) = supplied.keys().find(|k| !self.param_schema.contains_key(*k)) {
            return Err(CoreError::Param {
                name: unknown.clone(),
                reason: format!("not a parameter of `{}`", self.descriptor_id),
            });
        }
        let mut values = BTreeMap::new();
        for (name, spec) in &self.param_schema {
            let v = match supplied.get(name).or(spec.default.as_ref()) {
                Some(v) => v.clone(),
                None => {
                    return Err(CoreError::Param {
                        name: name.clone(),
                        reason: "required parameter missing".into(),
                    })
                }
            };
            spec.check(name, &v)?;
            values.insert(name.clone(), v);
        }
        Ok(ResolvedParams(values))
    }
}

/// Parameters after defaulting and validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedParams(pub BTreeMap<String, Value>);

impl ResolvedParams {
    fn get(&self, name: &str) -> Result<&Value> {
        self.0.get(name).ok_or_else(|| CoreError::Param {
            name: name.to_string(),
            reason: "not present".into(),
        })
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        self.get(name)?.as_f64().ok_or_else(|| CoreError::Param {
            name: name.into(),
            reason: "not a number".into(),
        })
    }

    pub fn int(&self, name: &str) -> Result<usize> {
        self.get(name)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| CoreError::Param {
                name: name.into(),
                reason: "not a non-negative integer".into(),
            })
    }

    pub fn string(&self, name: &str) -> Result<&str> {
        self.get(name)?.as_str().ok_or_else(|| CoreError::Param {
            name: name.into(),
            reason: "not a string".into(),
        })
    }

    pub fn object(&self, name: &str) -> Result<BTreeMap<String, Value>> {
        Ok(self
            .get(name)?
            .as_object()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default())
    }
}

/// Where relative context-file paths are resolved.
#[derive(Debug, Clone, Default)]
pub struct BindContext {
    pub base_dir: PathBuf,
}

impl BindContext {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

type Factory = Arc<dyn Fn(&ResolvedParams, &BindContext, &ScorerRegistry) -> Result<BoundScorer> + Send + Sync>;

/// Catalog of scoring functions, keyed by descriptor id.
#[derive(Clone)]
pub struct ScorerRegistry {
    entries: BTreeMap<String, (ScoringFunctionDescriptor, Factory)>,
}

impl std::fmt::Debug for ScorerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ScorerRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, descriptor: ScoringFunctionDescriptor, factory: F) -> Result<()>
    where
        F: Fn(&ResolvedParams, &BindContext, &ScorerRegistry) -> Result<BoundScorer> + Send + Sync + 'static,
    {
        descriptor.validate()?;
        self.entries
            .insert(descriptor.descriptor_id.clone(), (descriptor, Arc::new(factory)));
        Ok(())
    }

    pub fn descriptor(&self, id: &str) -> Option<&ScoringFunctionDescriptor> {
        self.entries.get(id).map(|(d, _)| d)
    }

    /// Descriptors in id order.
    pub fn catalog(&self) -> Vec<ScoringFunctionDescriptor> {
        self.entries.values().map(|(d, _)| d.clone()).collect()
    }

    pub fn bind(&self, binding: &ScorerBinding, ctx: &BindContext) -> Result<BoundScorer> {
        let (desc, factory) = self
            .entries
            .get(&binding.descriptor_id)
            .ok_or_else(|| CoreError::UnknownDescriptor(binding.descriptor_id.clone()))?;
        let params = desc.resolve_params(&binding.params)?;
        factory(&params, ctx, self)
    }

    /// Registry with every built-in scoring function.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for (desc, factory) in builtin_entries() {
            r.entries.insert(desc.descriptor_id.clone(), (desc, factory));
        }
        r
    }
}

fn spec(ty: ParamType, default: Option<Value>, constraint: ParamConstraint) -> ParamSpec {
    ParamSpec {
        ty,
        default,
        constraint,
    }
}

fn real(default: f64, c: ParamConstraint) -> ParamSpec {
    spec(ParamType::Real, Some(Value::from(default)), c)
}

fn required(ty: ParamType) -> ParamSpec {
    spec(ty, None, ParamConstraint::Any)
}

fn sequence_of(payload: &CandidatePayload) -> Result<&crate::dna::DnaSequence> {
    payload
        .as_sequence()
        .ok_or_else(|| CoreError::InvalidPayload("scorer requires a sequence payload".into()))
}

fn stability_schema() -> BTreeMap<String, ParamSpec> {
    BTreeMap::from([
        ("target_gc".into(), real(0.45, ParamConstraint::UnitInterval)),
        (
            "run_cap".into(),
            spec(ParamType::Int, Some(Value::from(5)), ParamConstraint::NonNegative),
        ),
        ("w_gc".into(), real(1.0, ParamConstraint::NonNegative)),
        ("w_run".into(), real(0.2, ParamConstraint::NonNegative)),
    ])
}

fn stability_params(p: &ResolvedParams) -> Result<StabilityParams> {
    Ok(StabilityParams {
        target_gc: p.real("target_gc")?,
        run_cap: p.int("run_cap")?,
        w_gc: p.real("w_gc")?,
        w_run: p.real("w_run")?,
    })
}

fn load_table(p: &ResolvedParams, name: &str, ctx: &BindContext) -> Result<Arc<KmerWeightTable>> {
    Ok(Arc::new(KmerWeightTable::load(ctx.resolve(p.string(name)?))?))
}

fn candidate<F>(f: F) -> BoundScorer
where
    F: Fn(&CandidatePayload) -> Result<f64> + Send + Sync + 'static,
{
    BoundScorer::Candidate(Arc::new(f))
}

struct HammingDiversity;

impl PopulationScorer for HammingDiversity {
    fn score(&self, payloads: &[&CandidatePayload]) -> Result<f64> {
        let seqs = payloads.iter().map(|p| sequence_of(p)).collect::<Result<Vec<_>>>()?;
        formulas::avg_pairwise_hamming(&seqs)
    }
}

fn descriptor(
    id: &str,
    kind: ObjectiveKind,
    hint: DirectionHint,
    range: ScoreRange,
    description: &str,
    schema: BTreeMap<String, ParamSpec>,
    default_normalizer: Option<Normalizer>,
) -> ScoringFunctionDescriptor {
    ScoringFunctionDescriptor {
        descriptor_id: id.to_string(),
        kind,
        param_schema: schema,
        range,
        direction_hint: hint,
        description: description.to_string(),
        default_normalizer,
    }
}

fn builtin_entries() -> Vec<(ScoringFunctionDescriptor, Factory)> {
    use DirectionHint as D;
    use ObjectiveKind as K;
    let unit = Some(Normalizer::unit());
    let mut out: Vec<(ScoringFunctionDescriptor, Factory)> = Vec::new();

    out.push((
        descriptor(
            "gc_homopolymer_penalty",
            K::CandidateWise,
            D::Minimize,
            ScoreRange::NON_NEGATIVE,
            "dna sequence stability penalty combining gc content deviation and homopolymer run excess",
            stability_schema(),
            unit,
        ),
        Arc::new(|p, _, _| {
            let sp = stability_params(p)?;
            Ok(candidate(move |c| {
                formulas::gc_homopolymer_penalty(sequence_of(c)?, &sp)
            }))
        }),
    ));

    let mut hinge_schema = stability_schema();
    hinge_schema.insert("margin".into(), real(0.15, ParamConstraint::NonNegative));
    out.push((
        descriptor(
            "stability_hinge",
            K::CandidateWise,
            D::Minimize,
            ScoreRange::NON_NEGATIVE,
            "hinge penalty on dna sequence stability: gc imbalance and homopolymer runs above a margin",
            hinge_schema,
            unit,
        ),
        Arc::new(|p, _, _| {
            let sp = stability_params(p)?;
            let margin = p.real("margin")?;
            Ok(candidate(move |c| {
                formulas::stability_hinge(sequence_of(c)?, &sp, margin)
            }))
        }),
    ));

    out.push((
        descriptor(
            "composite_specificity",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNBOUNDED,
            "composite target specific activity: on target expression minus hinge penalties on two off target expressions",
            BTreeMap::from([
                ("target_table".into(), required(ParamType::Path)),
                ("offtarget_a_table".into(), required(ParamType::Path)),
                ("offtarget_b_table".into(), required(ParamType::Path)),
                ("tau".into(), real(0.10, ParamConstraint::Any)),
                ("alpha".into(), real(1.3, ParamConstraint::NonNegative)),
                ("beta".into(), real(1.3, ParamConstraint::NonNegative)),
            ]),
            None,
        ),
        Arc::new(|p, ctx, _| {
            let (h, k, n) = (
                load_table(p, "target_table", ctx)?,
                load_table(p, "offtarget_a_table", ctx)?,
                load_table(p, "offtarget_b_table", ctx)?,
            );
            let (tau, alpha, beta) = (p.real("tau")?, p.real("alpha")?, p.real("beta")?);
            Ok(candidate(move |c| {
                let s = sequence_of(c)?;
                Ok(formulas::composite_specificity(h.score(s)?, k.score(s)?, n.score(s)?, tau, alpha, beta))
            }))
        }),
    ));

    out.push((
        descriptor(
            "offtarget_ratio",
            K::CandidateWise,
            D::Minimize,
            ScoreRange::UNBOUNDED,
            "off target to on target expression ratio with a stabilized denominator",
            BTreeMap::from([
                ("numerator_table".into(), required(ParamType::Path)),
                ("denominator_table".into(), required(ParamType::Path)),
                ("epsilon".into(), real(0.25, ParamConstraint::Positive)),
            ]),
            None,
        ),
        Arc::new(|p, ctx, _| {
            let num = load_table(p, "numerator_table", ctx)?;
            let den = load_table(p, "denominator_table", ctx)?;
            let eps = p.real("epsilon")?;
            Ok(candidate(move |c| {
                let s = sequence_of(c)?;
                Ok(formulas::offtarget_ratio(num.score(s)?, den.score(s)?, eps))
            }))
        }),
    ));

    out.push((
        descriptor(
            "motif_enrichment",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::NON_NEGATIVE,
            "transcription factor motif enrichment: summed log odds excess of pwm hits on both strands",
            BTreeMap::from([
                ("motif_file".into(), required(ParamType::Path)),
                ("pvalue".into(), real(1e-4, ParamConstraint::OpenUnitInterval)),
                (
                    "pseudocount".into(),
                    real(crate::pwm::DEFAULT_PSEUDOCOUNT, ParamConstraint::Positive),
                ),
                (
                    "granularity".into(),
                    real(crate::pwm::DEFAULT_GRANULARITY, ParamConstraint::Positive),
                ),
            ]),
            None,
        ),
        Arc::new(|p, ctx, _| {
            let counts = read_jaspar_file(ctx.resolve(p.string("motif_file")?))?;
            let pc = p.real("pseudocount")?;
            let loms = counts
                .iter()
                .map(|m| log_odds(m, UNIFORM_BACKGROUND, pc))
                .collect::<Result<Vec<_>>>()?;
            let motifs: Arc<Vec<ThresholdedMotif>> = Arc::new(motif::threshold_motifs(
                &loms,
                p.real("pvalue")?,
                p.real("granularity")?,
            )?);
            Ok(candidate(move |c| {
                Ok(motif::enrichment_with_thresholds(sequence_of(c)?, &motifs))
            }))
        }),
    ));

    out.push((
        descriptor(
            "kmer_novelty",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNIT,
            "sequence novelty: one minus the maximum cosine similarity of k-mer composition to a reference archive",
            BTreeMap::from([
                (
                    "reference_file".into(),
                    spec(ParamType::Path, Some(Value::from("")), ParamConstraint::Any),
                ),
                (
                    "k".into(),
                    spec(ParamType::Int, Some(Value::from(6)), ParamConstraint::AtLeastOne),
                ),
            ]),
            unit,
        ),
        Arc::new(|p, ctx, _| {
            let k = p.int("k")?;
            let path = p.string("reference_file")?;
            let reference: Vec<KmerVector> = if path.is_empty() {
                Vec::new()
            } else {
                kmer::read_sequences(ctx.resolve(path))?
                    .iter()
                    .map(|s| KmerVector::from_sequence(s, k))
                    .collect::<Result<_>>()?
            };
            let reference = Arc::new(reference);
            Ok(candidate(move |c| kmer::kmer_novelty(sequence_of(c)?, &reference, k)))
        }),
    ));

    out.push((
        descriptor(
            "avg_pairwise_hamming",
            K::PopulationWise,
            D::Maximize,
            ScoreRange::NON_NEGATIVE,
            "population sequence diversity: average pairwise hamming distance",
            BTreeMap::new(),
            None,
        ),
        Arc::new(|_, _, _| Ok(BoundScorer::Population(Arc::new(HammingDiversity)))),
    ));

    out.push((
        descriptor(
            "mw_sigmoid_penalty",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNIT,
            "molecular weight sigmoid penalty favouring weights below a midpoint",
            BTreeMap::from([
                (
                    "attribute".into(),
                    spec(ParamType::String, Some(Value::from("mw")), ParamConstraint::Any),
                ),
                ("midpoint".into(), real(500.0, ParamConstraint::Any)),
                ("scale".into(), real(50.0, ParamConstraint::Positive)),
            ]),
            unit,
        ),
        Arc::new(|p, _, _| {
            let key = p.string("attribute")?.to_string();
            let (mid, scale) = (p.real("midpoint")?, p.real("scale")?);
            Ok(candidate(move |c| {
                Ok(formulas::mw_sigmoid_penalty(c.attribute(&key)?, mid, scale))
            }))
        }),
    ));

    out.push((
        descriptor(
            "tanimoto_similarity",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNIT,
            "tanimoto fingerprint similarity to a reference fingerprint",
            BTreeMap::from([
                ("reference".into(), required(ParamType::String)),
                ("width".into(), spec(ParamType::Int, None, ParamConstraint::AtLeastOne)),
            ]),
            unit,
        ),
        Arc::new(|p, _, _| {
            let reference = Fingerprint::from_hex(p.string("reference")?, p.int("width")?)?;
            Ok(candidate(move |c| {
                let fp = c
                    .as_fingerprint()
                    .ok_or_else(|| CoreError::InvalidPayload("scorer requires a fingerprint payload".into()))?;
                tanimoto_similarity(fp, &reference)
            }))
        }),
    ));

    out.push((
        descriptor(
            "threshold_filter",
            K::Filter,
            D::Filter,
            ScoreRange::UNIT,
            "pass fail filter comparing another candidate scorer against a threshold",
            BTreeMap::from([
                ("scorer".into(), required(ParamType::String)),
                (
                    "scorer_params".into(),
                    spec(
                        ParamType::Object,
                        Some(Value::Object(Default::default())),
                        ParamConstraint::Any,
                    ),
                ),
                ("threshold".into(), required(ParamType::Real)),
                (
                    "direction".into(),
                    spec(
                        ParamType::String,
                        Some(Value::from("at_least")),
                        ParamConstraint::OneOf(vec!["at_least".into(), "at_most".into()]),
                    ),
                ),
            ]),
            None,
        ),
        Arc::new(|p, ctx, reg| {
            let inner = reg.bind(
                &ScorerBinding {
                    descriptor_id: p.string("scorer")?.to_string(),
                    params: p.object("scorer_params")?,
                },
                ctx,
            )?;
            let BoundScorer::Candidate(inner) = inner else {
                return Err(CoreError::Param {
                    name: "scorer".into(),
                    reason: "threshold_filter wraps candidate-wise scorers only".into(),
                });
            };
            let threshold = p.real("threshold")?;
            let direction = match p.string("direction")? {
                "at_most" => Comparison::AtMost,
                _ => Comparison::AtLeast,
            };
            Ok(candidate(move |c| {
                Ok(formulas::threshold_filter(inner.score(c)?, threshold, direction))
            }))
        }),
    ));

    out.push((
        descriptor(
            "kmer_surrogate_score",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNBOUNDED,
            "surrogate expression activity predicted by a linear k-mer weight table",
            BTreeMap::from([("weights_file".into(), required(ParamType::Path))]),
            None,
        ),
        Arc::new(|p, ctx, _| {
            let t = load_table(p, "weights_file", ctx)?;
            Ok(candidate(move |c| t.score(sequence_of(c)?)))
        }),
    ));

    out.push((
        descriptor(
            "attribute_value",
            K::CandidateWise,
            D::Maximize,
            ScoreRange::UNBOUNDED,
            "raw numeric attribute read from an attribute payload",
            BTreeMap::from([("attribute".into(), required(ParamType::String))]),
            None,
        ),
        Arc::new(|p, _, _| {
            let key = p.string("attribute")?.to_string();
            Ok(candidate(move |c| c.attribute(&key)))
        }),
    ));

    for (d, _) in &out {
        debug_assert!(d.validate().is_ok(), "builtin descriptor {} invalid", d.descriptor_id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bind(reg: &ScorerRegistry, id: &str, params: Value, dir: &Path) -> Result<BoundScorer> {
        let params = params
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        reg.bind(
            &ScorerBinding {
                descriptor_id: id.into(),
                params,
            },
            &BindContext::new(dir),
        )
    }

    fn score(b: &BoundScorer, p: &CandidatePayload) -> Result<f64> {
        match b {
            BoundScorer::Candidate(s) => s.score(p),
            BoundScorer::Population(_) => panic!("population scorer"),
        }
    }

    #[test]
    fn builtin_descriptors_valid() {
        let reg = ScorerRegistry::builtin();
        for d in reg.catalog() {
            d.validate().unwrap();
        }
        assert!(reg.descriptor("stability_hinge").is_some());
        assert_eq!(reg.catalog().len(), 12);
    }

    #[test]
    fn unknown_and_bad_params_rejected() {
        let reg = ScorerRegistry::builtin();
        let dir = Path::new(".");
        assert!(matches!(
            bind(&reg, "nope", json!({}), dir),
            Err(CoreError::UnknownDescriptor(_))
        ));
        assert!(matches!(
            bind(&reg, "stability_hinge", json!({"bogus": 1}), dir),
            Err(CoreError::Param { .. })
        ));
        assert!(matches!(
            bind(&reg, "stability_hinge", json!({"margin": -1.0}), dir),
            Err(CoreError::Param { .. })
        ));
        assert!(matches!(
            bind(&reg, "kmer_surrogate_score", json!({}), dir),
            Err(CoreError::Param { .. })
        ));
    }

    #[test]
    fn hinge_binding_uses_defaults() {
        let reg = ScorerRegistry::builtin();
        let b = bind(&reg, "stability_hinge", json!({}), Path::new(".")).unwrap();
        let all_a = CandidatePayload::sequence(&"A".repeat(200)).unwrap();
        approx::assert_abs_diff_eq!(score(&b, &all_a).unwrap(), 39.30, epsilon = 1e-9);
    }

    #[test]
    fn mw_attribute_missing() {
        let reg = ScorerRegistry::builtin();
        let b = bind(&reg, "mw_sigmoid_penalty", json!({}), Path::new(".")).unwrap();
        let p = CandidatePayload::Attributes {
            values: BTreeMap::from([("logp".to_string(), 1.0)]),
        };
        assert_eq!(score(&b, &p), Err(CoreError::AttributeNotPresent("mw".into())));
        let p = CandidatePayload::Attributes {
            values: BTreeMap::from([("mw".to_string(), 500.0)]),
        };
        assert_eq!(score(&b, &p).unwrap(), 0.5);
    }

    #[test]
    fn filter_wraps_surrogate_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.txt"), "k=1 bias=0\nA 1\n").unwrap();
        let reg = ScorerRegistry::builtin();
        let f = bind(
            &reg,
            "threshold_filter",
            json!({"scorer": "kmer_surrogate_score", "scorer_params": {"weights_file": "w.txt"}, "threshold": 2.0}),
            dir.path(),
        )
        .unwrap();
        assert_eq!(score(&f, &CandidatePayload::sequence("AAC").unwrap()).unwrap(), 1.0);
        assert_eq!(score(&f, &CandidatePayload::sequence("ACC").unwrap()).unwrap(), 0.0);
        let err = bind(
            &reg,
            "threshold_filter",
            json!({"scorer": "avg_pairwise_hamming", "threshold": 1.0}),
            dir.path(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn tanimoto_scorer() {
        let reg = ScorerRegistry::builtin();
        let b = bind(
            &reg,
            "tanimoto_similarity",
            json!({"reference": "0e", "width": 8}),
            Path::new("."),
        )
        .unwrap();
        let fp = CandidatePayload::Fingerprint(Fingerprint::from_bits(8, [2, 3, 4]).unwrap());
        assert_eq!(score(&b, &fp).unwrap(), 0.5);
    }

    #[test]
    fn scorers_deterministic() {
        let reg = ScorerRegistry::builtin();
        let b = bind(&reg, "gc_homopolymer_penalty", json!({}), Path::new(".")).unwrap();
        let p = CandidatePayload::sequence("ACGGGGGGGTTAC").unwrap();
        assert_eq!(score(&b, &p).unwrap().to_bits(), score(&b, &p).unwrap().to_bits());
    }
}
