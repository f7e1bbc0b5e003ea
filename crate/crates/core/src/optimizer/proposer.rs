//! Candidate proposers for the inner loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dna::{DnaSequence, BASES};
use crate::error::{CoreError, Result};
use crate::fingerprint::Fingerprint;
use crate::model::{Candidate, CandidatePayload};
use crate::rng::StreamRng;

/// Source of new payloads. Proposals may be invalid; the loop drops those.
pub trait Proposer: Send {
    fn tag(&self) -> &str;

    /// `n` children from the given parents (normally two).
    fn propose_crossover(
        &mut self,
        parents: &[&Candidate],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CandidatePayload>>;

    /// `n` variants of the given best candidates.
    fn propose_mutations(
        &mut self,
        best: &[&Candidate],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CandidatePayload>>;

    /// `n` fresh random payloads.
    fn generate_random(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<CandidatePayload>>;
}

/// Shape of randomly generated payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomSpec {
    RandomSequence { length: usize },
    RandomFingerprint { width: usize, density: f64 },
}

impl RandomSpec {
    pub fn generate(&self, rng: &mut impl Rng) -> Result<CandidatePayload> {
        match *self {
            RandomSpec::RandomSequence { length } => {
                if length == 0 {
                    return Err(CoreError::InvalidArgument(
                        "random sequence length must be positive".into(),
                    ));
                }
                let text: String = (0..length).map(|_| BASES[rng.gen_range(0..4)] as char).collect();
                Ok(CandidatePayload::Sequence {
                    text: DnaSequence::new(text)?,
                })
            }
            RandomSpec::RandomFingerprint { width, density } => {
                let bits: Vec<usize> = (0..width).filter(|_| rng.gen_bool(density.clamp(0.0, 1.0))).collect();
                Ok(CandidatePayload::Fingerprint(Fingerprint::from_bits(width, bits)?))
            }
        }
    }
}

/// Seeded genetic operators on sequences and fingerprints.
///
/// Crossover is single-point (a random cut, prefix from one parent and suffix
/// from the other, alternating which parent leads). Mutation substitutes
/// `point_mutations` random positions with a different base, or flips that
/// many bits. With `crossover` disabled, crossover requests return mutants of
/// the parents instead, which gives a plain hill climber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedProposer {
    pub random: RandomSpec,
    #[serde(default = "default_true")]
    pub crossover: bool,
    #[serde(default = "default_point_mutations")]
    pub point_mutations: usize,
}

fn default_true() -> bool {
    true
}

fn default_point_mutations() -> usize {
    2
}

impl ScriptedProposer {
    pub fn genetic(random: RandomSpec) -> Self {
        Self {
            random,
            crossover: true,
            point_mutations: default_point_mutations(),
        }
    }

    pub fn hill_climb(random: RandomSpec) -> Self {
        Self {
            random,
            crossover: false,
            point_mutations: 1,
        }
    }

    fn mutate(&self, payload: &CandidatePayload, rng: &mut StreamRng) -> Result<CandidatePayload> {
        match payload {
            CandidatePayload::Sequence { text } => {
                let mut bytes = text.as_bytes().to_vec();
                for _ in 0..self.point_mutations {
                    let i = rng.gen_range(0..bytes.len());
                    let choices: Vec<u8> = BASES.iter().copied().filter(|&b| b != bytes[i]).collect();
                    bytes[i] = *choices.choose(rng).expect("three alternatives");
                }
                Ok(CandidatePayload::Sequence {
                    text: DnaSequence::new(String::from_utf8(bytes).expect("ascii bases"))?,
                })
            }
            CandidatePayload::Fingerprint(fp) => {
                let width = fp.width();
                let mut set: Vec<usize> = (0..width).filter(|&i| fp.get(i)).collect();
                for _ in 0..self.point_mutations {
                    let i = rng.gen_range(0..width);
                    match set.iter().position(|&b| b == i) {
                        Some(p) => {
                            set.remove(p);
                        }
                        None => set.push(i),
                    }
                }
                Ok(CandidatePayload::Fingerprint(Fingerprint::from_bits(width, set)?))
            }
            CandidatePayload::Attributes { .. } => Err(CoreError::InvalidPayload(
                "scripted proposer cannot vary attribute payloads".into(),
            )),
        }
    }

    fn cross(&self, a: &CandidatePayload, b: &CandidatePayload, rng: &mut StreamRng) -> Result<CandidatePayload> {
        match (a, b) {
            (CandidatePayload::Sequence { text: x }, CandidatePayload::Sequence { text: y }) => {
                let len = x.len().min(y.len());
                let cut = if len > 1 { rng.gen_range(1..len) } else { 0 };
                let child = format!("{}{}", &x.as_str()[..cut], &y.as_str()[cut..]);
                Ok(CandidatePayload::Sequence {
                    text: DnaSequence::new(child)?,
                })
            }
            (CandidatePayload::Fingerprint(x), CandidatePayload::Fingerprint(y)) if x.width() == y.width() => {
                let width = x.width();
                let cut = rng.gen_range(0..=width);
                let bits = (0..width).filter(|&i| if i < cut { x.get(i) } else { y.get(i) });
                Ok(CandidatePayload::Fingerprint(Fingerprint::from_bits(width, bits)?))
            }
            _ => Err(CoreError::InvalidPayload(
                "parents are not compatible for crossover".into(),
            )),
        }
    }
}

impl Proposer for ScriptedProposer {
    fn tag(&self) -> &str {
        if self.crossover {
            "scripted-genetic"
        } else {
            "scripted-hill-climb"
        }
    }

    fn propose_crossover(
        &mut self,
        parents: &[&Candidate],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CandidatePayload>> {
        if parents.is_empty() {
            return Ok(Vec::new());
        }
        (0..n)
            .map(|i| {
                let a = parents[i % parents.len()];
                if !self.crossover || parents.len() < 2 {
                    return self.mutate(&a.payload, rng);
                }
                let b = parents[(i + 1) % parents.len()];
                self.cross(&a.payload, &b.payload, rng)
            })
            .collect()
    }

    fn propose_mutations(
        &mut self,
        best: &[&Candidate],
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<CandidatePayload>> {
        if best.is_empty() {
            return Ok(Vec::new());
        }
        (0..n)
            .map(|i| self.mutate(&best[i % best.len()].payload, rng))
            .collect()
    }

    fn generate_random(&mut self, n: usize, rng: &mut StreamRng) -> Result<Vec<CandidatePayload>> {
        (0..n).map(|_| self.random.generate(rng)).collect()
    }
}
