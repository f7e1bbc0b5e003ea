//! Core engine for goal-evolving optimization: the candidate and objective
//! model, score aggregation, DNA scoring functions with exact PWM p-value
//! thresholds, and the generational inner loop.

pub mod aggregate;
pub mod dna;
pub mod error;
pub mod fingerprint;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod pwm;
pub mod rng;
pub mod scorers;

pub use aggregate::{aggregate, AggregationMethod, Aggregator, Normalizer};
pub use dna::DnaSequence;
pub use error::{CoreError, Result};
pub use fingerprint::{tanimoto_similarity, Fingerprint};
pub use model::{
    Candidate, CandidateId, CandidatePayload, Direction, IdAllocator, Objective, ObjectiveKind, ObjectiveStats, Origin,
    PayloadConstraints, Population, ScoreRecord, ScorerBinding,
};
pub use optimizer::{run_inner_loop, Evaluator, InnerLoopConfig, Proposer, ScriptedProposer};
pub use par::ExecMode;
pub use scorers::{BindContext, ScorerRegistry, ScoringFunctionDescriptor};
