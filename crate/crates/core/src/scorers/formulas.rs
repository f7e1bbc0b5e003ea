//! Closed-form scoring formulas for the sequence-design objectives.

use crate::dna::DnaSequence;
use crate::error::{CoreError, Result};

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Parameters shared by the GC/homopolymer penalty and its hinge variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    pub target_gc: f64,
    pub run_cap: usize,
    pub w_gc: f64,
    pub w_run: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            target_gc: 0.45,
            run_cap: 5,
            w_gc: 1.0,
            w_run: 0.2,
        }
    }
}

/// Length of the longest single-base run.
pub fn longest_run(seq: &DnaSequence) -> usize {
    let bytes = seq.as_bytes();
    let mut best = 0;
    let mut run = 0;
    for (i, b) in bytes.iter().enumerate() {
        run = if i > 0 && bytes[i - 1] == *b { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

pub fn gc_count(seq: &DnaSequence) -> usize {
    seq.as_bytes().iter().filter(|&&b| b == b'G' || b == b'C').count()
}

/// `w_gc·|GC − target| + w_run·max(0, L − run_cap)`; lower is better.
pub fn gc_homopolymer_penalty(seq: &DnaSequence, p: &StabilityParams) -> Result<f64> {
    let n = seq.len();
    if n == 0 {
        return Err(CoreError::InvalidPayload("empty sequence".into()));
    }
    // |count − target·n| / n keeps exact boundaries (e.g. 120/200 vs 0.45)
    let gc_dev = (gc_count(seq) as f64 - p.target_gc * n as f64).abs() / n as f64;
    let excess = longest_run(seq).saturating_sub(p.run_cap) as f64;
    Ok(p.w_gc * gc_dev + p.w_run * excess)
}

/// `max(0, P − margin)` over the GC/homopolymer penalty `P`.
pub fn stability_hinge(seq: &DnaSequence, p: &StabilityParams, margin: f64) -> Result<f64> {
    Ok(relu(gc_homopolymer_penalty(seq, p)? - margin))
}

/// `h − α·ReLU(k − τ) − β·ReLU(n − τ)`: on-target activity with hinge
/// penalties on two off-target activities.
pub fn composite_specificity(h: f64, k: f64, n: f64, tau: f64, alpha: f64, beta: f64) -> f64 {
    h - alpha * relu(k - tau) - beta * relu(n - tau)
}

/// `num / max(ε, denom)`.
pub fn offtarget_ratio(num: f64, denom: f64, epsilon: f64) -> f64 {
    num / denom.max(epsilon)
}

/// `1 / (1 + exp((mw − midpoint) / scale))`.
pub fn mw_sigmoid_penalty(mw: f64, midpoint: f64, scale: f64) -> f64 {
    1.0 / (1.0 + ((mw - midpoint) / scale).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtLeast,
    AtMost,
}

/// 1.0 when `value` satisfies the inclusive comparison, else 0.0.
pub fn threshold_filter(value: f64, threshold: f64, direction: Comparison) -> f64 {
    let pass = match direction {
        Comparison::AtLeast => value >= threshold,
        Comparison::AtMost => value <= threshold,
    };
    if pass {
        1.0
    } else {
        0.0
    }
}

/// Mean Hamming distance over all unordered pairs.
pub fn avg_pairwise_hamming(pop: &[&DnaSequence]) -> Result<f64> {
    if pop.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "pairwise Hamming diversity needs at least 2 sequences".into(),
        ));
    }
    let mut total = 0usize;
    for i in 0..pop.len() {
        for j in i + 1..pop.len() {
            total += pop[i].hamming(pop[j])?;
        }
    }
    let pairs = pop.len() * (pop.len() - 1) / 2;
    Ok(total as f64 / pairs as f64)
}
