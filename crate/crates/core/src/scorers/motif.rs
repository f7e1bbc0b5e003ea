//! Motif-enrichment objective built on the PWM engine.

use crate::dna::DnaSequence;
use crate::error::{CoreError, Result};
use crate::pwm::{scan, threshold_for_pvalue, LogOddsMatrix};

/// A log-odds matrix paired with its p-value threshold.
#[derive(Debug, Clone)]
pub struct ThresholdedMotif {
    pub lom: LogOddsMatrix,
    pub threshold: f64,
}

/// Thresholds every motif of a set at the same p-value.
pub fn threshold_motifs(motifs: &[LogOddsMatrix], pvalue: f64, granularity: f64) -> Result<Vec<ThresholdedMotif>> {
    if motifs.is_empty() {
        return Err(CoreError::InvalidArgument("motif set is empty".into()));
    }
    motifs
        .iter()
        .map(|lom| {
            Ok(ThresholdedMotif {
                threshold: threshold_for_pvalue(lom, pvalue, granularity)?,
                lom: lom.clone(),
            })
        })
        .collect()
}

/// `Σ_hits (score − threshold)` over all motifs and both strands.
pub fn enrichment_with_thresholds(seq: &DnaSequence, motifs: &[ThresholdedMotif]) -> f64 {
    motifs
        .iter()
        .map(|m| {
            scan(seq, &m.lom, m.threshold)
                .iter()
                .map(|h| h.score - h.threshold)
                .sum::<f64>()
        })
        .sum()
}

pub fn motif_enrichment(seq: &DnaSequence, motifs: &[LogOddsMatrix], pvalue: f64, granularity: f64) -> Result<f64> {
    Ok(enrichment_with_thresholds(
        seq,
        &threshold_motifs(motifs, pvalue, granularity)?,
    ))
}
