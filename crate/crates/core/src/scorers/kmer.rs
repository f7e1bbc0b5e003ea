//! k-mer composition vectors, novelty against a reference archive, and the
//! linear k-mer surrogate predictor.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dna::DnaSequence;
use crate::error::{CoreError, Result};

/// Largest k accepted for dense composition vectors (4^10 entries).
pub const MAX_DENSE_K: usize = 10;

/// Rolling base-4 codes of every overlapping k-mer.
pub fn kmer_codes(seq: &DnaSequence, k: usize) -> impl Iterator<Item = usize> + '_ {
    let mask = if 2 * k >= usize::BITS as usize {
        usize::MAX
    } else {
        (1usize << (2 * k)) - 1
    };
    let mut code = 0usize;
    seq.indices().enumerate().filter_map(move |(i, b)| {
        code = ((code << 2) | b) & mask;
        (i + 1 >= k).then_some(code)
    })
}

pub fn encode_kmer(kmer: &str) -> Option<usize> {
    kmer.bytes()
        .try_fold(0usize, |acc, b| crate::dna::base_index(b).map(|i| (acc << 2) | i))
}

/// Dense composition vector after counts → L1 → L2 normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmerVector {
    pub k: usize,
    pub vec: Vec<f64>,
}

impl KmerVector {
    /// Zero vector when the sequence is shorter than `k`.
    pub fn from_sequence(seq: &DnaSequence, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_DENSE_K {
            return Err(CoreError::InvalidArgument(format!("k must be in 1..={MAX_DENSE_K}")));
        }
        let mut vec = vec![0.0; 1 << (2 * k)];
        for code in kmer_codes(seq, k) {
            vec[code] += 1.0;
        }
        let l1: f64 = vec.iter().sum();
        if l1 > 0.0 {
            vec.iter_mut().for_each(|v| *v /= l1);
            let l2 = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
            vec.iter_mut().for_each(|v| *v /= l2);
        }
        Ok(Self { k, vec })
    }

    pub fn norm(&self) -> f64 {
        self.vec.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        if self.vec == other.vec && self.norm() > 0.0 {
            return 1.0;
        }
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.vec.iter().zip(&other.vec).map(|(a, b)| a * b).sum();
        dot / denom
    }
}

/// `1 − max_r cos(v_seq, v_r)`; an empty reference yields 1.0.
pub fn kmer_novelty(seq: &DnaSequence, reference: &[KmerVector], k: usize) -> Result<f64> {
    if seq.len() < k {
        return Err(CoreError::SequenceShorterThanK { len: seq.len(), k });
    }
    if let Some(bad) = reference.iter().find(|r| r.k != k) {
        return Err(CoreError::InvalidArgument(format!(
            "reference vector built with k={} but k={} requested",
            bad.k, k
        )));
    }
    let v = KmerVector::from_sequence(seq, k)?;
    let best = reference.iter().map(|r| v.cosine(r)).fold(0.0f64, f64::max);
    Ok((1.0 - best).clamp(0.0, 1.0))
}

/// Reads sequences one per line; blank lines and FASTA headers are skipped.
pub fn read_sequences(path: impl AsRef<Path>) -> Result<Vec<DnaSequence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_sequences(&text)
}

pub fn parse_sequences(text: &str) -> Result<Vec<DnaSequence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('>') && !l.starts_with('#')
        })
        .map(|(i, l)| {
            DnaSequence::new(l.trim().to_ascii_uppercase()).map_err(|e| CoreError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Linear k-mer model: `bias + Σ weight(kmer)` over overlapping k-mers.
#[derive(Debug, Clone, PartialEq)]
pub struct KmerWeightTable {
    pub k: usize,
    pub bias: f64,
    weights: HashMap<usize, f64>,
}

impl KmerWeightTable {
    pub fn new(k: usize, bias: f64) -> Result<Self> {
        if k == 0 || 2 * k >= usize::BITS as usize {
            return Err(CoreError::InvalidArgument(format!("unsupported k {k}")));
        }
        Ok(Self {
            k,
            bias,
            weights: HashMap::new(),
        })
    }

    pub fn insert(&mut self, kmer: &str, weight: f64) -> Result<()> {
        if kmer.len() != self.k {
            return Err(CoreError::InvalidArgument(format!(
                "k-mer {kmer:?} is not {} long",
                self.k
            )));
        }
        let code = encode_kmer(kmer).ok_or_else(|| CoreError::InvalidArgument(format!("bad k-mer {kmer:?}")))?;
        self.weights.insert(code, weight);
        Ok(())
    }

    /// Text format: `k=<int> bias=<real>` header, then `<kmer> <weight>` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(CoreError::Parse {
            line: 1,
            message: "missing `k=<int> bias=<real>` header".into(),
        })?;
        let mut k = None;
        let mut bias = None;
        for tok in header.split_whitespace() {
            let bad = || CoreError::Parse {
                line: hline,
                message: format!("bad header token {tok:?}"),
            };
            match tok.split_once('=') {
                Some(("k", v)) => k = Some(v.parse::<usize>().map_err(|_| bad())?),
                Some(("bias", v)) => bias = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let k = k.ok_or(CoreError::Parse {
            line: hline,
            message: "header lacks k=".into(),
        })?;
        let mut table = Self::new(k, bias.unwrap_or(0.0)).map_err(|e| CoreError::Parse {
            line: hline,
            message: e.to_string(),
        })?;
        for (line, l) in lines {
            let mut parts = l.split_whitespace();
            let (Some(kmer), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(CoreError::Parse {
                    line,
                    message: "expected `<kmer> <weight>`".into(),
                });
            };
            let w: f64 = w.parse().map_err(|_| CoreError::Parse {
                line,
                message: format!("bad weight {w:?}"),
            })?;
            table
                .insert(&kmer.to_ascii_uppercase(), w)
                .map_err(|e| CoreError::Parse {
                    line,
                    message: e.to_string(),
                })?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn score(&self, seq: &DnaSequence) -> Result<f64> {
        kmer_surrogate_score(seq, self)
    }
}

/// Surrogate activity of a sequence under a k-mer weight table.
pub fn kmer_surrogate_score(seq: &DnaSequence, table: &KmerWeightTable) -> Result<f64> {
    if seq.len() < table.k {
        return Err(CoreError::SequenceShorterThanK {
            len: seq.len(),
            k: table.k,
        });
    }
    Ok(table.bias
        + kmer_codes(seq, table.k)
            .map(|c| table.weights.get(&c).copied().unwrap_or(0.0))
            .sum::<f64>())
}
