//! Parent and survivor selection operators.
//!
//! The similarity-based operators are generic over the item type and take a
//! pairwise similarity function, so they work equally on candidates and on
//! plain indices into a similarity matrix.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;

use crate::dna::DnaSequence;
use crate::error::{CoreError, Result};
use crate::fingerprint::tanimoto_similarity;
use crate::model::{rank_order, Candidate, CandidatePayload, Direction, Objective, ObjectiveKind};
use crate::scorers::kmer::KmerVector;

const FALLBACK_K: usize = 3;

/// Similarity in `[0, 1]` between two payloads.
///
/// Fingerprints use Tanimoto; equal-length sequences use one minus the
/// normalized Hamming distance; sequences of different length fall back to
/// 3-mer cosine similarity; attribute payloads are 1 when identical, else 0.
pub fn payload_similarity(a: &CandidatePayload, b: &CandidatePayload) -> f64 {
    match (a, b) {
        (CandidatePayload::Fingerprint(x), CandidatePayload::Fingerprint(y)) => {
            tanimoto_similarity(x, y).unwrap_or(0.0)
        }
        (CandidatePayload::Sequence { text: x }, CandidatePayload::Sequence { text: y }) => sequence_similarity(x, y),
        (CandidatePayload::Attributes { .. }, CandidatePayload::Attributes { .. }) => f64::from(u8::from(a == b)),
        _ => 0.0,
    }
}

fn sequence_similarity(x: &DnaSequence, y: &DnaSequence) -> f64 {
    if let Ok(d) = x.hamming(y) {
        return 1.0 - d as f64 / x.len() as f64;
    }
    match (
        KmerVector::from_sequence(x, FALLBACK_K),
        KmerVector::from_sequence(y, FALLBACK_K),
    ) {
        (Ok(u), Ok(v)) => u.cosine(&v),
        _ => 0.0,
    }
}

pub fn candidate_similarity(a: &Candidate, b: &Candidate) -> f64 {
    payload_similarity(&a.payload, &b.payload)
}

/// Best of `k` distinct candidates drawn uniformly without replacement.
pub fn tournament_select<'a, R: Rng + ?Sized>(pop: &'a [Candidate], k: usize, rng: &mut R) -> Result<&'a Candidate> {
    if pop.is_empty() {
        return Err(CoreError::EmptyPopulation);
    }
    let k = k.clamp(1, pop.len());
    sample(rng, pop.len(), k)
        .into_iter()
        .map(|i| &pop[i])
        .min_by(|a, b| rank_order(a, b))
        .ok_or(CoreError::EmptyPopulation)
}

/// Greedy diversity filter over an already ranked list.
///
/// Returns indices, in rank order, of items whose similarity to every
/// previously accepted item is below `cutoff`.
pub fn diverse_top<T, F>(ranked: &[T], target: usize, cutoff: f64, similarity: F) -> Vec<usize>
where
    F: Fn(&T, &T) -> f64,
{
    let mut kept: Vec<usize> = Vec::new();
    for (i, item) in ranked.iter().enumerate() {
        if kept.len() >= target {
            break;
        }
        if kept.iter().all(|&j| similarity(item, &ranked[j]) < cutoff) {
            kept.push(i);
        }
    }
    kept
}

/// Butina (Taylor-Butina) clustering.
///
/// Each round the remaining item with the most remaining neighbours
/// (similarity at least `cutoff`) becomes a centroid; it and its remaining
/// neighbours form a cluster. Clusters list the centroid first, then members
/// in index order.
pub fn butina_cluster<T, F>(items: &[T], similarity: F, cutoff: f64) -> Vec<Vec<usize>>
where
    F: Fn(&T, &T) -> f64,
{
    let n = items.len();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if similarity(&items[i], &items[j]) >= cutoff {
                neighbours[i].push(j);
                neighbours[j].push(i);
            }
        }
    }
    for list in &mut neighbours {
        list.sort_unstable();
    }
    let mut remaining = vec![true; n];
    let mut left = n;
    let mut clusters = Vec::new();
    while left > 0 {
        let count = |i: usize| neighbours[i].iter().filter(|&&j| remaining[j]).count();
        let centroid = (0..n)
            .filter(|&i| remaining[i])
            .max_by(|&a, &b| count(a).cmp(&count(b)).then(b.cmp(&a)))
            .expect("at least one remaining item");
        let mut cluster = vec![centroid];
        cluster.extend(neighbours[centroid].iter().copied().filter(|&j| remaining[j]));
        for &i in &cluster {
            remaining[i] = false;
        }
        left -= cluster.len();
        clusters.push(cluster);
    }
    clusters
}

/// Top `per_cluster` members of every Butina cluster, best first overall.
pub fn butina_top<F>(cands: &[Candidate], cutoff: f64, per_cluster: usize, similarity: F) -> Vec<Candidate>
where
    F: Fn(&Candidate, &Candidate) -> f64,
{
    let mut out = Vec::new();
    for cluster in butina_cluster(cands, similarity, cutoff) {
        let mut members: Vec<&Candidate> = cluster.iter().map(|&i| &cands[i]).collect();
        members.sort_by(|a, b| rank_order(a, b));
        out.extend(members.into_iter().take(per_cluster).cloned());
    }
    out.sort_by(rank_order);
    out
}

fn passes_filters(c: &Candidate, objectives: &[Objective]) -> bool {
    objectives
        .iter()
        .filter(|o| o.is_filter())
        .all(|o| c.scores.get(&o.id).copied() == Some(1.0))
}

fn oriented(c: &Candidate, o: &Objective) -> Result<f64> {
    let v = *c
        .scores
        .get(&o.id)
        .ok_or_else(|| CoreError::UnscoredObjective(o.id.clone()))?;
    Ok(match o.direction {
        Direction::Minimize => -v,
        _ => v,
    })
}

/// True when `a` is at least as good as `b` everywhere and strictly better once.
/// Inputs are direction-oriented (larger is better).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        strictly |= x > y;
    }
    strictly
}

/// Non-dominated candidates among those passing every filter, in input order.
pub fn pareto_front(cands: &[Candidate], objectives: &[Objective]) -> Result<Vec<Candidate>> {
    let axes: Vec<&Objective> = objectives
        .iter()
        .filter(|o| o.kind == ObjectiveKind::CandidateWise)
        .collect();
    let eligible: Vec<&Candidate> = cands.iter().filter(|c| passes_filters(c, objectives)).collect();
    let points = eligible
        .iter()
        .map(|c| axes.iter().map(|o| oriented(c, o)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(eligible
        .iter()
        .enumerate()
        .filter(|(i, _)| !points.iter().any(|q| dominates(q, &points[*i])))
        .map(|(_, c)| (*c).clone())
        .collect())
}

fn mean_pairwise_hamming(seqs: &[&DnaSequence]) -> Result<f64> {
    let n = seqs.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += seqs[i].hamming(seqs[j])?;
        }
    }
    Ok(total as f64 / (n * (n - 1) / 2) as f64)
}

/// Filter passers plus the most diversity-contributing remainder.
///
/// A candidate's contribution is the average pairwise Hamming distance of the
/// whole pool minus that of the pool without it. Of the candidates failing
/// the filter, the top `ceil(fraction * count)` by contribution are kept
/// (ties by id). Output is in rank order.
pub fn keep_selective_plus_diverse(cands: &[Candidate], filter_id: &str, fraction: f64) -> Result<Vec<Candidate>> {
    let seqs = cands
        .iter()
        .map(|c| {
            c.payload
                .as_sequence()
                .ok_or_else(|| CoreError::InvalidPayload("diversity selection requires sequences".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let whole = mean_pairwise_hamming(&seqs)?;
    let mut passers = Vec::new();
    let mut rest: Vec<(f64, usize)> = Vec::new();
    for (i, c) in cands.iter().enumerate() {
        if c.scores.get(filter_id).copied() == Some(1.0) {
            passers.push(c.clone());
        } else {
            let without: Vec<&DnaSequence> = seqs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| *s)
                .collect();
            rest.push((whole - mean_pairwise_hamming(&without)?, i));
        }
    }
    let keep = (fraction.clamp(0.0, 1.0) * rest.len() as f64).ceil() as usize;
    rest.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| cands[a.1].id.cmp(&cands[b.1].id)));
    let mut seen: BTreeSet<String> = passers.iter().map(|c| c.payload.canonical_key()).collect();
    let mut out = passers;
    for &(_, i) in rest.iter().take(keep) {
        if seen.insert(cands[i].payload.canonical_key()) {
            out.push(cands[i].clone());
        }
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Drops candidates whose payload repeats an earlier one, keeping the smallest id.
pub fn dedupe_payloads(cands: Vec<Candidate>) -> Vec<Candidate> {
    let mut first: BTreeMap<String, Candidate> = BTreeMap::new();
    let mut order = Vec::new();
    for c in cands {
        let key = c.payload.canonical_key();
        match first.get(&key) {
            Some(existing) if existing.id <= c.id => {}
            _ => {
                if !first.contains_key(&key) {
                    order.push(key.clone());
                }
                first.insert(key, c);
            }
        }
    }
    order.into_iter().filter_map(|k| first.remove(&k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CandidateId, Origin};
    use rand::SeedableRng;

    fn cand(id: &str, seq: &str, agg: f64) -> Candidate {
        let mut c = Candidate::new(
            CandidateId::from(id),
            CandidatePayload::sequence(seq).unwrap(),
            Origin::default(),
        );
        c.aggregate = Some(agg);
        c
    }

    #[test]
    fn tournament_single_and_empty() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pop = vec![cand("a", "ACGT", 0.5)];
        assert_eq!(tournament_select(&pop, 3, &mut rng).unwrap().id.0, "a");
        assert_eq!(
            tournament_select(&[], 3, &mut rng).unwrap_err(),
            CoreError::EmptyPopulation
        );
    }

    #[test]
    fn diverse_top_extremes() {
        let items: Vec<usize> = (0..5).collect();
        assert_eq!(diverse_top(&items, 3, 0.4, |_, _| 1.0), vec![0]);
        assert_eq!(diverse_top(&items, 3, 0.4, |_, _| 0.0), vec![0, 1, 2]);
    }

    #[test]
    fn butina_extremes() {
        let items: Vec<usize> = (0..4).collect();
        assert_eq!(
            butina_cluster(&items, |_, _| 0.0, 0.4),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );
        assert_eq!(butina_cluster(&items, |_, _| 1.0, 0.4), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn dedupe_keeps_smallest_id() {
        let out = dedupe_payloads(vec![
            cand("c2", "AAAA", 0.1),
            cand("c1", "AAAA", 0.2),
            cand("c3", "CCCC", 0.3),
        ]);
        let ids: Vec<&str> = out.iter().map(|c| c.id.0.as_str()).collect();
        assert_eq!(ids, vec!["c1", "c3"]);
    }

    #[test]
    fn similarity_rules() {
        let a = CandidatePayload::sequence("AAAA").unwrap();
        let b = CandidatePayload::sequence("AACC").unwrap();
        assert_eq!(payload_similarity(&a, &b), 0.5);
        assert_eq!(payload_similarity(&a, &a), 1.0);
    }
}
