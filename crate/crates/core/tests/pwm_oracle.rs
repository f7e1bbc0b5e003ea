use objevo_core::dna::{complement_index, DnaSequence, BASES};
use objevo_core::pwm::{
    cell_bin, log_odds, parse_jaspar, scan, threshold_for_pvalue, LogOddsMatrix, MotifCounts, Strand,
    DEFAULT_GRANULARITY, DEFAULT_PSEUDOCOUNT, UNIFORM_BACKGROUND,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_counts(rng: &mut ChaCha8Rng, id: usize, w: usize) -> MotifCounts {
    // skewed columns so thresholds are non-trivial
    let counts = std::array::from_fn(|_| (0..w).map(|_| f64::from(rng.gen_range(0..40u32))).collect());
    MotifCounts {
        motif_id: format!("M{id:02}"),
        name: format!("motif{id}"),
        counts,
    }
}

/// Discretized scores of every word, by exhaustive enumeration.
fn all_word_bins(lom: &LogOddsMatrix, g: f64) -> Vec<i64> {
    let w = lom.width();
    let bins: Vec<[i64; 4]> = (0..w)
        .map(|j| std::array::from_fn(|b| cell_bin(lom.cell(b, j), g)))
        .collect();
    (0..4usize.pow(w as u32))
        .map(|mut code| {
            let mut total = 0;
            for col in bins.iter().rev() {
                total += col[code % 4];
                code /= 4;
            }
            total
        })
        .collect()
}

/// Smallest achievable bin b with #{words >= b} <= p * 4^w, or None.
fn brute_threshold_bin(word_bins: &[i64], p: f64) -> Option<i64> {
    let mut sorted = word_bins.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let allowed = p * sorted.len() as f64;
    let mut answer = None;
    let mut i = 0;
    while i < sorted.len() {
        let b = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == b {
            j += 1;
        }
        if j as f64 <= allowed {
            answer = Some(b);
        } else {
            break;
        }
        i = j;
    }
    answer
}

#[test]
fn dp_threshold_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pvalues = [1e-4, 1e-3, 1e-2, 0.05, 0.3];
    let mut checked = 0;
    for id in 0..25 {
        let w = 4 + id % 5;
        let counts = random_counts(&mut rng, id, w);
        let lom = log_odds(&counts, UNIFORM_BACKGROUND, DEFAULT_PSEUDOCOUNT).unwrap();
        let bins = all_word_bins(&lom, DEFAULT_GRANULARITY);
        for &p in &pvalues {
            let t = threshold_for_pvalue(&lom, p, DEFAULT_GRANULARITY).unwrap();
            let expected = brute_threshold_bin(&bins, p);
            match expected {
                None => assert_eq!(t, f64::INFINITY, "motif {id} w={w} p={p}"),
                Some(b) => {
                    assert_eq!((t / DEFAULT_GRANULARITY).round() as i64, b, "motif {id} w={w} p={p}");
                    let n = bins.len() as f64;
                    let tail = bins.iter().filter(|&&x| x >= b).count() as f64 / n;
                    assert!(tail <= p);
                    let below = bins.iter().filter(|&&x| x < b).max();
                    if let Some(&lower) = below {
                        let tail_lower = bins.iter().filter(|&&x| x >= lower).count() as f64 / n;
                        assert!(tail_lower > p);
                    }
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 125);
}

#[test]
fn p_one_is_minimum_word_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for id in 0..5 {
        let counts = random_counts(&mut rng, id, 5);
        let lom = log_odds(&counts, UNIFORM_BACKGROUND, DEFAULT_PSEUDOCOUNT).unwrap();
        let bins = all_word_bins(&lom, DEFAULT_GRANULARITY);
        let t = threshold_for_pvalue(&lom, 1.0, DEFAULT_GRANULARITY).unwrap();
        assert_eq!((t / DEFAULT_GRANULARITY).round() as i64, *bins.iter().min().unwrap());
    }
}

fn brute_scan(seq: &str, lom: &LogOddsMatrix, threshold: f64) -> Vec<(usize, Strand, f64)> {
    let idx: Vec<usize> = seq
        .bytes()
        .map(|b| BASES.iter().position(|&x| x == b).unwrap())
        .collect();
    let w = lom.width();
    let mut out = Vec::new();
    if idx.len() < w {
        return out;
    }
    for i in 0..=idx.len() - w {
        let f: f64 = (0..w).map(|j| lom.cell(idx[i + j], j)).sum();
        if f >= threshold {
            out.push((i, Strand::Forward, f));
        }
        let r: f64 = (0..w).map(|j| lom.cell(complement_index(idx[i + w - 1 - j]), j)).sum();
        if r >= threshold {
            out.push((i, Strand::Reverse, r));
        }
    }
    out
}

#[test]
fn scan_matches_window_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for id in 0..10 {
        let counts = random_counts(&mut rng, id, 6);
        let lom = log_odds(&counts, UNIFORM_BACKGROUND, DEFAULT_PSEUDOCOUNT).unwrap();
        let t = threshold_for_pvalue(&lom, 0.05, DEFAULT_GRANULARITY).unwrap();
        let s: String = (0..200).map(|_| BASES[rng.gen_range(0..4)] as char).collect();
        let hits = scan(&DnaSequence::new(s.clone()).unwrap(), &lom, t);
        let expected = brute_scan(&s, &lom, t);
        assert_eq!(hits.len(), expected.len());
        for (h, (pos, strand, score)) in hits.iter().zip(expected) {
            assert_eq!((h.position, h.strand), (pos, strand));
            assert!((h.score - score).abs() < 1e-9);
            assert!(h.score >= h.threshold);
        }
    }
}

#[test]
fn reordered_rows_parse_identically() {
    let acgt = ">MA0001.1 TEST\nA [ 3 0 1 ]\nC [ 1 2 0 ]\nG [ 0 1 4 ]\nT [ 0 1 0 ]\n";
    let tgca = ">MA0001.1 TEST\nT [ 0 1 0 ]\nG [ 0 1 4 ]\nC [ 1 2 0 ]\nA [ 3 0 1 ]\n";
    let a = parse_jaspar(acgt).unwrap();
    let b = parse_jaspar(tgca).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].counts[0], vec![3.0, 0.0, 1.0]);
}
