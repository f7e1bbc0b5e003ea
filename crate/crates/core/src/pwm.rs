//! Position-weight matrices: JASPAR ingestion, log-odds conversion, exact
//! discretized p-value thresholds and two-strand scanning.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dna::{base_index, complement_index, DnaSequence};
use crate::error::{CoreError, Result};

/// Default per-cell pseudocount (0.8 in total, split over the four bases).
pub const DEFAULT_PSEUDOCOUNT: f64 = 0.2;
/// Default bin width of the score discretization.
pub const DEFAULT_GRANULARITY: f64 = 1e-3;
pub const UNIFORM_BACKGROUND: [f64; 4] = [0.25; 4];

/// Raw count matrix, rows in `A, C, G, T` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifCounts {
    pub motif_id: String,
    pub name: String,
    pub counts: [Vec<f64>; 4],
}

impl MotifCounts {
    pub fn width(&self) -> usize {
        self.counts[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsMatrix {
    pub motif_id: String,
    pub lom: [Vec<f64>; 4],
    pub background: [f64; 4],
    pub pseudocount: f64,
}

impl LogOddsMatrix {
    pub fn width(&self) -> usize {
        self.lom[0].len()
    }

    /// Builds a matrix directly from log-odds rows (used for synthetic motifs).
    pub fn from_rows(motif_id: &str, lom: [Vec<f64>; 4]) -> Result<Self> {
        let w = lom[0].len();
        if w == 0 || lom.iter().any(|r| r.len() != w) {
            return Err(CoreError::InvalidArgument(
                "log-odds rows must share a positive width".into(),
            ));
        }
        Ok(Self {
            motif_id: motif_id.to_string(),
            lom,
            background: UNIFORM_BACKGROUND,
            pseudocount: DEFAULT_PSEUDOCOUNT,
        })
    }

    #[inline]
    pub fn cell(&self, base: usize, col: usize) -> f64 {
        self.lom[base][col]
    }

    pub fn min_score(&self) -> f64 {
        (0..self.width())
            .map(|j| (0..4).map(|b| self.lom[b][j]).fold(f64::INFINITY, f64::min))
            .sum()
    }

    pub fn max_score(&self) -> f64 {
        (0..self.width())
            .map(|j| (0..4).map(|b| self.lom[b][j]).fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strand {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifHit {
    pub motif_id: String,
    pub position: usize,
    pub strand: Strand,
    pub score: f64,
    pub threshold: f64,
}

/// Parses JASPAR count matrices (`>ID NAME` followed by four `X [ n n ... ]` rows).
pub fn parse_jaspar(text: &str) -> Result<Vec<MotifCounts>> {
    struct Pending {
        id: String,
        name: String,
        rows: [Option<Vec<f64>>; 4],
        header_line: usize,
    }

    fn finish(p: Pending, out: &mut Vec<MotifCounts>) -> Result<()> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(4);
        for (b, r) in p.rows.into_iter().enumerate() {
            match r {
                Some(r) => rows.push(r),
                None => {
                    return Err(CoreError::Parse {
                        line: p.header_line,
                        message: format!("motif `{}` is missing the {} row", p.id, crate::dna::BASES[b] as char),
                    })
                }
            }
        }
        let t = rows.pop().unwrap();
        let g = rows.pop().unwrap();
        let c = rows.pop().unwrap();
        let a = rows.pop().unwrap();
        out.push(MotifCounts {
            motif_id: p.id,
            name: p.name,
            counts: [a, c, g, t],
        });
        Ok(())
    }

    let mut out = Vec::new();
    let mut current: Option<Pending> = None;
    let mut width: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = current.take() {
                finish(p, &mut out)?;
            }
            let mut parts = header.split_whitespace();
            let id = parts.next().ok_or_else(|| CoreError::Parse {
                line: line_no,
                message: "empty motif header".into(),
            })?;
            current = Some(Pending {
                id: id.to_string(),
                name: parts.collect::<Vec<_>>().join(" "),
                rows: [None, None, None, None],
                header_line: line_no,
            });
            width = None;
            continue;
        }
        let p = current.as_mut().ok_or_else(|| CoreError::Parse {
            line: line_no,
            message: "count row before any `>` header".into(),
        })?;
        let base = line.as_bytes()[0].to_ascii_uppercase();
        let b = base_index(base).ok_or_else(|| CoreError::Parse {
            line: line_no,
            message: format!("row label {:?} is not one of A, C, G, T", base as char),
        })?;
        if p.rows[b].is_some() {
            return Err(CoreError::Parse {
                line: line_no,
                message: format!("duplicate {} row", base as char),
            });
        }
        let body: String = line[1..]
            .chars()
            .map(|c| if c == '[' || c == ']' || c == ':' { ' ' } else { c })
            .collect();
        let values = body
            .split_whitespace()
            .map(|tok| {
                let v: f64 = tok.parse().map_err(|_| CoreError::Parse {
                    line: line_no,
                    message: format!("bad count {tok:?}"),
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(CoreError::Parse {
                        line: line_no,
                        message: format!("negative or non-finite count {tok}"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(CoreError::Parse {
                line: line_no,
                message: "row has no counts".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(CoreError::Parse {
                    line: line_no,
                    message: format!("ragged row: {} columns, expected {}", values.len(), w),
                })
            }
            _ => {}
        }
        p.rows[b] = Some(values);
    }
    if let Some(p) = current.take() {
        finish(p, &mut out)?;
    }
    Ok(out)
}

pub fn read_jaspar_file(path: impl AsRef<Path>) -> Result<Vec<MotifCounts>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| CoreError::io(path.as_ref(), e))?;
    parse_jaspar(&text)
}

/// `ln((count + pc) / (total + 4·pc)) − ln(background)` per cell.
pub fn log_odds(m: &MotifCounts, background: [f64; 4], pseudocount: f64) -> Result<LogOddsMatrix> {
    if !(pseudocount > 0.0 && pseudocount.is_finite()) {
        return Err(CoreError::InvalidArgument("pseudocount must be > 0".into()));
    }
    if background.iter().any(|&p| p.is_nan() || p <= 0.0) || (background.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(
            "background must be strictly positive and sum to 1".into(),
        ));
    }
    let w = m.width();
    if w == 0 || m.counts.iter().any(|r| r.len() != w) {
        return Err(CoreError::InvalidArgument(format!(
            "motif `{}` has ragged or empty rows",
            m.motif_id
        )));
    }
    let mut lom: [Vec<f64>; 4] = Default::default();
    for row in lom.iter_mut() {
        row.reserve(w);
    }
    for j in 0..w {
        let total: f64 = (0..4).map(|b| m.counts[b][j]).sum::<f64>() + 4.0 * pseudocount;
        for b in 0..4 {
            let freq = (m.counts[b][j] + pseudocount) / total;
            lom[b].push(freq.ln() - background[b].ln());
        }
    }
    Ok(LogOddsMatrix {
        motif_id: m.motif_id.clone(),
        lom,
        background,
        pseudocount,
    })
}

/// Discretized bin of one matrix cell (scores are rounded down).
#[inline]
pub fn cell_bin(score: f64, granularity: f64) -> i64 {
    (score / granularity).floor() as i64
}

/// Exact distribution of the discretized word score under the background.
#[derive(Debug, Clone)]
pub struct ScoreDistribution {
    granularity: f64,
    min_bin: i64,
    /// `mass[k] = P(bin(W) = min_bin + k)`
    mass: Vec<f64>,
    /// `survival[k] = P(bin(W) >= min_bin + k)`
    survival: Vec<f64>,
}

impl ScoreDistribution {
    pub fn new(lom: &LogOddsMatrix, granularity: f64) -> Result<Self> {
        if !(granularity > 0.0 && granularity.is_finite()) {
            return Err(CoreError::InvalidArgument("granularity must be > 0".into()));
        }
        let w = lom.width();
        let mut min_bin = 0i64;
        let mut pdf = vec![1.0f64];
        for j in 0..w {
            let bins: [i64; 4] = std::array::from_fn(|b| cell_bin(lom.cell(b, j), granularity));
            let lo = *bins.iter().min().unwrap();
            let hi = *bins.iter().max().unwrap();
            let span = (hi - lo) as usize;
            let mut next = vec![0.0f64; pdf.len() + span];
            for (b, &bin) in bins.iter().enumerate() {
                let shift = (bin - lo) as usize;
                let p = lom.background[b];
                for (k, &mass) in pdf.iter().enumerate() {
                    if mass != 0.0 {
                        next[k + shift] += mass * p;
                    }
                }
            }
            pdf = next;
            min_bin += lo;
        }
        let mut survival = pdf.clone();
        for k in (0..survival.len().saturating_sub(1)).rev() {
            survival[k] += survival[k + 1];
        }
        Ok(Self {
            granularity,
            min_bin,
            mass: pdf,
            survival,
        })
    }

    pub fn min_bin(&self) -> i64 {
        self.min_bin
    }

    pub fn max_bin(&self) -> i64 {
        self.min_bin + self.survival.len() as i64 - 1
    }

    /// `P(bin(W) >= bin)`.
    pub fn tail(&self, bin: i64) -> f64 {
        if bin <= self.min_bin {
            1.0
        } else if bin > self.max_bin() {
            0.0
        } else {
            self.survival[(bin - self.min_bin) as usize]
        }
    }

    /// Smallest achievable bin whose tail probability is at most `p`, or
    /// `None` when no word reaches that tail.
    ///
    /// Bins between achievable scores are skipped, so the threshold is always
    /// the score of some word and the next achievable bin below it has a tail
    /// above `p`.
    pub fn threshold_bin(&self, p: f64) -> Option<i64> {
        if p >= 1.0 {
            return Some(self.min_bin);
        }
        // survival is non-increasing
        let k = self.survival.partition_point(|&s| s > p);
        (k..self.mass.len())
            .find(|&i| self.mass[i] > 0.0)
            .map(|i| self.min_bin + i as i64)
    }

    pub fn bin_score(&self, bin: i64) -> f64 {
        bin as f64 * self.granularity
    }
}

/// Score threshold for a p-value under the matrix background, with `+∞`
/// returned when no achievable word reaches the requested tail.
pub fn threshold_for_pvalue(lom: &LogOddsMatrix, p: f64, granularity: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(CoreError::InvalidArgument(format!("p-value {p} outside (0, 1]")));
    }
    let dist = ScoreDistribution::new(lom, granularity)?;
    Ok(match dist.threshold_bin(p) {
        Some(bin) => dist.bin_score(bin),
        None => f64::INFINITY,
    })
}

/// Both strands, all windows, every window scoring at least `threshold`.
/// Hits are ordered by position, forward strand first.
pub fn scan(seq: &DnaSequence, lom: &LogOddsMatrix, threshold: f64) -> Vec<MotifHit> {
    let w = lom.width();
    let n = seq.len();
    let mut hits = Vec::new();
    if n < w || threshold == f64::INFINITY {
        return hits;
    }
    let idx: Vec<usize> = seq.indices().collect();
    for i in 0..=n - w {
        let window = &idx[i..i + w];
        let fwd: f64 = window.iter().enumerate().map(|(j, &b)| lom.cell(b, j)).sum();
        let rev: f64 = window
            .iter()
            .rev()
            .enumerate()
            .map(|(j, &b)| lom.cell(complement_index(b), j))
            .sum();
        for (strand, score) in [(Strand::Forward, fwd), (Strand::Reverse, rev)] {
            if score >= threshold {
                hits.push(MotifHit {
                    motif_id: lom.motif_id.clone(),
                    position: i,
                    strand,
                    score,
                    threshold,
                });
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const UNIFORM4: &str = ">M1 ones\nA [ 1 1 1 1 ]\nC [ 1 1 1 1 ]\nG [ 1 1 1 1 ]\nT [ 1 1 1 1 ]\n";

    #[test]
    fn parse_single_record() {
        let m = parse_jaspar(UNIFORM4).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].width(), 4);
        assert_eq!(m[0].motif_id, "M1");
        assert_eq!(m[0].name, "ones");
        assert!(m[0].counts.iter().flatten().all(|&c| c == 1.0));
    }

    #[test]
    fn parse_two_records_in_order() {
        let text = format!("{UNIFORM4}\n>M2 second\nA [ 2 ]\nC [ 0 ]\nG [ 0 ]\nT [ 0 ]\n");
        let m = parse_jaspar(&text).unwrap();
        assert_eq!(m.iter().map(|m| m.motif_id.as_str()).collect::<Vec<_>>(), ["M1", "M2"]);
    }

    #[test]
    fn parse_reordered_rows() {
        let acgt = ">X x\nA [ 3 0 ]\nC [ 1 2 ]\nG [ 0 5 ]\nT [ 0 1 ]\n";
        let tgca = ">X x\nT [ 0 1 ]\nG [ 0 5 ]\nC [ 1 2 ]\nA [ 3 0 ]\n";
        assert_eq!(parse_jaspar(acgt).unwrap(), parse_jaspar(tgca).unwrap());
        // hand-reordered expectation
        assert_eq!(parse_jaspar(tgca).unwrap()[0].counts[2], vec![0.0, 5.0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let ragged = ">X\nA [ 1 2 ]\nC [ 1 ]\nG [ 1 2 ]\nT [ 1 2 ]\n";
        assert!(matches!(parse_jaspar(ragged), Err(CoreError::Parse { line: 3, .. })));
        let missing = ">X\nA [ 1 ]\nC [ 1 ]\nG [ 1 ]\n";
        assert!(matches!(parse_jaspar(missing), Err(CoreError::Parse { line: 1, .. })));
        let negative = ">X\nA [ 1 ]\nC [ -1 ]\nG [ 1 ]\nT [ 1 ]\n";
        assert!(matches!(parse_jaspar(negative), Err(CoreError::Parse { line: 3, .. })));
    }

    #[test]
    fn log_odds_examples() {
        let m = parse_jaspar(UNIFORM4).unwrap().remove(0);
        let l = log_odds(&m, UNIFORM_BACKGROUND, 0.5).unwrap();
        assert!(l.lom.iter().flatten().all(|&v| v.abs() < 1e-15));

        let m = MotifCounts {
            motif_id: "c".into(),
            name: String::new(),
            counts: [vec![3.0], vec![1.0], vec![0.0], vec![0.0]],
        };
        let l = log_odds(&m, UNIFORM_BACKGROUND, 1.0).unwrap();
        approx::assert_abs_diff_eq!(l.lom[0][0], 2f64.ln(), epsilon = 1e-15);

        // pseudocount -> 0+ converges to ln(freq / 0.25)
        let l = log_odds(&m, UNIFORM_BACKGROUND, 1e-12).unwrap();
        approx::assert_abs_diff_eq!(l.lom[0][0], (0.75f64 / 0.25).ln(), epsilon = 1e-9);
        assert!(log_odds(&m, UNIFORM_BACKGROUND, 0.0).is_err());
        assert!(log_odds(&m, [0.5, 0.5, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn degenerate_threshold_is_infinite() {
        let l = LogOddsMatrix::from_rows("z", [vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert_eq!(threshold_for_pvalue(&l, 0.5, 1e-3).unwrap(), f64::INFINITY);
        assert_eq!(threshold_for_pvalue(&l, 1.0, 1e-3).unwrap(), 0.0);
        assert!(threshold_for_pvalue(&l, 0.5, 0.0).is_err());
        assert!(threshold_for_pvalue(&l, 0.0, 1e-3).is_err());
    }

    #[test]
    fn p_one_gives_minimum_word_score() {
        let l =
            LogOddsMatrix::from_rows("m", [vec![1.0, -1.0], vec![0.5, 0.25], vec![-2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let t = threshold_for_pvalue(&l, 1.0, 1e-3).unwrap();
        approx::assert_abs_diff_eq!(t, -3.0, epsilon = 1e-9);
    }

    #[test]
    fn maximal_word_only() {
        // best word has probability 4^-2; asking exactly for it returns the max score
        let l =
            LogOddsMatrix::from_rows("m", [vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = threshold_for_pvalue(&l, 1.0 / 16.0, 1e-3).unwrap();
        approx::assert_abs_diff_eq!(t, 2.0, epsilon = 1e-9);
        assert_eq!(threshold_for_pvalue(&l, 1.0 / 32.0, 1e-3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn scan_single_column() {
        let ln2 = 2f64.ln();
        let favour_a = LogOddsMatrix::from_rows("a", [vec![ln2], vec![-1.0], vec![-1.0], vec![0.0]]).unwrap();
        let seq = DnaSequence::new("AAA").unwrap();
        let hits = scan(&seq, &favour_a, 0.0);
        // reverse strand reads T, which scores 0.0 >= 0
        assert_eq!(hits.len(), 6);
        assert!(hits
            .iter()
            .filter(|h| h.strand == Strand::Reverse)
            .all(|h| h.score == 0.0));
        let strict_t = LogOddsMatrix::from_rows("a", [vec![ln2], vec![-1.0], vec![-1.0], vec![-0.5]]).unwrap();
        let hits = scan(&seq, &strict_t, 0.0);
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|h| h.strand == Strand::Forward));
        assert!(scan(&seq, &favour_a, f64::INFINITY).is_empty());
        assert!(scan(
            &DnaSequence::new("A").unwrap(),
            &LogOddsMatrix::from_rows("w", [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]]).unwrap(),
            -10.0
        )
        .is_empty());
    }

    #[test]
    fn palindromic_motif_strand_symmetric() {
        // column j of base b equals column w-1-j of the complement; dyadic
        // entries keep both strands' sums exact
        let lom = LogOddsMatrix::from_rows(
            "pal",
            [
                vec![1.0, -0.5, 0.25, -1.0],
                vec![0.375, 0.75, -0.625, -0.25],
                vec![-0.25, -0.625, 0.75, 0.375],
                vec![-1.0, 0.25, -0.5, 1.0],
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s: String = (0..30)
                .map(|_| crate::dna::BASES[rng.gen_range(0..4)] as char)
                .collect();
            let seq = DnaSequence::new(s).unwrap();
            let hits = scan(&seq, &lom, 0.0);
            let mut fwd: Vec<(usize, u64)> = hits
                .iter()
                .filter(|h| h.strand == Strand::Forward)
                .map(|h| (h.position, h.score.to_bits()))
                .collect();
            let mut rev: Vec<(usize, u64)> = hits
                .iter()
                .filter(|h| h.strand == Strand::Reverse)
                .map(|h| (h.position, h.score.to_bits()))
                .collect();
            fwd.sort();
            rev.sort();
            // brute-force: same set of (position, score) on both strands
            let pos_f: Vec<usize> = fwd.iter().map(|x| x.0).collect();
            let pos_r: Vec<usize> = rev.iter().map(|x| x.0).collect();
            assert_eq!(pos_f, pos_r);
        }
    }

    fn arb_lom(w: usize) -> impl Strategy<Value = LogOddsMatrix> {
        proptest::collection::vec(-3.0f64..3.0, 4 * w).prop_map(move |v| {
            LogOddsMatrix::from_rows("p", std::array::from_fn(|b| v[b * w..(b + 1) * w].to_vec())).unwrap()
        })
    }

    proptest! {
        #[test]
        fn scan_monotone_in_threshold(lom in arb_lom(4), seq in "[ACGT]{4,40}", t1 in -6.0f64..6.0, dt in 0.0f64..4.0) {
            let seq = DnaSequence::new(seq).unwrap();
            let loose = scan(&seq, &lom, t1);
            let strict = scan(&seq, &lom, t1 + dt);
            for h in &strict {
                prop_assert!(loose.iter().any(|g| g.position == h.position && g.strand == h.strand));
            }
        }

        #[test]
        fn reverse_complement_mirrors_hits(lom in arb_lom(3), seq in "[ACGT]{3,30}") {
            let seq = DnaSequence::new(seq).unwrap();
            let rc = seq.reverse_complement();
            let n = seq.len();
            let w = lom.width();
            let a = scan(&seq, &lom, f64::NEG_INFINITY);
            let b = scan(&rc, &lom, f64::NEG_INFINITY);
            for h in &a {
                let flipped = if h.strand == Strand::Forward { Strand::Reverse } else { Strand::Forward };
                let m = b.iter().find(|g| g.position == n - w - h.position && g.strand == flipped).unwrap();
                prop_assert!((m.score - h.score).abs() < 1e-12);
            }
        }

        #[test]
        fn log_odds_scale_invariant(counts in proptest::collection::vec(0.0f64..20.0, 12), scale in 0.1f64..10.0) {
            let m = MotifCounts { motif_id: "s".into(), name: String::new(), counts: std::array::from_fn(|b| counts[b*3..(b+1)*3].to_vec()) };
            let mut scaled = m.clone();
            scaled.counts.iter_mut().flatten().for_each(|c| *c *= scale);
            let a = log_odds(&m, UNIFORM_BACKGROUND, 0.5).unwrap();
            let b = log_odds(&scaled, UNIFORM_BACKGROUND, 0.5 * scale).unwrap();
            for (x, y) in a.lom.iter().flatten().zip(b.lom.iter().flatten()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
