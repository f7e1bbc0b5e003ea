#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;

use objevo_core::model::{Candidate, CandidateId, CandidatePayload, Direction, Objective, ObjectiveKind, Origin};
use objevo_core::optimizer::selection::{
    butina_cluster, butina_top, diverse_top, keep_selective_plus_diverse, pareto_front, tournament_select,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
fn tournament_inclusion_probability() {
    let pop: Vec<Candidate> = (0..10).map(|i| cand(&format!("c{i}"), "ACGT", i as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 100_000;
    let wins = (0..draws)
        .filter(|_| tournament_select(&pop, 3, &mut rng).unwrap().id.0 == "c9")
        .count();
    // 1 - C(9,3)/C(10,3)
    let expected = 1.0 - 84.0 / 120.0;
    let freq = wins as f64 / draws as f64;
    assert!((freq - expected).abs() < 0.01, "{freq}");
}

#[test]
fn tournament_ties_prefer_smaller_id() {
    let pop = vec![cand("c2", "ACGT", 1.0), cand("c1", "ACGT", 1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        assert_eq!(tournament_select(&pop, 2, &mut rng).unwrap().id.0, "c1");
    }
}

fn greedy_reference(n: usize, target: usize, cutoff: f64, sim: &[Vec<f64>]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for i in 0..n {
        if out.len() == target {
            break;
        }
        let mut ok = true;
        for &j in &out {
            if sim[i][j] >= cutoff {
                ok = false;
            }
        }
        if ok {
            out.push(i);
        }
    }
    out
}

#[test]
fn diverse_top_matches_greedy_reference() {
    let sim = vec![
        vec![1.0, 0.5, 0.1, 0.39, 0.2, 0.9],
        vec![0.5, 1.0, 0.3, 0.1, 0.4, 0.0],
        vec![0.1, 0.3, 1.0, 0.45, 0.1, 0.2],
        vec![0.39, 0.1, 0.45, 1.0, 0.3, 0.1],
        vec![0.2, 0.4, 0.1, 0.3, 1.0, 0.35],
        vec![0.9, 0.0, 0.2, 0.1, 0.35, 1.0],
    ];
    let items: Vec<usize> = (0..6).collect();
    for target in 1..=6 {
        let got = diverse_top(&items, target, 0.4, |&a, &b| sim[a][b]);
        assert_eq!(got, greedy_reference(6, target, 0.4, &sim));
    }
    // 1 too close to 0, 3 too close to 2, 5 too close to 0
    assert_eq!(diverse_top(&items, 6, 0.4, |&a, &b| sim[a][b]), vec![0, 2, 4]);
}

#[test]
fn butina_hand_trace() {
    // cutoff 0.4; neighbour lists: 0:{1,2} 1:{0,2} 2:{0,1,3} 3:{2} 4:{}
    let sim = [
        vec![1.0, 0.6, 0.5, 0.1, 0.0],
        vec![0.6, 1.0, 0.4, 0.2, 0.1],
        vec![0.5, 0.4, 1.0, 0.7, 0.3],
        vec![0.1, 0.2, 0.7, 1.0, 0.39],
        vec![0.0, 0.1, 0.3, 0.39, 1.0],
    ];
    let items: Vec<usize> = (0..5).collect();
    let clusters = butina_cluster(&items, |&a, &b| sim[a][b], 0.4);
    // round 1: item 2 has three neighbours -> {2,0,1,3}; round 2: {4}
    assert_eq!(clusters, vec![vec![2, 0, 1, 3], vec![4]]);
}

#[test]
fn butina_top_best_of_each_cluster() {
    let cands = vec![
        cand("a", "AAAAAAAAAA", 0.9),
        cand("b", "AAAAAAAAAC", 0.5),
        cand("c", "AAAAAAAACC", 0.7),
        cand("d", "TTTTTTTTTT", 0.2),
        cand("e", "TTTTTTTTTG", 0.6),
    ];
    let top = butina_top(&cands, 0.7, 1, objevo_core::optimizer::selection::candidate_similarity);
    let ids: Vec<&str> = top.iter().map(|c| c.id.0.as_str()).collect();
    assert_eq!(ids, vec!["a", "e"]);
}

fn multi(id: usize, scores: &[f64], objectives: &[Objective]) -> Candidate {
    let mut c = cand(&format!("c{id:03}"), "ACGT", 0.0);
    for (o, v) in objectives.iter().zip(scores) {
        c.scores.insert(o.id.clone(), *v);
    }
    c
}

fn dominated_by(a: &Candidate, b: &Candidate, objectives: &[Objective]) -> bool {
    let mut strictly = false;
    for o in objectives.iter().filter(|o| o.kind == ObjectiveKind::CandidateWise) {
        let sign = if o.direction == Direction::Minimize { -1.0 } else { 1.0 };
        let (x, y) = (sign * a.scores[&o.id], sign * b.scores[&o.id]);
        if y < x {
            return false;
        }
        if y > x {
            strictly = true;
        }
    }
    strictly
}

#[test]
fn pareto_front_matches_brute_force() {
    let objectives = vec![
        Objective::new("f1", ObjectiveKind::CandidateWise, Direction::Maximize),
        Objective::new("f2", ObjectiveKind::CandidateWise, Direction::Minimize),
        Objective::new("f3", ObjectiveKind::CandidateWise, Direction::Maximize),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _round in 0..20 {
        let pop: Vec<Candidate> = (0..50)
            .map(|i| {
                let s: Vec<f64> = (0..3).map(|_| f64::from(rng.gen_range(0..6u32))).collect();
                multi(i, &s, &objectives)
            })
            .collect();
        let front = pareto_front(&pop, &objectives).unwrap();
        let got: BTreeSet<String> = front.iter().map(|c| c.id.0.clone()).collect();
        let expected: BTreeSet<String> = pop
            .iter()
            .filter(|a| !pop.iter().any(|b| dominated_by(a, b, &objectives)))
            .map(|c| c.id.0.clone())
            .collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn pareto_excludes_filter_failures() {
    let objectives = vec![
        Objective::new("f1", ObjectiveKind::CandidateWise, Direction::Maximize),
        Objective::new("ok", ObjectiveKind::Filter, Direction::NotApplicable),
    ];
    let pop = vec![multi(0, &[10.0, 0.0], &objectives), multi(1, &[1.0, 1.0], &objectives)];
    let front = pareto_front(&pop, &objectives).unwrap();
    assert_eq!(front.len(), 1);
    assert_eq!(front[0].id.0, "c001");
}

fn aphd(seqs: &[&str]) -> f64 {
    let n = seqs.len();
    if n < 2 {
        return 0.0;
    }
    let mut tot = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            tot += seqs[i].bytes().zip(seqs[j].bytes()).filter(|(a, b)| a != b).count() as f64;
            pairs += 1.0;
        }
    }
    tot / pairs
}

#[test]
fn keep_selective_plus_diverse_matches_brute_force() {
    let seqs = ["AAAAAA", "AAAAAC", "CCCCCC", "GGGTTT"];
    let cands: Vec<Candidate> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| cand(&format!("c{i}"), s, 0.1 * i as f64))
        .collect();
    let whole = aphd(&seqs);
    let mut contrib: Vec<(f64, usize)> = (0..4)
        .map(|i| {
            let rest: Vec<&str> = seqs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| *s)
                .collect();
            (whole - aphd(&rest), i)
        })
        .collect();
    contrib.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let expected: BTreeSet<String> = contrib.iter().take(2).map(|(_, i)| format!("c{i}")).collect();
    let got: BTreeSet<String> = keep_selective_plus_diverse(&cands, "sel", 0.5)
        .unwrap()
        .iter()
        .map(|c| c.id.0.clone())
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn keep_selective_plus_diverse_edge_cases() {
    let mut all_pass: Vec<Candidate> = (0..4).map(|i| cand(&format!("c{i}"), "ACGT", 0.0)).collect();
    for c in &mut all_pass {
        c.scores.insert("sel".into(), 1.0);
    }
    assert_eq!(keep_selective_plus_diverse(&all_pass, "sel", 0.5).unwrap().len(), 4);
    let identical: Vec<Candidate> = (0..4).map(|i| cand(&format!("c{i}"), "ACGT", 0.0)).collect();
    let kept = keep_selective_plus_diverse(&identical, "sel", 0.5).unwrap();
    // identical payloads deduplicate to one survivor
    assert!(!kept.is_empty() && kept.len() <= 2);
    assert_eq!(kept[0].id.0, "c0");
}

proptest! {
    #[test]
    fn diverse_top_survivors_pairwise_dissimilar(seqs in proptest::collection::vec("[ACGT]{12}", 1..30), cutoff in 0.0f64..1.0) {
        let cands: Vec<Candidate> = seqs.iter().enumerate().map(|(i, s)| cand(&format!("c{i:03}"), s, 1.0 / (1.0 + i as f64))).collect();
        let sim = objevo_core::optimizer::selection::candidate_similarity;
        let keep = diverse_top(&cands, 100, cutoff, sim);
        for (x, &i) in keep.iter().enumerate() {
            for &j in &keep[x + 1..] {
                prop_assert!(sim(&cands[i], &cands[j]) < cutoff);
            }
        }
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn butina_is_partition(n in 1usize..25, seed in any::<u64>(), cutoff in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.gen();
                sim[i][j] = v;
                sim[j][i] = v;
            }
        }
        let items: Vec<usize> = (0..n).collect();
        let clusters = butina_cluster(&items, |&a, &b| sim[a][b], cutoff);
        let mut seen: Vec<usize> = clusters.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, items.clone());
        prop_assert_eq!(clusters.clone(), butina_cluster(&items, |&a, &b| sim[a][b], cutoff));
    }

    #[test]
    fn pareto_front_sound_and_complete(points in proptest::collection::vec(proptest::collection::vec(0u8..5, 2), 1..40)) {
        let objectives = vec![
            Objective::new("a", ObjectiveKind::CandidateWise, Direction::Maximize),
            Objective::new("b", ObjectiveKind::CandidateWise, Direction::Maximize),
        ];
        let pop: Vec<Candidate> = points.iter().enumerate().map(|(i, p)| multi(i, &[f64::from(p[0]), f64::from(p[1])], &objectives)).collect();
        let front = pareto_front(&pop, &objectives).unwrap();
        let ids: BTreeSet<&str> = front.iter().map(|c| c.id.0.as_str()).collect();
        for c in &pop {
            let dominated = pop.iter().any(|o| dominated_by(c, o, &objectives));
            prop_assert_eq!(ids.contains(c.id.0.as_str()), !dominated);
            if dominated {
                prop_assert!(front.iter().any(|f| dominated_by(c, f, &objectives)));
            }
        }
    }
}
