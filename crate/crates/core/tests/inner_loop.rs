use std::collections::BTreeMap;
use std::sync::Arc;

use objevo_core::aggregate::{Aggregator, Normalizer};
use objevo_core::model::{
    Candidate, CandidatePayload, Direction, IdAllocator, Objective, ObjectiveKind, Origin, PayloadConstraints,
    Population,
};
use objevo_core::optimizer::{
    run_inner_loop, Evaluator, InnerLoopConfig, LoopContext, Proposer, RandomSpec, ScriptedProposer, SelectionStrategy,
    StopReason,
};
use objevo_core::par::ExecMode;
use objevo_core::rng::{stream, StreamRng, StreamRole};
use objevo_core::scorers::{BindContext, BoundScorer, ScorerRegistry};
use objevo_core::{CoreError, Result};
use proptest::prelude::*;

const LEN: usize = 20;

fn count_a_evaluator(mode: ExecMode) -> Evaluator {
    let obj = Objective::new("a_count", ObjectiveKind::CandidateWise, Direction::Maximize);
    let scorer: BoundScorer = BoundScorer::Candidate(Arc::new(|p: &CandidatePayload| -> Result<f64> {
        Ok(p.as_sequence()
            .unwrap()
            .as_bytes()
            .iter()
            .filter(|&&b| b == b'A')
            .count() as f64)
    }));
    Evaluator::from_parts(
        &[obj],
        BTreeMap::from([("a_count".to_string(), scorer)]),
        Aggregator::default().with_normalizer("a_count", Normalizer::new(0.0, LEN as f64, true).unwrap()),
        PayloadConstraints {
            sequence_length: Some(LEN),
            fingerprint_width: None,
        },
        mode,
    )
    .unwrap()
}

fn initial(n: usize, seed: u64, ids: &mut IdAllocator) -> Population {
    let spec = RandomSpec::RandomSequence { length: LEN };
    let mut rng = stream(seed, 0, StreamRole::Initial);
    let cands = (0..n)
        .map(|_| {
            // start away from the optimum: no A at all
            let p = spec.generate(&mut rng).unwrap();
            let text = p.as_sequence().unwrap().as_str().replace('A', "C");
            Candidate::new(
                ids.next_id(),
                CandidatePayload::sequence(&text).unwrap(),
                Origin::default(),
            )
        })
        .collect();
    Population::new(1, cands)
}

fn small_cfg() -> InnerLoopConfig {
    InnerLoopConfig {
        population_size: 20,
        offspring_per_generation: 14,
        mutants_of_best: 4,
        oracle_budget: 5_000,
        selection: SelectionStrategy::TopK,
        max_generations: 40,
        seed: 17,
        ..InnerLoopConfig::default()
    }
}

fn run(
    cfg: &InnerLoopConfig,
    proposer: &mut dyn Proposer,
    evaluator: &Evaluator,
) -> objevo_core::optimizer::InnerLoopOutcome {
    let mut ids = IdAllocator::default();
    let pop = initial(20, cfg.seed, &mut ids);
    run_inner_loop(
        pop,
        proposer,
        cfg,
        evaluator,
        LoopContext {
            iteration: 1,
            ids: &mut ids,
            observer: None,
        },
    )
    .unwrap()
}

#[test]
fn hill_climb_reaches_all_a() {
    let ev = count_a_evaluator(ExecMode::Parallel);
    let cfg = InnerLoopConfig {
        offspring_per_generation: 70,
        mutants_of_best: 7,
        ..small_cfg()
    };
    let mut p = ScriptedProposer::hill_climb(RandomSpec::RandomSequence { length: LEN });
    let out = run(&cfg, &mut p, &ev);
    let bests: Vec<f64> = out.history.iter().map(|r| r.best_aggregate).collect();
    assert!(bests.windows(2).all(|w| w[1] >= w[0]), "{bests:?}");
    let hit = bests.iter().position(|&b| b == 1.0).expect("all-A optimum reached");
    assert!(hit <= 40, "reached at generation {hit}");
    let best = out.final_population.best().unwrap();
    assert_eq!(best.payload.as_sequence().unwrap().as_str(), "A".repeat(LEN));

    let again = run(
        &cfg,
        &mut ScriptedProposer::hill_climb(RandomSpec::RandomSequence { length: LEN }),
        &ev,
    );
    assert_eq!(
        serde_json::to_string(&out.history).unwrap(),
        serde_json::to_string(&again.history).unwrap()
    );
}

struct CopyBest;

impl Proposer for CopyBest {
    fn tag(&self) -> &str {
        "copy"
    }
    fn propose_crossover(
        &mut self,
        parents: &[&Candidate],
        n: usize,
        _: &mut StreamRng,
    ) -> Result<Vec<CandidatePayload>> {
        Ok(vec![parents[0].payload.clone(); n])
    }
    fn propose_mutations(&mut self, best: &[&Candidate], n: usize, _: &mut StreamRng) -> Result<Vec<CandidatePayload>> {
        Ok(vec![best[0].payload.clone(); n])
    }
    fn generate_random(&mut self, _: usize, _: &mut StreamRng) -> Result<Vec<CandidatePayload>> {
        Ok(Vec::new())
    }
}

#[test]
fn stagnant_proposer_converges_after_window() {
    let ev = count_a_evaluator(ExecMode::Sequential);
    let mut cfg = small_cfg();
    cfg.convergence.window = 3;
    let out = run(&cfg, &mut CopyBest, &ev);
    assert_eq!(out.stop, StopReason::Converged);
    assert_eq!(out.history.len(), 4);
    let b0 = out.history[0].best_aggregate;
    assert!(out.history.iter().all(|r| r.best_aggregate == b0));
    assert!(out.history[1..].iter().all(|r| r.new_candidates == 0));
}

#[test]
fn budget_equal_to_initial_cost_runs_no_generations() {
    let ev = count_a_evaluator(ExecMode::Sequential);
    let mut cfg = small_cfg();
    cfg.oracle_budget = 20;
    let out = run(
        &cfg,
        &mut ScriptedProposer::hill_climb(RandomSpec::RandomSequence { length: LEN }),
        &ev,
    );
    assert_eq!(out.stop, StopReason::Budget);
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.evaluations_used, 20);
    assert!(out.final_population.candidates.iter().all(|c| c.aggregate.is_some()));
}

#[test]
fn parallel_and_sequential_agree() {
    let cfg = InnerLoopConfig {
        selection: SelectionStrategy::DiverseTop,
        ..small_cfg()
    };
    let spec = RandomSpec::RandomSequence { length: LEN };
    let a = run(
        &cfg,
        &mut ScriptedProposer::genetic(spec.clone()),
        &count_a_evaluator(ExecMode::Parallel),
    );
    let b = run(
        &cfg,
        &mut ScriptedProposer::genetic(spec),
        &count_a_evaluator(ExecMode::Sequential),
    );
    assert_eq!(
        serde_json::to_string(&a.history).unwrap(),
        serde_json::to_string(&b.history).unwrap()
    );
    assert_eq!(a.final_population, b.final_population);
}

#[test]
fn failing_candidates_are_discarded() {
    let obj = Objective::new("picky", ObjectiveKind::CandidateWise, Direction::Maximize);
    let scorer = BoundScorer::Candidate(Arc::new(|p: &CandidatePayload| -> Result<f64> {
        let s = p.as_sequence().unwrap().as_str();
        if s.starts_with('G') {
            Err(CoreError::InvalidPayload("starts with G".into()))
        } else {
            Ok(s.bytes().filter(|&b| b == b'A').count() as f64)
        }
    }));
    let ev = Evaluator::from_parts(
        &[obj],
        BTreeMap::from([("picky".to_string(), scorer)]),
        Aggregator::default().with_normalizer("picky", Normalizer::new(0.0, LEN as f64, true).unwrap()),
        PayloadConstraints::default(),
        ExecMode::Parallel,
    )
    .unwrap();
    let out = run(
        &small_cfg(),
        &mut ScriptedProposer::genetic(RandomSpec::RandomSequence { length: LEN }),
        &ev,
    );
    assert!(!out.discarded.is_empty());
    assert!(out.final_population.candidates.iter().all(|c| !c
        .payload
        .as_sequence()
        .unwrap()
        .as_str()
        .starts_with('G')));
}

#[test]
fn registry_bound_surrogate_drives_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("count_a.txt"), "k=1 bias=0\nA 1\n").unwrap();
    let obj = Objective::new("surrogate", ObjectiveKind::CandidateWise, Direction::Maximize).with_binding(
        "kmer_surrogate_score",
        BTreeMap::from([("weights_file".to_string(), serde_json::json!("count_a.txt"))]),
    );
    let ev = Evaluator::bind(
        &[obj],
        &ScorerRegistry::builtin(),
        &BindContext::new(dir.path()),
        &Aggregator::default().with_normalizer("surrogate", Normalizer::new(0.0, LEN as f64, true).unwrap()),
        PayloadConstraints::default(),
        ExecMode::Parallel,
    )
    .unwrap();
    let out = run(
        &small_cfg(),
        &mut ScriptedProposer::hill_climb(RandomSpec::RandomSequence { length: LEN }),
        &ev,
    );
    assert!(out.history.last().unwrap().best_aggregate > out.history[0].best_aggregate);
}

#[test]
fn unbound_objective_rejected() {
    let obj = Objective::new("x", ObjectiveKind::CandidateWise, Direction::Maximize);
    let err = Evaluator::bind(
        &[obj],
        &ScorerRegistry::builtin(),
        &BindContext::default(),
        &Aggregator::default(),
        PayloadConstraints::default(),
        ExecMode::Sequential,
    );
    assert!(err.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_and_elitism_hold(
        budget in 20usize..400,
        offspring in 1usize..12,
        mutants in 0usize..4,
        seed in any::<u64>(),
        diverse in any::<bool>(),
    ) {
        let cfg = InnerLoopConfig {
            population_size: 20,
            offspring_per_generation: offspring,
            mutants_of_best: mutants,
            oracle_budget: budget,
            selection: if diverse { SelectionStrategy::DiverseTop } else { SelectionStrategy::TopK },
            max_generations: 30,
            seed,
            ..InnerLoopConfig::default()
        };
        let ev = count_a_evaluator(ExecMode::Parallel);
        let out = run(&cfg, &mut ScriptedProposer::genetic(RandomSpec::RandomSequence { length: LEN }), &ev);
        prop_assert!(out.evaluations_used <= cfg.oracle_budget + cfg.max_overshoot());
        for w in out.history.windows(2) {
            prop_assert!(w[1].best_aggregate >= w[0].best_aggregate);
        }
    }
}
