use std::collections::{BTreeMap, BTreeSet};

use objevo_agents::analyzer::{
    AnalyzeRequest, Analyzer, AnalyzerConfig, IterationSummary, ScriptedAnalyzer, Termination,
};
use objevo_agents::matcher::{jaccard, tokens, Matcher, ScriptedMatcher};
use objevo_agents::planner::{PlanProposal, PlanRequest, PlanSchedule, Planner, ScheduleEntry, ScriptedPlanner};
use objevo_agents::selector::{invalidate_rebound_scores, ScriptedSelector, SelectRequest, Selector};
use objevo_agents::AgentError;
use objevo_core::model::{
    Candidate, CandidateId, CandidatePayload, Direction, Objective, ObjectiveKind, ObjectiveStats, Origin,
};
use objevo_core::scorers::{DirectionHint, ScoreRange, ScoringFunctionDescriptor};
use objevo_core::{Aggregator, Evaluator, ExecMode, ScorerRegistry};
use proptest::prelude::*;
use serde_json::json;

fn descriptor(id: &str, kind: ObjectiveKind, description: &str) -> ScoringFunctionDescriptor {
    ScoringFunctionDescriptor {
        descriptor_id: id.into(),
        kind,
        param_schema: BTreeMap::new(),
        range: ScoreRange::UNBOUNDED,
        direction_hint: DirectionHint::Maximize,
        description: description.into(),
        default_normalizer: None,
    }
}

fn objective(id: &str, description: &str) -> Objective {
    Objective::new(id, ObjectiveKind::CandidateWise, Direction::Maximize).with_description(description)
}

fn proposal(objectives: Vec<Objective>) -> PlanProposal {
    PlanProposal {
        objectives,
        rationale: String::new(),
        iteration: 1,
    }
}

fn matcher() -> ScriptedMatcher {
    ScriptedMatcher::default()
}

#[test]
fn motif_objective_matches_by_word_overlap() {
    let registry = vec![
        descriptor(
            "motif_enrichment",
            ObjectiveKind::CandidateWise,
            "motif presence for liver factors",
        ),
        descriptor("gc_content", ObjectiveKind::CandidateWise, "gc content for liver"),
    ];
    let obj = objective("liver_motifs", "maximize motif presence for liver factors");
    // {maximize, motif, presence, for, liver, factors} vs {motif, presence, for, liver, factors}:
    // 5 shared of 6 distinct words. The distractor shares {for, liver} of 8.
    let words = tokens(&obj.description);
    assert_eq!(jaccard(&words, &tokens(&registry[0].description)), 5.0 / 6.0);
    assert_eq!(jaccard(&words, &tokens(&registry[1].description)), 2.0 / 8.0);

    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert!(r.unmatched.is_empty());
    assert_eq!(r.matched[0].descriptor_id, "motif_enrichment");
}

#[test]
fn verbatim_descriptor_mention_matches() {
    let registry = ScorerRegistry::builtin().catalog();
    let obj = objective("stab", "penalize instability using stability_hinge");
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert_eq!(r.matched[0].descriptor_id, "stability_hinge");
}

#[test]
fn scorer_hint_wins_over_description() {
    let registry = ScorerRegistry::builtin().catalog();
    let mut obj = objective("stab", "uses gc_homopolymer_penalty in spirit");
    obj.direction = Direction::Minimize;
    obj.scorer_hint = Some("stability_hinge".into());
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert_eq!(r.matched[0].descriptor_id, "stability_hinge");
}

#[test]
fn unrelated_objective_is_unmatched() {
    let registry = ScorerRegistry::builtin().catalog();
    let obj = objective("assay", "luciferase readout in primary hepatocytes after transfection");
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert!(r.matched.is_empty());
    assert_eq!(r.unmatched[0].reason, "no descriptor above threshold");
}

#[test]
fn kind_mismatch_is_reported() {
    let registry = ScorerRegistry::builtin().catalog();
    let obj = objective("div", "diversity via avg_pairwise_hamming");
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert!(r.unmatched[0].reason.contains("kind mismatch"), "{:?}", r.unmatched);
}

#[test]
fn embedded_params_override_defaults() {
    let registry = ScorerRegistry::builtin().catalog();
    let obj = objective("stab", "stability_hinge with margin=0.2 and gc_target=0.5");
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert_eq!(r.matched[0].params.get("margin"), Some(&json!(0.2)));
}

#[test]
fn invalid_embedded_param_is_unmatched() {
    let registry = ScorerRegistry::builtin().catalog();
    let obj = objective("stab", "stability_hinge with margin=-1");
    let r = matcher().match_objectives(&proposal(vec![obj]), &registry).unwrap();
    assert!(r.matched.is_empty());
    assert!(r.unmatched[0].reason.contains("margin"));
}

#[test]
fn ties_break_by_descriptor_id() {
    let registry = vec![
        descriptor("zeta", ObjectiveKind::CandidateWise, "alpha beta"),
        descriptor("eta", ObjectiveKind::CandidateWise, "alpha beta"),
    ];
    let r = matcher()
        .match_objectives(&proposal(vec![objective("o", "alpha beta")]), &registry)
        .unwrap();
    assert_eq!(r.matched[0].descriptor_id, "eta");
}

proptest! {
    #[test]
    fn match_result_partitions_objectives(descs in proptest::collection::vec("[a-z ]{0,30}", 1..6)) {
        let registry = ScorerRegistry::builtin().catalog();
        let objectives: Vec<Objective> = descs.iter().enumerate().map(|(i, d)| objective(&format!("o{i}"), d)).collect();
        let r = matcher().match_objectives(&proposal(objectives.clone()), &registry).unwrap();
        prop_assert_eq!(r.matched.len() + r.unmatched.len(), objectives.len());
        let ids: BTreeSet<String> = r.matched.iter().map(|m| m.objective_id.clone())
            .chain(r.unmatched.iter().map(|u| u.objective_id.clone())).collect();
        prop_assert_eq!(ids.len(), objectives.len());
    }
}

fn plan_request<'a>(iteration: u32, initial: &'a [Objective], current: &'a [Objective]) -> PlanRequest<'a> {
    PlanRequest {
        goal: "g",
        context: "",
        iteration,
        attempt: 0,
        prior_report: None,
        registry: &[],
        initial_objectives: initial,
        current_objectives: current,
        unmatched: &[],
    }
}

#[test]
fn schedule_entry_is_used_verbatim() {
    let objs = vec![objective("a", "x"), objective("b", "y")];
    let mut p = ScriptedPlanner::new(PlanSchedule {
        iterations: vec![ScheduleEntry {
            iteration: 1,
            objectives: Some(objs.clone()),
            ..Default::default()
        }],
    });
    assert_eq!(p.plan(&plan_request(1, &[], &[])).unwrap().objectives, objs);
}

#[test]
fn schedule_adds_hinge_to_prior_objectives() {
    let prior = vec![objective("spec", "specificity")];
    let hinge = Objective::new("stability", ObjectiveKind::CandidateWise, Direction::Minimize).with_weight(1.0);
    let mut p = ScriptedPlanner::new(PlanSchedule {
        iterations: vec![ScheduleEntry {
            iteration: 2,
            add: vec![hinge.clone()],
            ..Default::default()
        }],
    });
    let got = p.plan(&plan_request(2, &prior, &prior)).unwrap();
    assert_eq!(got.objectives, vec![prior[0].clone(), hinge]);
}

#[test]
fn first_iteration_passes_initial_objectives_through() {
    let initial = vec![objective("a", "x")];
    let mut p = ScriptedPlanner::default();
    assert_eq!(p.plan(&plan_request(1, &initial, &[])).unwrap().objectives, initial);
    assert!(matches!(
        p.plan(&plan_request(2, &initial, &initial)),
        Err(AgentError::NoPlan(2))
    ));
}

#[test]
fn schedule_loads_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.toml");
    std::fs::write(
        &path,
        r#"
[[iterations]]
iteration = 2
rationale = "add stability"
[[iterations.add]]
id = "stability"
name = "stability"
description = "stability_hinge"
kind = "candidate_wise"
direction = "minimize"
weight = 1.0
"#,
    )
    .unwrap();
    let s = PlanSchedule::load(&path).unwrap();
    assert_eq!(s.iterations[0].add[0].id, "stability");
}

#[test]
fn proposal_validation_rejects_duplicates_and_overflow() {
    let dup = proposal(vec![objective("a", ""), objective("a", "")]);
    assert!(dup.validate(8).is_err());
    let many = proposal((0..3).map(|i| objective(&format!("o{i}"), "")).collect());
    assert!(many.validate(2).is_err());
    assert!(many.validate(3).is_ok());
}

fn stats(mean: f64) -> ObjectiveStats {
    ObjectiveStats {
        mean,
        std: 0.1,
        min: mean - 0.2,
        max: mean + 0.2,
    }
}

fn summary(iteration: u32, objectives: &[Objective], mean: f64) -> IterationSummary {
    IterationSummary {
        iteration,
        objectives: objectives.to_vec(),
        stats: BTreeMap::from([("spec".to_string(), stats(mean))]),
        best_id: None,
        best_aggregate: None,
        evaluations: 0,
    }
}

fn analyze(cfg: AnalyzerConfig, mean: f64, history: &[IterationSummary]) -> objevo_agents::analyzer::AnalysisReport {
    let objectives = vec![objective("spec", "specificity")];
    let st = BTreeMap::from([("spec".to_string(), stats(mean))]);
    ScriptedAnalyzer { config: cfg }
        .analyze(&AnalyzeRequest {
            goal: "g",
            iteration: history.len() as u32 + 1,
            objectives: &objectives,
            candidates: &[],
            stats: &st,
            history,
        })
        .unwrap()
        .report
}

#[test]
fn first_iteration_has_no_deltas_and_continues() {
    let r = analyze(AnalyzerConfig::default(), 0.4, &[]);
    assert_eq!(r.termination, Termination::Continue);
    assert!(r.objective_stats.values().all(|s| s.delta_vs_previous.is_none()));
}

#[test]
fn delta_is_the_difference_of_means() {
    let objs = vec![objective("spec", "specificity")];
    let r = analyze(AnalyzerConfig::default(), 0.55, &[summary(1, &objs, 0.40)]);
    let d = r.objective_stats["spec"].delta_vs_previous.unwrap();
    assert!((d - 0.15).abs() < 1e-12, "{d}");
    assert_eq!(r.termination, Termination::Continue);
}

#[test]
fn unchanged_population_converges() {
    let objs = vec![objective("spec", "specificity")];
    let r = analyze(AnalyzerConfig::default(), 0.40, &[summary(1, &objs, 0.40)]);
    assert_eq!(r.termination, Termination::Stop);
    assert_eq!(r.termination_reason, "converged");
}

#[test]
fn targets_stop_the_run() {
    let cfg = AnalyzerConfig {
        epsilon: 0.0,
        targets: BTreeMap::from([("spec".to_string(), 0.3)]),
    };
    let r = analyze(cfg, 0.4, &[]);
    assert_eq!(r.termination, Termination::Stop);
    assert_eq!(r.termination_reason, "targets met");
}

#[test]
fn template_narrative_numbers_come_from_stats() {
    let objs = vec![objective("spec", "specificity")];
    let r = analyze(AnalyzerConfig::default(), 0.55, &[summary(1, &objs, 0.40)]);
    let allowed: BTreeSet<String> = r
        .objective_stats
        .values()
        .flat_map(|s| {
            let mut v = vec![s.mean, s.std, s.min, s.max];
            v.extend(s.delta_vs_previous);
            v
        })
        .map(|x| format!("{x:.4}"))
        .collect();
    let re = regex::Regex::new(r"-?\d+(\.\d+)?").unwrap();
    for text in [
        &r.overview,
        &r.performance_analysis,
        &r.issues_and_concerns,
        &r.strategic_recommendations,
    ] {
        assert!(!text.trim().is_empty());
        for m in re.find_iter(text) {
            assert!(
                allowed.contains(m.as_str()),
                "numeral {} not in stats ({text})",
                m.as_str()
            );
        }
    }
}

fn seq_candidate(id: &str, seq: &str, iteration: u32) -> Candidate {
    Candidate::new(
        CandidateId(id.into()),
        CandidatePayload::sequence(seq).unwrap(),
        Origin {
            iteration,
            generation: 0,
            parent_ids: vec![],
            proposer_tag: "test".into(),
        },
    )
}

fn gc_evaluator() -> Evaluator {
    let mut registry = ScorerRegistry::empty();
    registry
        .register(
            ScoringFunctionDescriptor {
                descriptor_id: "gc_fraction".into(),
                kind: ObjectiveKind::CandidateWise,
                param_schema: BTreeMap::new(),
                range: ScoreRange::UNIT,
                direction_hint: DirectionHint::Maximize,
                description: "fraction of g and c bases".into(),
                default_normalizer: Some(objevo_core::Normalizer::unit()),
            },
            |_, _, _| {
                Ok(objevo_core::scorers::BoundScorer::Candidate(std::sync::Arc::new(
                    |c: &CandidatePayload| {
                        let s = c.as_sequence().unwrap().as_str();
                        Ok(s.bytes().filter(|b| *b == b'G' || *b == b'C').count() as f64 / s.len() as f64)
                    },
                )))
            },
        )
        .unwrap();
    let obj = Objective::new("gc", ObjectiveKind::CandidateWise, Direction::Maximize)
        .with_binding("gc_fraction", BTreeMap::new());
    Evaluator::bind(
        &[obj],
        &registry,
        &objevo_core::BindContext::new("."),
        &Aggregator::default(),
        Default::default(),
        ExecMode::Sequential,
    )
    .unwrap()
}

fn select(cands: Vec<Candidate>, n: usize) -> objevo_agents::selector::Selection {
    let ev = gc_evaluator();
    ScriptedSelector
        .select(SelectRequest {
            goal: "g",
            candidates: cands,
            evaluator: &ev,
            n,
        })
        .unwrap()
}

#[test]
fn select_returns_top_n_by_aggregate() {
    let cands = vec![
        seq_candidate("c1", "AAAA", 1),
        seq_candidate("c2", "GGGG", 1),
        seq_candidate("c3", "GCAA", 1),
        seq_candidate("c4", "GGGA", 1),
    ];
    let s = select(cands, 2);
    let ids: Vec<&str> = s.candidates.iter().map(|c| c.id.0.as_str()).collect();
    assert_eq!(ids, ["c2", "c4"]);
    assert_eq!(s.evaluations, 4);
    assert_eq!(s.shortfall, 0);
}

#[test]
fn duplicate_payloads_keep_earliest_id() {
    let cands = vec![
        seq_candidate("c9", "GGGG", 3),
        seq_candidate("c2", "GGGG", 1),
        seq_candidate("c5", "AAAA", 2),
    ];
    let s = select(cands, 5);
    let ids: Vec<&str> = s.candidates.iter().map(|c| c.id.0.as_str()).collect();
    assert_eq!(ids, ["c2", "c5"]);
    assert_eq!(s.shortfall, 3);
}

#[test]
fn early_iteration_winner_survives_selection() {
    let mut cands: Vec<Candidate> = (0..20)
        .map(|i| seq_candidate(&format!("c3{i:02}"), &format!("GA{}", "T".repeat(i + 2)), 3))
        .collect();
    cands.push(seq_candidate("c100", "GCGC", 1));
    let s = select(cands, 3);
    assert_eq!(s.candidates[0].id.0, "c100");
}

#[test]
fn selection_is_sorted_and_unique() {
    let seqs = ["ACGT", "GGCC", "ATAT", "GCGA", "ACGT", "CCCA"];
    let cands = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| seq_candidate(&format!("c{i}"), s, 1))
        .collect();
    let s = select(cands, 10);
    let aggs: Vec<f64> = s.candidates.iter().map(|c| c.aggregate.unwrap()).collect();
    assert!(aggs.windows(2).all(|w| w[0] >= w[1]));
    let keys: BTreeSet<String> = s.candidates.iter().map(|c| c.payload.canonical_key()).collect();
    assert_eq!(keys.len(), s.candidates.len());
}

#[test]
fn rebound_scores_are_dropped_and_retired_kept() {
    let old_spec = objective("spec", "").with_binding("a", BTreeMap::new());
    let retired = objective("old", "").with_binding("b", BTreeMap::new());
    let new_spec = objective("spec", "").with_binding("a", BTreeMap::from([("x".to_string(), json!(1))]));
    let kept = objective("keep", "").with_binding("c", BTreeMap::new());
    let mut c = seq_candidate("c1", "ACGT", 1);
    c.scores = BTreeMap::from([("spec".into(), 1.0), ("old".into(), 2.0), ("keep".into(), 3.0)]);
    c.aggregate = Some(0.5);
    let mut cands = vec![c];
    invalidate_rebound_scores(&mut cands, &[old_spec, retired, kept.clone()], &[new_spec, kept]);
    assert_eq!(
        cands[0].scores,
        BTreeMap::from([("old".into(), 2.0), ("keep".into(), 3.0)])
    );
    assert_eq!(cands[0].aggregate, None);
}
