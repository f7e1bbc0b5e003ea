use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use objevo_core::aggregate::{Aggregator, Normalizer};
use objevo_core::model::{Candidate, CandidateId, Direction, Objective, ObjectiveKind, Origin, PayloadConstraints};
use objevo_core::optimizer::{Evaluator, RandomSpec};
use objevo_core::par::ExecMode;
use objevo_core::rng::{stream, StreamRole};
use objevo_core::scorers::{BindContext, ScorerRegistry};
use serde_json::json;

const MOTIFS: &str = "\
>M1 one
A [ 10 0 0 12 3 ]
C [ 1 9 0 0 3 ]
G [ 0 2 15 0 3 ]
T [ 4 4 0 3 6 ]
>M2 two
A [ 0 0 20 1 1 8 ]
C [ 12 1 0 0 9 2 ]
G [ 3 15 0 0 5 2 ]
T [ 5 4 0 19 5 8 ]
";

fn batch(n: usize) -> Vec<Candidate> {
    let spec = RandomSpec::RandomSequence { length: 200 };
    let mut rng = stream(1, 0, StreamRole::Initial);
    (0..n)
        .map(|i| {
            Candidate::new(
                CandidateId(format!("c{i:010}")),
                spec.generate(&mut rng).unwrap(),
                Origin::default(),
            )
        })
        .collect()
}

fn evaluator(dir: &std::path::Path, mode: ExecMode) -> Evaluator {
    let objectives = vec![
        Objective::new("motifs", ObjectiveKind::CandidateWise, Direction::Maximize).with_binding(
            "motif_enrichment",
            BTreeMap::from([("motif_file".into(), json!("motifs.jaspar"))]),
        ),
        Objective::new("novelty", ObjectiveKind::CandidateWise, Direction::Maximize).with_binding(
            "kmer_novelty",
            BTreeMap::from([("reference_file".into(), json!("reference.txt"))]),
        ),
        Objective::new("stability", ObjectiveKind::CandidateWise, Direction::Minimize)
            .with_binding("stability_hinge", BTreeMap::new()),
    ];
    let agg = Aggregator::default().with_normalizer("motifs", Normalizer::new(0.0, 20.0, true).unwrap());
    Evaluator::bind(
        &objectives,
        &ScorerRegistry::builtin(),
        &BindContext::new(dir),
        &agg,
        PayloadConstraints::default(),
        mode,
    )
    .unwrap()
}

fn bench_evaluate(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("motifs.jaspar"), MOTIFS).unwrap();
    let reference: Vec<String> = batch(200)
        .iter()
        .map(|c| c.payload.as_sequence().unwrap().to_string())
        .collect();
    std::fs::write(dir.path().join("reference.txt"), reference.join("\n")).unwrap();

    let mut group = c.benchmark_group("evaluate_batch");
    for &n in &[77usize, 500] {
        let cands = batch(n);
        for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
            let ev = evaluator(dir.path(), mode);
            group.bench_with_input(BenchmarkId::new(name, n), &cands, |b, cands| {
                b.iter(|| ev.evaluate(cands.clone()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate);
criterion_main!(benches);
