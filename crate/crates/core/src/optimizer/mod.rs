//! The inner loop: a generational evolutionary algorithm.
//!
//! Each generation carries the top elites over, breeds offspring from
//! tournament-selected parent pairs, mutates the current best, scores the new
//! candidates and picks the next population from parents plus offspring with
//! the configured survivor strategy.

mod evaluate;
mod proposer;
pub mod selection;

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

pub use evaluate::{Discarded, Evaluator};
pub use proposer::{Proposer, RandomSpec, ScriptedProposer};

use crate::error::{CoreError, Result};
use crate::model::{rank_order, Candidate, IdAllocator, ObjectiveStats, Origin, Population};
use crate::rng::{stream, StreamRole};
use selection::{
    butina_top, candidate_similarity, dedupe_payloads, diverse_top, keep_selective_plus_diverse, pareto_front,
    tournament_select,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    TopK,
    #[default]
    DiverseTop,
    ButinaTop,
    ParetoThenRank,
    KeepSelectivePlusDiverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub window: usize,
    pub min_improvement: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            window: 10,
            min_improvement: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerLoopConfig {
    pub population_size: usize,
    pub offspring_per_generation: usize,
    pub mutants_of_best: usize,
    pub oracle_budget: usize,
    pub tournament_size: usize,
    pub elitism_fraction: f64,
    pub selection: SelectionStrategy,
    pub similarity_cutoff: f64,
    pub convergence: ConvergenceConfig,
    pub max_generations: usize,
    pub seed: u64,
    /// Members kept per cluster by `butina_top`.
    pub butina_per_cluster: usize,
    /// Filter objective id used by `keep_selective_plus_diverse`.
    pub selectivity_filter: Option<String>,
    /// Fraction of filter-failing candidates kept for diversity.
    pub diverse_fraction: f64,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        Self {
            population_size: 120,
            offspring_per_generation: 70,
            mutants_of_best: 7,
            oracle_budget: 10_000,
            tournament_size: 3,
            elitism_fraction: 0.05,
            selection: SelectionStrategy::DiverseTop,
            similarity_cutoff: 0.4,
            convergence: ConvergenceConfig::default(),
            max_generations: 1_000,
            seed: 0,
            butina_per_cluster: 1,
            selectivity_filter: None,
            diverse_fraction: 0.5,
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(self.elitism_fraction > 0.0 && self.elitism_fraction < 1.0) {
            return fail("elitism_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.similarity_cutoff) {
            return fail("similarity_cutoff must lie in [0, 1]");
        }
        if self.offspring_per_generation + self.mutants_of_best == 0 {
            return fail("offspring_per_generation + mutants_of_best must be positive");
        }
        if self.population_size == 0 || self.tournament_size == 0 {
            return fail("population_size and tournament_size must be positive");
        }
        if self.convergence.window == 0 {
            return fail("convergence window must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.diverse_fraction) {
            return fail("diverse_fraction must lie in [0, 1]");
        }
        if self.selection == SelectionStrategy::KeepSelectivePlusDiverse && self.selectivity_filter.is_none() {
            return fail("keep_selective_plus_diverse needs selectivity_filter");
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elitism_fraction * self.population_size as f64).ceil() as usize).max(1)
    }

    /// Largest possible overshoot of the budget by the final batch.
    pub fn max_overshoot(&self) -> usize {
        self.offspring_per_generation + self.mutants_of_best
    }
}

/// True iff the best aggregate improved by less than `min_improvement` over
/// the last `window` generations.
pub fn converged(history: &[f64], window: usize, min_improvement: f64) -> bool {
    let n = history.len();
    n > window && history[n - 1] - history[n - 1 - window] < min_improvement
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub iteration: u32,
    pub generation: u32,
    pub best_id: String,
    pub best_aggregate: f64,
    pub mean_aggregate: f64,
    pub population_size: usize,
    pub new_candidates: usize,
    pub discarded: usize,
    pub evaluations_used: usize,
    pub stats: std::collections::BTreeMap<String, ObjectiveStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    MaxGenerations,
    Converged,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct InnerLoopOutcome {
    pub final_population: Population,
    pub history: Vec<GenerationRecord>,
    pub evaluations_used: usize,
    pub stop: StopReason,
    pub discarded: Vec<Discarded>,
}

/// Called after every generation (including generation 0); `Break` stops the loop.
pub type GenerationObserver<'a> = &'a mut dyn FnMut(&GenerationRecord) -> ControlFlow<()>;

/// Per-call context the loop cannot infer from its configuration.
pub struct LoopContext<'a> {
    pub iteration: u32,
    pub ids: &'a mut IdAllocator,
    pub observer: Option<GenerationObserver<'a>>,
}

fn record(
    iteration: u32,
    generation: u32,
    pop: &[Candidate],
    evaluator: &Evaluator,
    new_candidates: usize,
    discarded: usize,
    used: usize,
) -> Result<GenerationRecord> {
    let best = pop
        .iter()
        .min_by(|a, b| rank_order(a, b))
        .ok_or(CoreError::EmptyPopulation)?;
    let mean = pop.iter().map(Candidate::rank_value).sum::<f64>() / pop.len() as f64;
    Ok(GenerationRecord {
        iteration,
        generation,
        best_id: best.id.0.clone(),
        best_aggregate: best.rank_value(),
        mean_aggregate: mean,
        population_size: pop.len(),
        new_candidates,
        discarded,
        evaluations_used: used,
        stats: evaluator.stats(pop)?,
    })
}

fn scope(iteration: u32, generation: u32) -> u64 {
    (u64::from(iteration) << 32) | u64::from(generation)
}

/// Chooses the next population from `pool`, always keeping `elites`.
pub fn select_survivors(
    pool: Vec<Candidate>,
    elites: &[Candidate],
    cfg: &InnerLoopConfig,
    evaluator: &Evaluator,
) -> Result<Vec<Candidate>> {
    let n = cfg.population_size;
    let mut ranked = pool;
    ranked.sort_by(rank_order);
    let mut chosen: Vec<Candidate> = match cfg.selection {
        SelectionStrategy::TopK => ranked.into_iter().take(n).collect(),
        SelectionStrategy::DiverseTop => {
            let keep = diverse_top(&ranked, n, cfg.similarity_cutoff, candidate_similarity);
            keep.into_iter().map(|i| ranked[i].clone()).collect()
        }
        SelectionStrategy::ButinaTop => {
            let mut out = butina_top(
                &ranked,
                cfg.similarity_cutoff,
                cfg.butina_per_cluster,
                candidate_similarity,
            );
            out.truncate(n);
            out
        }
        SelectionStrategy::ParetoThenRank => {
            let front = pareto_front(&ranked, evaluator.objectives())?;
            let mut front_ids: BTreeSet<String> = front.iter().map(|c| c.id.0.clone()).collect();
            let mut out: Vec<Candidate> = front;
            out.sort_by(rank_order);
            out.extend(ranked.into_iter().filter(|c| front_ids.insert(c.id.0.clone())));
            out.truncate(n);
            out
        }
        SelectionStrategy::KeepSelectivePlusDiverse => {
            let filter = cfg.selectivity_filter.as_deref().unwrap_or_default();
            let mut out = keep_selective_plus_diverse(&ranked, filter, cfg.diverse_fraction)?;
            out.sort_by(|a, b| {
                let pa = a.scores.get(filter).copied() == Some(1.0);
                let pb = b.scores.get(filter).copied() == Some(1.0);
                pb.cmp(&pa).then_with(|| rank_order(a, b))
            });
            out.truncate(n);
            out
        }
    };
    let present: BTreeSet<String> = chosen.iter().map(|c| c.id.0.clone()).collect();
    let missing: Vec<Candidate> = elites.iter().filter(|e| !present.contains(&e.id.0)).cloned().collect();
    if !missing.is_empty() {
        let elite_ids: BTreeSet<&str> = elites.iter().map(|e| e.id.0.as_str()).collect();
        let room = n.saturating_sub(missing.len());
        let mut kept = Vec::with_capacity(n);
        let mut others = 0;
        for c in chosen {
            if elite_ids.contains(c.id.0.as_str()) {
                kept.push(c);
            } else if others < room {
                others += 1;
                kept.push(c);
            }
        }
        kept.extend(missing);
        chosen = kept;
    }
    chosen.sort_by(rank_order);
    Ok(chosen)
}

/// Runs generations until the budget, the generation cap or convergence stops it.
pub fn run_inner_loop(
    initial: Population,
    proposer: &mut dyn Proposer,
    cfg: &InnerLoopConfig,
    evaluator: &Evaluator,
    mut ctx: LoopContext<'_>,
) -> Result<InnerLoopOutcome> {
    cfg.validate()?;
    let iteration = ctx.iteration;
    let (mut pop, mut discarded, mut used) = evaluator.evaluate(initial.candidates);
    if pop.is_empty() {
        return Err(CoreError::EmptyPopulation);
    }
    pop.sort_by(rank_order);
    let mut history = vec![record(iteration, 0, &pop, evaluator, 0, discarded.len(), used)?];
    let mut bests = vec![history[0].best_aggregate];
    let mut stop = StopReason::MaxGenerations;
    let notify = |ctx: &mut LoopContext<'_>, rec: &GenerationRecord| match ctx.observer.as_mut() {
        Some(f) => f(rec),
        None => ControlFlow::Continue(()),
    };
    if notify(&mut ctx, &history[0]).is_break() {
        stop = StopReason::Interrupted;
    }

    let mut generation = 0u32;
    while stop != StopReason::Interrupted {
        if used >= cfg.oracle_budget {
            stop = StopReason::Budget;
            break;
        }
        if converged(&bests, cfg.convergence.window, cfg.convergence.min_improvement) {
            stop = StopReason::Converged;
            break;
        }
        if generation as usize >= cfg.max_generations {
            stop = StopReason::MaxGenerations;
            break;
        }
        generation += 1;
        let s = scope(iteration, generation);
        let mut t_rng = stream(cfg.seed, s, StreamRole::Tournament);
        let mut p_rng = stream(cfg.seed, s, StreamRole::Proposer);
        let elites: Vec<Candidate> = pop.iter().take(cfg.elite_count()).cloned().collect();

        let mut proposals: Vec<(crate::model::CandidatePayload, Vec<crate::model::CandidateId>)> = Vec::new();
        let events = cfg.offspring_per_generation.div_ceil(2);
        for e in 0..events {
            let n = cfg.offspring_per_generation / events + usize::from(e < cfg.offspring_per_generation % events);
            let a = tournament_select(&pop, cfg.tournament_size, &mut t_rng)?;
            let b = tournament_select(&pop, cfg.tournament_size, &mut t_rng)?;
            let parents = vec![a.id.clone(), b.id.clone()];
            match proposer.propose_crossover(&[a, b], n, &mut p_rng) {
                Ok(batch) => proposals.extend(batch.into_iter().map(|p| (p, parents.clone()))),
                Err(e) => log::warn!("crossover batch dropped: {e}"),
            }
        }
        if cfg.mutants_of_best > 0 {
            let best: Vec<&Candidate> = pop.iter().take(cfg.mutants_of_best).collect();
            match proposer.propose_mutations(&best, cfg.mutants_of_best, &mut p_rng) {
                Ok(batch) => {
                    for (i, p) in batch.into_iter().enumerate() {
                        let parent = best[i % best.len()].id.clone();
                        proposals.push((p, vec![parent]));
                    }
                }
                Err(e) => log::warn!("mutation batch dropped: {e}"),
            }
        }

        let mut known: BTreeSet<String> = pop.iter().map(|c| c.payload.canonical_key()).collect();
        let mut fresh = Vec::new();
        let mut invalid = 0usize;
        for (payload, parent_ids) in proposals {
            if let Err(e) = payload.validate(&evaluator.constraints) {
                log::debug!("dropping invalid proposal: {e}");
                invalid += 1;
                continue;
            }
            if !known.insert(payload.canonical_key()) {
                continue;
            }
            let origin = Origin {
                iteration,
                generation,
                parent_ids,
                proposer_tag: proposer.tag().to_string(),
            };
            fresh.push(Candidate::new(ctx.ids.next_id(), payload, origin));
        }
        let (scored, bad, n_used) = evaluator.evaluate(fresh);
        used += n_used;
        let new_count = scored.len();
        let gen_discarded = bad.len() + invalid;
        discarded.extend(bad);

        let mut pool = pop.clone();
        pool.extend(scored);
        let pool = dedupe_payloads(pool);
        pop = select_survivors(pool, &elites, cfg, evaluator)?;
        let rec = record(iteration, generation, &pop, evaluator, new_count, gen_discarded, used)?;
        bests.push(rec.best_aggregate);
        let flow = notify(&mut ctx, &rec);
        history.push(rec);
        if flow.is_break() {
            stop = StopReason::Interrupted;
        }
    }

    let mut final_population = Population::new(iteration, pop);
    final_population.stats = evaluator.stats(&final_population.candidates)?;
    Ok(InnerLoopOutcome {
        final_population,
        history,
        evaluations_used: used,
        stop,
        discarded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_examples() {
        assert!(converged(&[1.0, 1.0, 1.0], 2, 0.01));
        assert!(!converged(&[1.0, 1.1, 1.2], 2, 0.1));
        assert!(converged(&[1.0, 1.0, 1.005], 2, 0.01));
        assert!(!converged(&[1.0, 1.0], 2, 0.01));
    }

    #[test]
    fn default_config_valid() {
        let c = InnerLoopConfig::default();
        c.validate().unwrap();
        assert_eq!(c.elite_count(), 6);
        assert_eq!(c.max_overshoot(), 77);
    }
}
