//! Per-objective normalization and scalar aggregation of score vectors.
//!
//! Raw scores keep the natural range of their scoring function. Before they
//! are combined, each non-filter objective is mapped into `[0, 1]` with
//! higher-is-better by a declared [`Normalizer`]; minimize-direction
//! objectives are inverted (`s -> 1 - s`) after the linear map. Filters are
//! already `{0, 1}` and multiply the result directly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{Direction, Objective, ObjectiveKind};

/// Slack allowed outside `[0, 1]` for unclamped normalizers.
pub const NORMALIZER_TOLERANCE: f64 = 1e-9;

/// Linear map of a declared raw range `[lo, hi]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_clamp")]
    pub clamp: bool,
}

fn default_clamp() -> bool {
    true
}

impl Normalizer {
    pub fn new(lo: f64, hi: f64, clamp: bool) -> Result<Self> {
        let n = Self { lo, hi, clamp };
        n.check()?;
        Ok(n)
    }

    pub fn unit() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            clamp: true,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(CoreError::Config(format!(
                "normalizer range [{}, {}] must be finite with lo < hi",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// Maps a raw score to `[0, 1]`, higher is better.
    pub fn normalize(&self, id: &str, raw: f64, direction: Direction) -> Result<f64> {
        self.check()?;
        let mut s = (raw - self.lo) / (self.hi - self.lo);
        if self.clamp {
            s = s.clamp(0.0, 1.0);
        } else if !(-NORMALIZER_TOLERANCE..=1.0 + NORMALIZER_TOLERANCE).contains(&s) || s.is_nan() {
            return Err(CoreError::NormalizerContract {
                id: id.to_string(),
                value: s,
            });
        } else {
            s = s.clamp(0.0, 1.0);
        }
        Ok(match direction {
            Direction::Minimize => 1.0 - s,
            _ => s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    #[default]
    SimpleProduct,
    WeightedSum,
}

/// Aggregation method plus the declared normalizer of every objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregator {
    #[serde(default)]
    pub method: AggregationMethod,
    #[serde(default)]
    pub normalizers: BTreeMap<String, Normalizer>,
}

impl Aggregator {
    pub fn new(method: AggregationMethod) -> Self {
        Self {
            method,
            normalizers: BTreeMap::new(),
        }
    }

    pub fn with_normalizer(mut self, id: &str, n: Normalizer) -> Self {
        self.normalizers.insert(id.to_string(), n);
        self
    }

    pub fn aggregate(&self, scores: &BTreeMap<String, f64>, objectives: &[Objective]) -> Result<f64> {
        aggregate(scores, objectives, self.method, &self.normalizers)
    }
}

/// Combines a candidate's scores into one value in `[0, 1]`.
///
/// `simple_product` is `∏ filters × ∏ normalized^w`; `weighted_sum` is
/// `∏ filters × Σ w·normalized / Σ w`. Weights default to 1. Population-wise
/// objectives describe a whole population and do not enter a candidate's
/// aggregate.
pub fn aggregate(
    scores: &BTreeMap<String, f64>,
    objectives: &[Objective],
    method: AggregationMethod,
    normalizers: &BTreeMap<String, Normalizer>,
) -> Result<f64> {
    let mut filters = 1.0;
    let mut product = 1.0;
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for obj in objectives {
        if obj.kind == ObjectiveKind::PopulationWise {
            continue;
        }
        let raw = *scores
            .get(&obj.id)
            .ok_or_else(|| CoreError::UnscoredObjective(obj.id.clone()))?;
        if obj.is_filter() {
            if raw != 0.0 && raw != 1.0 {
                return Err(CoreError::NormalizerContract {
                    id: obj.id.clone(),
                    value: raw,
                });
            }
            filters *= raw;
            continue;
        }
        let norm = normalizers
            .get(&obj.id)
            .ok_or_else(|| CoreError::MissingNormalizer(obj.id.clone()))?
            .normalize(&obj.id, raw, obj.direction)?;
        let w = obj.effective_weight();
        match method {
            AggregationMethod::SimpleProduct => product *= norm.powf(w),
            AggregationMethod::WeightedSum => {
                weighted += w * norm;
                weight_total += w;
            }
        }
    }
    let body = match method {
        AggregationMethod::SimpleProduct => product,
        AggregationMethod::WeightedSum if weight_total > 0.0 => weighted / weight_total,
        AggregationMethod::WeightedSum => 1.0,
    };
    Ok(filters * body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Objective;
    use proptest::prelude::*;

    fn max(id: &str) -> Objective {
        Objective::new(id, ObjectiveKind::CandidateWise, Direction::Maximize)
    }

    fn filter(id: &str) -> Objective {
        Objective::new(id, ObjectiveKind::Filter, Direction::NotApplicable)
    }

    fn unit_norms(ids: &[&str]) -> BTreeMap<String, Normalizer> {
        ids.iter().map(|i| (i.to_string(), Normalizer::unit())).collect()
    }

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identity_case() {
        let objs = [max("a"), max("b")];
        let v = aggregate(
            &scores(&[("a", 1.0), ("b", 1.0)]),
            &objs,
            AggregationMethod::SimpleProduct,
            &unit_norms(&["a", "b"]),
        )
        .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn filter_annihilates() {
        let objs = [max("a"), filter("f")];
        for method in [AggregationMethod::SimpleProduct, AggregationMethod::WeightedSum] {
            let v = aggregate(&scores(&[("a", 0.9), ("f", 0.0)]), &objs, method, &unit_norms(&["a"])).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn product_of_two() {
        let objs = [max("a"), max("b")];
        let v = aggregate(
            &scores(&[("a", 0.5), ("b", 0.8)]),
            &objs,
            AggregationMethod::SimpleProduct,
            &unit_norms(&["a", "b"]),
        )
        .unwrap();
        approx::assert_abs_diff_eq!(v, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn errors() {
        let objs = [max("a")];
        assert_eq!(
            aggregate(
                &scores(&[]),
                &objs,
                AggregationMethod::SimpleProduct,
                &unit_norms(&["a"])
            ),
            Err(CoreError::UnscoredObjective("a".into()))
        );
        let strict: BTreeMap<_, _> = [("a".to_string(), Normalizer::new(0.0, 1.0, false).unwrap())].into();
        assert!(matches!(
            aggregate(&scores(&[("a", 1.5)]), &objs, AggregationMethod::SimpleProduct, &strict),
            Err(CoreError::NormalizerContract { .. })
        ));
        // inside the tolerance band is accepted and clamped
        let v = aggregate(
            &scores(&[("a", 1.0 + 1e-12)]),
            &objs,
            AggregationMethod::SimpleProduct,
            &strict,
        )
        .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn minimize_is_inverted() {
        let n = Normalizer::new(0.0, 10.0, true).unwrap();
        assert_eq!(n.normalize("x", 0.0, Direction::Maximize).unwrap(), 0.0);
        assert_eq!(n.normalize("x", 10.0, Direction::Maximize).unwrap(), 1.0);
        assert_eq!(n.normalize("x", 2.5, Direction::Minimize).unwrap(), 0.75);
        assert_eq!(n.normalize("x", 50.0, Direction::Minimize).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn product_is_permutation_invariant(vals in proptest::collection::vec(0.0f64..=1.0, 1..6), rot in 0usize..6) {
            let ids: Vec<String> = (0..vals.len()).map(|i| format!("o{i}")).collect();
            let objs: Vec<Objective> = ids.iter().map(|i| max(i)).collect();
            let mut rotated = objs.clone();
            rotated.rotate_left(rot % objs.len());
            let sc: BTreeMap<String, f64> = ids.iter().cloned().zip(vals.iter().copied()).collect();
            let norms: BTreeMap<String, Normalizer> = ids.iter().map(|i| (i.clone(), Normalizer::unit())).collect();
            let a = aggregate(&sc, &objs, AggregationMethod::SimpleProduct, &norms).unwrap();
            let b = aggregate(&sc, &rotated, AggregationMethod::SimpleProduct, &norms).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn weighted_sum_single_objective(v in -5.0f64..5.0, pass in proptest::bool::ANY, w in 0.1f64..3.0) {
            let objs = [max("a").with_weight(w), filter("f")];
            let n = Normalizer::new(-5.0, 5.0, true).unwrap();
            let norms: BTreeMap<String, Normalizer> = [("a".to_string(), n)].into();
            let f = if pass { 1.0 } else { 0.0 };
            let got = aggregate(&scores(&[("a", v), ("f", f)]), &objs, AggregationMethod::WeightedSum, &norms).unwrap();
            let expect = n.normalize("a", v, Direction::Maximize).unwrap() * f;
            prop_assert!((got - expect).abs() <= 1e-12);
        }

        #[test]
        fn normalizer_round_trip(lo in -100.0f64..100.0, span in 0.001f64..100.0) {
            let n = Normalizer::new(lo, lo + span, false).unwrap();
            prop_assert_eq!(n.normalize("x", lo, Direction::Maximize).unwrap(), 0.0);
            prop_assert!((n.normalize("x", lo + span, Direction::Maximize).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
