//! Significance testing of partition saliency, explanation alignment, and
//! random-partition calibration.

pub mod tables;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::counterfactual::CFPair;
use crate::error::{Error, Result};
use crate::gateway::{predict, ModelGateway};
use crate::metrics::exact_match;
use crate::partition::{random_partition_with, skill_partition, SkillStep, TokenPartition};
use crate::saliency::{compute_saliency, Method, SaliencyConfig, SaliencyMap};
use crate::types::{RCInstance, Scope};

pub const DEFAULT_ALPHA: f64 = 0.05;

mod signed_inf {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    #[serde(with = "signed_inf")]
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant: bool,
    pub mean_positive: f64,
    pub mean_negative: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Welch's one-tailed test of "positive mean exceeds negative mean".
///
/// A single-value sample contributes no variance term, which reduces the
/// test to comparing that value with the other sample's mean. When both
/// variance terms vanish the statistic is infinite (or zero for equal means)
/// and the degrees of freedom fall back to `n+ + n- - 2`.
pub fn t_test_one_tailed(positive: &[f64], negative: &[f64], alpha: f64) -> Result<SignificanceResult> {
    check_alpha(alpha)?;
    if positive.is_empty() || negative.is_empty() || positive.len() + negative.len() < 3 {
        return Err(Error::InvalidInput("samples need at least three values in total, one per side".into()));
    }
    if positive.iter().chain(negative).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("samples contain non-finite values".into()));
    }
    let (n1, n2) = (positive.len() as f64, negative.len() as f64);
    let (m1, v1) = mean_var(positive);
    let (m2, v2) = mean_var(negative);
    let (a, b) = (v1 / n1, v2 / n2);
    let se2 = a + b;
    let (t, df, p) = if se2 == 0.0 {
        let df = n1 + n2 - 2.0;
        if m1 == m2 {
            (0.0, df, 0.5)
        } else if m1 > m2 {
            (f64::INFINITY, df, 0.0)
        } else {
            (f64::NEG_INFINITY, df, 1.0)
        }
    } else {
        let t = (m1 - m2) / se2.sqrt();
        let term = |v: f64, n: f64| if n > 1.0 { v * v / (n - 1.0) } else { 0.0 };
        let df = se2 * se2 / (term(a, n1) + term(b, n2));
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Internal(e.to_string()))?;
        (t, df, dist.sf(t))
    };
    Ok(SignificanceResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant: p < alpha && t > 0.0,
        mean_positive: m1,
        mean_negative: m2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub instance_id: String,
    pub cf_both_correct: bool,
    pub significance: SignificanceResult,
    pub aligned: bool,
}

/// Values of `scores` at the two sides of `partition`.
pub fn partition_values(scores: &[f64], partition: &TokenPartition) -> Result<(Vec<f64>, Vec<f64>)> {
    let pick = |idx: &std::collections::BTreeSet<usize>| {
        idx.iter()
            .map(|&i| {
                scores.get(i).copied().ok_or_else(|| {
                    Error::instance(&partition.instance_id, format!("partition index {i} beyond {} scores", scores.len()))
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    Ok((pick(&partition.positive)?, pick(&partition.negative)?))
}

/// Combine a correctness verdict with the partition test on `scores`.
pub fn alignment_record(
    instance_id: &str,
    cf_both_correct: bool,
    scores: &[f64],
    partition: &TokenPartition,
    alpha: f64,
) -> Result<AlignmentRecord> {
    let (pos, neg) = partition_values(scores, partition)?;
    let significance = t_test_one_tailed(&pos, &neg, alpha)?;
    Ok(AlignmentRecord {
        instance_id: instance_id.to_string(),
        cf_both_correct,
        aligned: cf_both_correct && significance.significant,
        significance,
    })
}

/// Whether the model answers both members of the pair exactly.
pub fn both_correct(gateway: &dyn ModelGateway, pair: &CFPair) -> Result<bool> {
    let o = predict(gateway, &pair.original)?.predicted_span.text;
    if !exact_match(&o, &pair.original.gold_texts())? {
        return Ok(false);
    }
    let c = predict(gateway, &pair.perturbed)?.predicted_span.text;
    exact_match(&c, &pair.perturbed.gold_texts())
}

/// Explanation alignment of one counterfactual pair.
pub fn explanation_alignment(
    pair: &CFPair,
    saliency: &SaliencyMap,
    partition: &TokenPartition,
    gateway: &dyn ModelGateway,
    alpha: f64,
) -> Result<AlignmentRecord> {
    let id = &pair.original.id;
    if &saliency.instance_id != id || &partition.instance_id != id {
        return Err(Error::instance(id, "saliency, partition and pair refer to different instances"));
    }
    let scores = saliency.scope_scores(partition.scope)?;
    if scores.len() != pair.original.scope_len(partition.scope) {
        return Err(Error::instance(id, "saliency length does not match the partition scope"));
    }
    let correct = both_correct(gateway, pair)?;
    alignment_record(id, correct, scores, partition, alpha)
}

pub fn alignment_score(records: &[AlignmentRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no alignment records".into()));
    }
    Ok(records.iter().filter(|r| r.aligned).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub dataset: String,
    pub model_id: String,
    pub reasoning_step: SkillStep,
    pub method: Method,
    pub alpha: f64,
    pub records: Vec<AlignmentRecord>,
    pub alignment_score: f64,
}

impl AlignmentReport {
    pub fn new(
        dataset: &str,
        model_id: &str,
        reasoning_step: SkillStep,
        method: Method,
        alpha: f64,
        mut records: Vec<AlignmentRecord>,
    ) -> Result<Self> {
        records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        let alignment_score = alignment_score(&records)?;
        Ok(Self {
            dataset: dataset.to_string(),
            model_id: model_id.to_string(),
            reasoning_step,
            method,
            alpha,
            records,
            alignment_score,
        })
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model_id: String,
    pub method: Method,
    pub alpha: f64,
    pub seed: u64,
    pub n_instances: usize,
    pub n_partitions: usize,
    pub n_draws: usize,
    pub n_significant: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Scope and side sizes for an instance's random partitions: those of its
/// skill partition when one exists, otherwise a quarter and a half of the
/// context.
pub fn matched_sizes(instance: &RCInstance) -> Result<(Scope, usize, usize)> {
    if let Ok(p) = skill_partition(instance) {
        return Ok((p.scope, p.positive.len().max(2), p.negative.len().max(2)));
    }
    let n = instance.context_len();
    if n < 4 {
        return Err(Error::instance(&instance.id, "fewer than four context tokens"));
    }
    Ok((Scope::Context, (n / 4).max(2), (n / 2).max(2)))
}

/// Fraction of random partition draws whose saliency test is significant,
/// given precomputed maps (one per instance, same order).
pub fn calibration_from_maps(
    instances: &[RCInstance],
    maps: &[SaliencyMap],
    n_partitions: usize,
    seed: u64,
    alpha: f64,
) -> Result<(usize, usize)> {
    check_alpha(alpha)?;
    if n_partitions == 0 {
        return Err(Error::InvalidInput("n_partitions must be at least 1".into()));
    }
    if instances.is_empty() || instances.len() != maps.len() {
        return Err(Error::InvalidInput("calibration needs one saliency map per instance".into()));
    }
    let mut significant = 0;
    let mut draws = 0;
    for (inst, map) in instances.iter().zip(maps) {
        let (scope, pos, neg) = matched_sizes(inst)?;
        let scores = map.scope_scores(scope)?;
        for d in 0..n_partitions {
            let mut rng = crate::rng::stream(seed, &["calibration", &inst.id, &d.to_string()]);
            let p = random_partition_with(inst, scope, pos, neg, &mut rng)?;
            let (a, b) = partition_values(scores, &p)?;
            draws += 1;
            if t_test_one_tailed(&a, &b, alpha)?.significant {
                significant += 1;
            }
        }
    }
    Ok((significant, draws))
}

pub fn calibration_rate(
    instances: &[RCInstance],
    gateway: &dyn ModelGateway,
    config: &SaliencyConfig,
    n_partitions: usize,
    seed: u64,
    alpha: f64,
) -> Result<CalibrationReport> {
    let maps = crate::saliency::saliency_maps(gateway, instances, config, None)?;
    calibration_report(instances, &maps, gateway.model_id(), config.method, n_partitions, seed, alpha)
}

pub fn calibration_report(
    instances: &[RCInstance],
    maps: &[SaliencyMap],
    model_id: &str,
    method: Method,
    n_partitions: usize,
    seed: u64,
    alpha: f64,
) -> Result<CalibrationReport> {
    let (n_significant, n_draws) = calibration_from_maps(instances, maps, n_partitions, seed, alpha)?;
    let (ci_low, ci_high) = wilson_interval(n_significant, n_draws, 1.959_963_984_540_054);
    Ok(CalibrationReport {
        model_id: model_id.to_string(),
        method,
        alpha,
        seed,
        n_instances: instances.len(),
        n_partitions,
        n_draws,
        n_significant,
        rate: n_significant as f64 / n_draws as f64,
        ci_low,
        ci_high,
    })
}

/// Saliency for one instance followed by its alignment record.
pub fn align_pair(
    gateway: &dyn ModelGateway,
    pair: &CFPair,
    config: &SaliencyConfig,
    alpha: f64,
) -> Result<AlignmentRecord> {
    let partition = skill_partition(&pair.original)?;
    let map = compute_saliency(gateway, &pair.original, config)?;
    explanation_alignment(pair, &map, &partition, gateway, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let r = t_test_one_tailed(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert!((r.t_statistic - 4.898979485566356).abs() < 1e-12);
        assert!((r.degrees_of_freedom - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.0040).abs() < 5e-5);
        assert!(r.significant);
    }

    #[test]
    fn identical_and_reversed_samples() {
        let r = t_test_one_tailed(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.significant), (0.0, 0.5, false));
        let r = t_test_one_tailed(&[1.0, 2.0], &[5.0, 6.0], 0.05).unwrap();
        assert!(r.t_statistic < 0.0 && !r.significant);
        assert!(t_test_one_tailed(&[1.0], &[2.0], 0.05).is_err());
        assert!(t_test_one_tailed(&[], &[1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn singleton_side_uses_other_variance() {
        let r = t_test_one_tailed(&[4.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert!((r.t_statistic - 2.0 / (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.degrees_of_freedom, 2.0);
    }

    #[test]
    fn zero_variance_rules() {
        let eq = t_test_one_tailed(&[2.0, 2.0], &[2.0, 2.0, 2.0], 0.05).unwrap();
        assert_eq!((eq.p_value, eq.significant), (0.5, false));
        let up = t_test_one_tailed(&[3.0, 3.0], &[2.0, 2.0], 0.05).unwrap();
        assert_eq!((up.p_value, up.significant), (0.0, true));
        let json = serde_json::to_string(&up).unwrap();
        assert_eq!(serde_json::from_str::<SignificanceResult>(&json).unwrap(), up);
    }

    #[test]
    fn clearly_separated_partitions_align() {
        let scores = [0.9, 0.8, 0.85, 0.0, 0.01, 0.02];
        let p = TokenPartition {
            instance_id: "x".into(),
            scope: Scope::Context,
            positive: [0, 1, 2].into(),
            negative: [3, 4, 5].into(),
            skill_step: SkillStep::CoreferenceResolution,
        };
        assert!(alignment_record("x", true, &scores, &p, 0.05).unwrap().aligned);
        assert!(!alignment_record("x", false, &scores, &p, 0.05).unwrap().aligned);
    }

    #[test]
    fn score_arithmetic() {
        let rec = |aligned| AlignmentRecord {
            instance_id: "r".into(),
            cf_both_correct: aligned,
            significance: t_test_one_tailed(&[1.0, 2.0], &[1.0, 2.0], 0.05).unwrap(),
            aligned,
        };
        assert_eq!(alignment_score(&[rec(true), rec(true), rec(false)]).unwrap(), 2.0 / 3.0);
        assert!(alignment_score(&[]).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(10, 100, 1.96);
        assert!(lo < 0.1 && hi > 0.1 && lo > 0.0);
        assert_eq!(wilson_interval(0, 50, 1.96).0, 0.0);
    }

    proptest! {
        #[test]
        fn swap_negates_and_complements(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
        ) {
            let x = t_test_one_tailed(&a, &b, 0.05).unwrap();
            let y = t_test_one_tailed(&b, &a, 0.05).unwrap();
            prop_assert!((x.t_statistic + y.t_statistic).abs() < 1e-9);
            prop_assert!((x.p_value + y.p_value - 1.0).abs() < 1e-9);
        }

        #[test]
        fn scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
            c in 0.01f64..100.0,
        ) {
            let x = t_test_one_tailed(&a, &b, 0.05).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
            let y = t_test_one_tailed(&sa, &sb, 0.05).unwrap();
            prop_assert!((x.t_statistic - y.t_statistic).abs() < 1e-6 * (1.0 + x.t_statistic.abs()));
            prop_assert!((x.p_value - y.p_value).abs() < 1e-9);
            prop_assert!((x.degrees_of_freedom - y.degrees_of_freedom).abs() < 1e-6 * x.degrees_of_freedom);
        }
    }
}
