//! Occlusion and Integrated Gradients attributions for the start score.

mod cache;

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{argmax, mask_all, mask_words, ModelGateway};
use crate::types::{RCInstance, Scope};

pub use cache::{CacheRecord, SaliencyCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Occlusion,
    IntegratedGradients,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "occlusion" | "occ" => Some(Self::Occlusion),
            "ig" | "integrated_gradients" => Some(Self::IntegratedGradients),
            _ => None,
        }
    }

    /// Short name used in report columns.
    pub fn short(self) -> &'static str {
        match self {
            Self::Occlusion => "occ",
            Self::IntegratedGradients => "ig",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Occlusion => "occlusion",
            Self::IntegratedGradients => "integrated_gradients",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summarizer {
    L2,
    L1,
    Dot,
}

impl Summarizer {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(Self::L2),
            "l1" => Some(Self::L1),
            "dot" => Some(Self::Dot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    #[default]
    MaskAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SaliencyConfig {
    pub method: Method,
    pub ig_steps: usize,
    pub summarizer: Summarizer,
    #[serde(default)]
    pub baseline_policy: BaselinePolicy,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            method: Method::Occlusion,
            ig_steps: 50,
            summarizer: Summarizer::L2,
            baseline_policy: BaselinePolicy::MaskAll,
        }
    }
}

impl SaliencyConfig {
    pub fn occlusion() -> Self {
        Self::default()
    }

    pub fn integrated_gradients(ig_steps: usize, summarizer: Summarizer) -> Self {
        Self {
            method: Method::IntegratedGradients,
            ig_steps,
            summarizer,
            baseline_policy: BaselinePolicy::MaskAll,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ig_steps == 0 {
            return Err(Error::InvalidInput("ig_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Stable hex digest of the settings that affect the scores.
    pub fn hash(&self) -> String {
        let canonical = match self.method {
            Method::Occlusion => format!("occlusion;{:?}", self.baseline_policy),
            Method::IntegratedGradients => format!(
                "integrated_gradients;{};{:?};{:?}",
                self.ig_steps, self.summarizer, self.baseline_policy
            ),
        };
        Sha256::digest(canonical.as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Per-word start-score attributions for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub instance_id: String,
    pub scope: Scope,
    /// One score per word of `scope` (question words first for `All`).
    pub scores: Vec<f64>,
    pub question_len: usize,
    pub method: Method,
    pub config: SaliencyConfig,
    pub model_id: String,
    /// Context position whose start probability is explained.
    pub anchor_position: usize,
}

impl SaliencyMap {
    /// Scores restricted to the question or the context.
    pub fn scope_scores(&self, scope: Scope) -> Result<&[f64]> {
        match (self.scope, scope) {
            (a, b) if a == b => Ok(&self.scores),
            (Scope::All, Scope::Question) => Ok(&self.scores[..self.question_len]),
            (Scope::All, Scope::Context) => Ok(&self.scores[self.question_len..]),
            (a, b) => Err(Error::instance(
                &self.instance_id,
                format!("saliency over {a:?} has no {b:?} scores"),
            )),
        }
    }

    /// A copy narrowed to `scope`.
    pub fn restrict(&self, scope: Scope) -> Result<SaliencyMap> {
        let scores = self.scope_scores(scope)?.to_vec();
        Ok(SaliencyMap {
            scope,
            scores,
            question_len: if scope == Scope::Context { 0 } else { self.question_len },
            ..self.clone()
        })
    }
}

/// Collapse an attribution vector to one number.
pub fn summarize(vector: ArrayView1<f64>, kind: Summarizer) -> Result<f64> {
    if vector.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty vector".into()));
    }
    Ok(match kind {
        Summarizer::L2 => vector.dot(&vector).sqrt(),
        Summarizer::L1 => vector.iter().map(|x| x.abs()).sum(),
        Summarizer::Dot => vector.sum(),
    })
}

fn map_indexed<T, F>(parallel: bool, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(&f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Drop in start probability at the original argmax when each word in turn
/// is replaced by the baseline token.
pub fn occlusion_saliency(gateway: &dyn ModelGateway, instance: &RCInstance) -> Result<SaliencyMap> {
    let original = gateway.scores(instance)?;
    let anchor = argmax(&original.start_scores);
    let reference = original.start_scores[anchor];
    let n = instance.question.len() + instance.context_len();
    let mask = gateway.baseline_token();
    let scores = map_indexed(gateway.concurrent_safe(), n, |k| {
        let masked = mask_words(instance, &BTreeSet::from([k]), mask);
        let p = gateway.scores(&masked)?.start_scores;
        let p = p.get(anchor).copied().ok_or_else(|| Error::Gateway {
            model_id: gateway.model_id().to_string(),
            instance_id: instance.id.clone(),
            message: "score vector shrank under masking".into(),
        })?;
        Ok(reference - p)
    })?;
    Ok(SaliencyMap {
        instance_id: instance.id.clone(),
        scope: Scope::All,
        scores,
        question_len: instance.question.len(),
        method: Method::Occlusion,
        config: SaliencyConfig::occlusion(),
        model_id: gateway.model_id().to_string(),
        anchor_position: anchor,
    })
}

/// Right-endpoint Riemann approximation of Integrated Gradients:
/// `(input - baseline) * mean_j grad(baseline + j/m (input - baseline))`.
pub fn integrated_gradients<F>(
    input: &Array2<f64>,
    baseline: &Array2<f64>,
    steps: usize,
    parallel: bool,
    grad: F,
) -> Result<Array2<f64>>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>> + Sync + Send,
{
    if steps == 0 {
        return Err(Error::InvalidInput("ig_steps must be at least 1".into()));
    }
    if input.dim() != baseline.dim() {
        return Err(Error::InvalidInput("input and baseline shapes differ".into()));
    }
    let delta = input - baseline;
    let grads = map_indexed(parallel, steps, |j| {
        let alpha = (j + 1) as f64 / steps as f64;
        let point = baseline + &(&delta * alpha);
        let g = grad(&point)?;
        if g.dim() != input.dim() {
            return Err(Error::Internal(format!("gradient shape {:?} != {:?}", g.dim(), input.dim())));
        }
        Ok(g)
    })?;
    let mut total = Array2::zeros(input.dim());
    for g in &grads {
        total += g;
    }
    Ok(delta * (total / steps as f64))
}

/// Integrated Gradients from the all-mask baseline to the input, explaining
/// the start probability at the original argmax.
pub fn ig_saliency(gateway: &dyn ModelGateway, instance: &RCInstance, config: &SaliencyConfig) -> Result<SaliencyMap> {
    config.validate()?;
    if !gateway.supports_gradients() {
        return Err(Error::Capability {
            model_id: gateway.model_id().to_string(),
            capability: "grad_start",
        });
    }
    let anchor = argmax(&gateway.scores(instance)?.start_scores);
    let input = gateway.embed(instance)?;
    let baseline = gateway.embed(&mask_all(instance, gateway.baseline_token()))?;
    let attributions = integrated_gradients(&input, &baseline, config.ig_steps, gateway.concurrent_safe(), |point| {
        gateway.grad_start(instance, point, anchor)
    })?;
    let scores = attributions
        .rows()
        .into_iter()
        .map(|r| summarize(r, config.summarizer))
        .collect::<Result<Vec<_>>>()?;
    Ok(SaliencyMap {
        instance_id: instance.id.clone(),
        scope: Scope::All,
        scores,
        question_len: instance.question.len(),
        method: Method::IntegratedGradients,
        config: *config,
        model_id: gateway.model_id().to_string(),
        anchor_position: anchor,
    })
}

pub fn compute_saliency(gateway: &dyn ModelGateway, instance: &RCInstance, config: &SaliencyConfig) -> Result<SaliencyMap> {
    match config.method {
        Method::Occlusion => occlusion_saliency(gateway, instance),
        Method::IntegratedGradients => ig_saliency(gateway, instance, config),
    }
}

/// Saliency for many instances, in input order, consulting and filling
/// `cache` when given.
pub fn saliency_maps(
    gateway: &dyn ModelGateway,
    instances: &[RCInstance],
    config: &SaliencyConfig,
    mut cache: Option<&mut SaliencyCache>,
) -> Result<Vec<SaliencyMap>> {
    let hash = config.hash();
    let missing: Vec<usize> = (0..instances.len())
        .filter(|&i| {
            cache
                .as_ref()
                .is_none_or(|c| c.get(gateway.model_id(), config.method, &hash, &instances[i].id).is_none())
        })
        .collect();
    let computed = map_indexed(gateway.concurrent_safe(), missing.len(), |k| {
        compute_saliency(gateway, &instances[missing[k]], config)
    })?;
    let mut fresh = missing.into_iter().zip(computed).collect::<std::collections::HashMap<_, _>>();
    let mut out = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        match fresh.remove(&i) {
            Some(map) => {
                if let Some(c) = cache.as_deref_mut() {
                    c.insert(map.clone());
                }
                out.push(map);
            }
            None => {
                let c = cache.as_ref().expect("hit implies cache");
                out.push(c.get(gateway.model_id(), config.method, &hash, &inst.id).expect("hit").clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{OracleModel, ToyModel};
    use crate::types::InstanceBuilder;
    use ndarray::array;
    use proptest::prelude::*;

    fn fixture() -> RCInstance {
        InstanceBuilder::new("s", "Who was born in Hawaii?")
            .paragraph("Barack Obama was the 44th president of the US. He was born in Hawaii.", true, "p")
            .answer("Barack Obama")
            .build()
            .unwrap()
    }

    #[test]
    fn summarizer_examples() {
        let v = array![3.0, -4.0];
        assert_eq!(summarize(array![3.0, 4.0].view(), Summarizer::L2).unwrap(), 5.0);
        assert_eq!(summarize(v.view(), Summarizer::L1).unwrap(), 7.0);
        assert_eq!(summarize(v.view(), Summarizer::Dot).unwrap(), -1.0);
        assert!(summarize(ndarray::Array1::<f64>::zeros(0).view(), Summarizer::L2).is_err());
    }

    proptest! {
        #[test]
        fn norms_are_nonnegative(v in prop::collection::vec(-1e3f64..1e3, 1..20)) {
            let a = ndarray::Array1::from(v);
            prop_assert!(summarize(a.view(), Summarizer::L1).unwrap() >= 0.0);
            prop_assert!(summarize(a.view(), Summarizer::L2).unwrap() >= 0.0);
        }
    }

    #[test]
    fn constant_model_occlusion_is_zero() {
        let m = ToyModel::constant(8);
        let map = occlusion_saliency(&m, &fixture()).unwrap();
        assert!(map.scores.iter().all(|s| *s == 0.0));
        assert_eq!(map.scores.len(), 6 + 16);
    }

    #[test]
    fn occlusion_matches_two_passes() {
        let m = ToyModel::new(4);
        let inst = fixture();
        let map = occlusion_saliency(&m, &inst).unwrap();
        let p0 = m.scores(&inst).unwrap().start_scores;
        let a = map.anchor_position;
        for k in [0, 3, 9, 21] {
            let masked = mask_words(&inst, &BTreeSet::from([k]), "[MASK]");
            assert_eq!(map.scores[k], p0[a] - m.scores(&masked).unwrap().start_scores[a]);
        }
    }

    #[test]
    fn ig_on_masked_input_is_zero() {
        let m = ToyModel::new(4);
        let inst = mask_all(&fixture(), "[MASK]");
        let map = ig_saliency(&m, &inst, &SaliencyConfig::integrated_gradients(10, Summarizer::L2)).unwrap();
        assert!(map.scores.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn ig_linear_target_is_exact() {
        let e = array![[1.0, 2.0], [0.5, -1.0]];
        let b = array![[0.0, 1.0], [1.0, 1.0]];
        let w = array![[0.3, -0.2], [1.5, 0.25]];
        for m in [1, 5, 50] {
            let v = integrated_gradients(&e, &b, m, false, |_| Ok(w.clone())).unwrap();
            for k in 0..2 {
                let expected: f64 = (0..2).map(|c| w[[k, c]] * (e[[k, c]] - b[[k, c]])).sum();
                assert!((summarize(v.row(k), Summarizer::Dot).unwrap() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ig_requires_gradients() {
        let err = ig_saliency(&OracleModel, &fixture(), &SaliencyConfig::integrated_gradients(5, Summarizer::L2)).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Capability);
    }

    #[test]
    fn scope_views() {
        let map = occlusion_saliency(&ToyModel::new(1), &fixture()).unwrap();
        assert_eq!(map.scope_scores(Scope::Question).unwrap().len(), 6);
        let ctx = map.restrict(Scope::Context).unwrap();
        assert_eq!(ctx.scores.len(), 16);
        assert!(ctx.scope_scores(Scope::Question).is_err());
    }

    #[test]
    fn config_hash_ignores_irrelevant_fields() {
        let mut a = SaliencyConfig::occlusion();
        let h = a.hash();
        a.ig_steps = 7;
        assert_eq!(a.hash(), h);
        let ig = SaliencyConfig::integrated_gradients(50, Summarizer::L2);
        assert_ne!(ig.hash(), SaliencyConfig::integrated_gradients(51, Summarizer::L2).hash());
    }
}
