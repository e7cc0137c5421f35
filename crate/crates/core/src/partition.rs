//! Positive/negative token partitions encoding an expected reasoning step.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
use crate::types::{RCInstance, Scope, Skill};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillStep {
    ComparisonOperation,
    CoreferenceResolution,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPartition {
    pub instance_id: String,
    pub scope: Scope,
    pub positive: BTreeSet<usize>,
    pub negative: BTreeSet<usize>,
    pub skill_step: SkillStep,
}

impl TokenPartition {
    /// Check disjointness, non-emptiness and bounds against `instance`.
    pub fn validate(&self, instance: &RCInstance) -> Result<()> {
        let fail = |m: &str| Err(Error::instance(&self.instance_id, m));
        if self.positive.is_empty() || self.negative.is_empty() {
            return fail("partition side is empty");
        }
        if !self.positive.is_disjoint(&self.negative) {
            return fail("partition sides overlap");
        }
        let n = instance.scope_len(self.scope);
        if self.positive.iter().chain(&self.negative).any(|&i| i >= n) {
            return fail("partition index out of range");
        }
        Ok(())
    }
}

/// Operator tokens against question tokens that are neither operator,
/// entity, value, verb, nor comma.
pub fn build_comparison_partition(instance: &RCInstance) -> Result<TokenPartition> {
    if instance.skill != Skill::Comparison {
        return Err(Error::instance(&instance.id, "comparison partition requires a comparison question"));
    }
    let a = &instance.annotations;
    if a.comparison_operator.is_empty() || a.compared_entities.is_empty() {
        return Err(Error::instance(&instance.id, "question annotations missing"));
    }
    if a.unannotatable {
        return Err(Error::instance(&instance.id, "question is flagged unannotatable"));
    }
    let excluded = a.all_indices();
    let negative: BTreeSet<usize> = instance
        .question
        .iter()
        .filter(|t| !excluded.contains(&t.index) && t.text != ",")
        .map(|t| t.index)
        .collect();
    if negative.is_empty() {
        return Err(Error::instance(&instance.id, "negative partition is empty"));
    }
    Ok(TokenPartition {
        instance_id: instance.id.clone(),
        scope: Scope::Question,
        positive: a.comparison_operator.clone(),
        negative,
        skill_step: SkillStep::ComparisonOperation,
    })
}

/// Tokens of the relevant cluster's mentions against context tokens outside
/// the cluster whose case-folded text does not occur in the question.
pub fn build_coref_partition(instance: &RCInstance, relevant_cluster: usize) -> Result<TokenPartition> {
    if instance.skill != Skill::Coreference {
        return Err(Error::instance(&instance.id, "coreference partition requires a coreference question"));
    }
    let cluster = instance
        .coref_clusters
        .get(relevant_cluster)
        .ok_or_else(|| Error::instance(&instance.id, "relevant cluster missing"))?;
    let n = instance.context_len();
    let positive: BTreeSet<usize> = cluster
        .iter()
        .flat_map(|m| m.positions())
        .filter(|&i| i < n)
        .collect();
    let question: BTreeSet<String> = instance.question.iter().map(|t| text::key(&t.text)).collect();
    let negative: BTreeSet<usize> = instance
        .context_tokens()
        .filter(|t| !positive.contains(&t.index) && !question.contains(&text::key(&t.text)))
        .map(|t| t.index)
        .collect();
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::instance(&instance.id, "coreference partition side is empty"));
    }
    Ok(TokenPartition {
        instance_id: instance.id.clone(),
        scope: Scope::Context,
        positive,
        negative,
        skill_step: SkillStep::CoreferenceResolution,
    })
}

/// The skill partition for an instance, if its skill defines one.
pub fn skill_partition(instance: &RCInstance) -> Result<TokenPartition> {
    match instance.skill {
        Skill::Comparison => build_comparison_partition(instance),
        Skill::Coreference => {
            let c = instance
                .relevant_cluster
                .ok_or_else(|| Error::instance(&instance.id, "no relevant coreference cluster"))?;
            build_coref_partition(instance, c)
        }
        Skill::Other => Err(Error::instance(&instance.id, "no reasoning step defined for this skill")),
    }
}

/// Uniformly sampled disjoint index sets of the requested sizes.
pub fn random_partition(
    instance: &RCInstance,
    scope: Scope,
    pos_size: usize,
    neg_size: usize,
    seed: u64,
) -> Result<TokenPartition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_partition_with(instance, scope, pos_size, neg_size, &mut rng)
}

pub fn random_partition_with<R: rand::Rng + ?Sized>(
    instance: &RCInstance,
    scope: Scope,
    pos_size: usize,
    neg_size: usize,
    rng: &mut R,
) -> Result<TokenPartition> {
    let n = instance.scope_len(scope);
    if pos_size < 2 || neg_size < 2 || pos_size + neg_size > n {
        return Err(Error::instance(
            &instance.id,
            format!("cannot draw {pos_size}+{neg_size} indices from {n} tokens"),
        ));
    }
    let picked = rand::seq::index::sample(rng, n, pos_size + neg_size).into_vec();
    Ok(TokenPartition {
        instance_id: instance.id.clone(),
        scope,
        positive: picked[..pos_size].iter().copied().collect(),
        negative: picked[pos_size..].iter().copied().collect(),
        skill_step: SkillStep::Random,
    })
}
