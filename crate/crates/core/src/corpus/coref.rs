//! Coreference clusters: a pluggable resolver contract, a small rule-based
//! fallback, and selection of instances whose answer sits in a cluster.

use crate::metrics::normalize_answer;
use crate::text;
use crate::types::{CorefCluster, MentionSpan, RCInstance, Skill};

pub trait CorefResolver: Send + Sync {
    fn clusters(&self, instance: &RCInstance) -> Vec<CorefCluster>;
}

/// Links repeated names (full or last-word match) and attaches personal
/// pronouns to the nearest preceding named mention. Only clusters with at
/// least two mentions are returned.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleCorefResolver;

const LINKABLE_PRONOUNS: &[&str] = &["he", "him", "his", "she", "her", "i", "me", "my"];

impl CorefResolver for RuleCorefResolver {
    fn clusters(&self, instance: &RCInstance) -> Vec<CorefCluster> {
        let words = instance.context_words();
        let mut named: Vec<(usize, usize)> = Vec::new();
        for (s, e) in instance.sentence_bounds() {
            for (a, b) in text::capitalized_runs(&words[s..e]) {
                named.push((s + a, s + b));
            }
        }

        // cluster id per named mention
        let mut cluster_of: Vec<usize> = Vec::with_capacity(named.len());
        let mut heads: Vec<Vec<String>> = Vec::new();
        for &(a, b) in &named {
            let toks: Vec<String> = words[a..b].iter().map(|w| text::key(w)).collect();
            let found = heads.iter().position(|h| {
                h == &toks
                    || (toks.len() == 1 && h.last() == toks.last())
                    || (h.len() == 1 && toks.last() == h.last())
            });
            match found {
                Some(c) => {
                    if toks.len() > heads[c].len() {
                        heads[c] = toks;
                    }
                    cluster_of.push(c);
                }
                None => {
                    heads.push(toks);
                    cluster_of.push(heads.len() - 1);
                }
            }
        }

        let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); heads.len()];
        for (m, &c) in named.iter().zip(&cluster_of) {
            members[c].push(*m);
        }
        for (p, w) in words.iter().enumerate() {
            if !LINKABLE_PRONOUNS.contains(&text::key(w).as_str()) {
                continue;
            }
            if let Some(idx) = named.iter().rposition(|&(_, b)| b <= p) {
                members[cluster_of[idx]].push((p, p + 1));
            }
        }

        members
            .into_iter()
            .filter(|m| m.len() >= 2)
            .map(|mut m| {
                m.sort_unstable();
                m.into_iter()
                    .filter_map(|(a, b)| {
                        Some(MentionSpan {
                            text: instance.span_text(a, b - 1).ok()?,
                            tok_start: a,
                            tok_end: b - 1,
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Keep instances where some coreference cluster has a mention matching a
/// gold answer; that cluster is recorded as the relevant one.
///
/// Clusters already on the instance take precedence; otherwise `resolver`
/// supplies them (instances without clusters are dropped when it is `None`).
pub fn filter_coref_answer_in_cluster(
    instances: Vec<RCInstance>,
    resolver: Option<&dyn CorefResolver>,
) -> Vec<RCInstance> {
    instances
        .into_iter()
        .filter_map(|mut inst| {
            if inst.coref_clusters.is_empty() {
                inst.coref_clusters = resolver?.clusters(&inst);
            }
            let golds: Vec<String> = inst.gold_texts().iter().map(|g| normalize_answer(g)).collect();
            let relevant = inst.coref_clusters.iter().position(|c| {
                c.iter().any(|m| golds.contains(&normalize_answer(&m.text)))
            })?;
            inst.relevant_cluster = Some(relevant);
            inst.skill = Skill::Coreference;
            Some(inst)
        })
        .collect()
}
