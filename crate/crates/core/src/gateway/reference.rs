use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text;
use crate::types::RCInstance;

use super::{ModelGateway, SpanScores};

fn one_hot_span(n: usize, start: usize, end: usize) -> SpanScores {
    let mut s = vec![0.0; n];
    let mut e = vec![0.0; n];
    s[start] = 1.0;
    e[end] = 1.0;
    SpanScores {
        start_scores: s,
        end_scores: e,
    }
}

/// Always answers with the first gold span.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModel;

impl ModelGateway for OracleModel {
    fn model_id(&self) -> &str {
        "oracle"
    }

    fn scores(&self, instance: &RCInstance) -> Result<SpanScores> {
        let gold = instance
            .gold_answers
            .first()
            .ok_or_else(|| Error::instance(&instance.id, "no gold answer"))?;
        Ok(one_hot_span(instance.context_len(), gold.token_start, gold.token_end))
    }
}

/// Answers with the first occurrence of the most frequent capitalized
/// phrase in the context, ignoring the question.
#[derive(Debug, Clone, Copy, Default)]
pub struct MostFrequentEntityModel;

impl MostFrequentEntityModel {
    /// Inclusive span of the chosen entity, if the context has any.
    pub fn choose(instance: &RCInstance) -> Option<(usize, usize)> {
        let words = instance.context_words();
        let mut counts: HashMap<String, (usize, usize, usize)> = HashMap::new();
        for (s, e) in instance.sentence_bounds() {
            for (a, b) in text::capitalized_runs(&words[s..e]) {
                let key = words[s + a..s + b].iter().map(|w| text::key(w)).collect::<Vec<_>>().join(" ");
                let entry = counts.entry(key).or_insert((0, s + a, s + b - 1));
                entry.0 += 1;
            }
        }
        counts
            .into_values()
            .max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)))
            .map(|(_, a, b)| (a, b))
    }
}

impl ModelGateway for MostFrequentEntityModel {
    fn model_id(&self) -> &str {
        "frequency"
    }

    fn scores(&self, instance: &RCInstance) -> Result<SpanScores> {
        let (a, b) = Self::choose(instance).unwrap_or((0, 0));
        Ok(one_hot_span(instance.context_len(), a, b))
    }
}
