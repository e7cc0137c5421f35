//! The model contract, span decoding, and bundled models.

mod reference;
mod remote;
mod toy;

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;
use crate::types::{AnswerSpan, RCInstance, Token};

pub use reference::{MostFrequentEntityModel, OracleModel};
pub use remote::{serve, RemoteGateway};
pub use toy::ToyModel;

/// Build a gateway from a model spec: `toy:<seed>`, `remote:<command line>`,
/// `oracle` or `frequency`.
pub fn open_model(spec: &str) -> Result<Box<dyn ModelGateway>> {
    let bad = || Error::InvalidInput(format!("unknown model spec {spec:?}"));
    match spec.split_once(':') {
        Some(("toy", seed)) => Ok(Box::new(ToyModel::new(seed.trim().parse().map_err(|_| bad())?))),
        Some(("remote", cmd)) => {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            Ok(Box::new(RemoteGateway::spawn(&argv)?))
        }
        None if spec == "oracle" => Ok(Box::new(OracleModel)),
        None if spec == "frequency" => Ok(Box::new(MostFrequentEntityModel)),
        _ => Err(bad()),
    }
}

pub const MASK_TOKEN: &str = "[MASK]";
pub const DEFAULT_MAX_ANSWER_LEN: usize = 30;

/// Start/end probability vectors over context words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub start_scores: Vec<f64>,
    pub end_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub start_scores: Vec<f64>,
    pub end_scores: Vec<f64>,
    pub predicted_span: AnswerSpan,
}

impl ModelOutput {
    /// Index of the highest start probability (first on ties).
    pub fn argmax_start(&self) -> usize {
        argmax(&self.start_scores)
    }
}

/// An extractive QA model. Scores are word-level probabilities over the
/// flattened context; embeddings and gradients cover question words followed
/// by context words.
pub trait ModelGateway: Send + Sync {
    fn model_id(&self) -> &str;

    fn scores(&self, instance: &RCInstance) -> Result<SpanScores>;

    /// Whether calls may be issued from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn baseline_token(&self) -> &str {
        MASK_TOKEN
    }

    fn max_answer_len(&self) -> usize {
        DEFAULT_MAX_ANSWER_LEN
    }

    fn supports_gradients(&self) -> bool {
        false
    }

    fn embed(&self, _instance: &RCInstance) -> Result<Array2<f64>> {
        Err(missing(self.model_id(), "embed"))
    }

    /// Derivative of the start probability at `target` with respect to
    /// every coordinate of `embeddings`.
    fn grad_start(&self, _instance: &RCInstance, _embeddings: &Array2<f64>, _target: usize) -> Result<Array2<f64>> {
        Err(missing(self.model_id(), "grad_start"))
    }

    /// Start probabilities computed from explicit embeddings.
    fn start_probs_at(&self, _instance: &RCInstance, _embeddings: &Array2<f64>) -> Result<Vec<f64>> {
        Err(missing(self.model_id(), "start_probs_at"))
    }
}

fn missing(model_id: &str, capability: &'static str) -> Error {
    Error::Capability {
        model_id: model_id.to_string(),
        capability,
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Best span `(i, j)` by `start[i] + end[j]` with `i <= j` and
/// `j - i < max_answer_len`; ties go to the smallest `i`, then smallest `j`.
pub fn decode_span(start: &[f64], end: &[f64], max_answer_len: usize) -> Result<(usize, usize)> {
    if start.is_empty() || start.len() != end.len() {
        return Err(Error::InvalidInput(format!(
            "score vectors must be non-empty and of equal length (got {} and {})",
            start.len(),
            end.len()
        )));
    }
    if max_answer_len == 0 {
        return Err(Error::InvalidInput("max answer length must be at least 1".into()));
    }
    let n = start.len();
    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i..n.min(i + max_answer_len) {
            let s = start[i] + end[j];
            if s > best_score {
                best_score = s;
                best = (i, j);
            }
        }
    }
    Ok(best)
}

/// Text of an inclusive flattened range; ranges spanning sentences are
/// joined with single spaces.
pub fn span_text_across(instance: &RCInstance, start: usize, end: usize) -> String {
    let bounds = instance.sentence_bounds();
    let mut parts = Vec::new();
    for (si, &(s, e)) in bounds.iter().enumerate() {
        let (a, b) = (start.max(s), (end + 1).min(e));
        if a < b {
            parts.push(text::layout(&instance.context[si].tokens[a - s..b - s]));
        }
    }
    parts.join(" ")
}

fn check_distribution(v: &[f64], n: usize, what: &str) -> std::result::Result<(), String> {
    if v.len() != n {
        return Err(format!("{what} has {} entries for {n} context tokens", v.len()));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return Err(format!("{what} contains values outside [0, 1]"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(format!("{what} sums to {sum}"));
    }
    Ok(())
}

/// Run the model and decode its answer span.
pub fn predict(gateway: &dyn ModelGateway, instance: &RCInstance) -> Result<ModelOutput> {
    let fail = |message: String| Error::Gateway {
        model_id: gateway.model_id().to_string(),
        instance_id: instance.id.clone(),
        message,
    };
    let scores = gateway.scores(instance).map_err(|e| match e {
        Error::Gateway { .. } | Error::Capability { .. } => e,
        other => fail(other.to_string()),
    })?;
    let n = instance.context_len();
    check_distribution(&scores.start_scores, n, "start scores").map_err(fail)?;
    check_distribution(&scores.end_scores, n, "end scores").map_err(fail)?;
    let (i, j) = decode_span(&scores.start_scores, &scores.end_scores, gateway.max_answer_len())?;
    let (sentence_index, _) = instance.locate(i).expect("index within context");
    Ok(ModelOutput {
        predicted_span: AnswerSpan {
            text: span_text_across(instance, i, j),
            sentence_index,
            token_start: i,
            token_end: j,
        },
        start_scores: scores.start_scores,
        end_scores: scores.end_scores,
    })
}

/// Gradient of the start probability at `target` (a context position).
pub fn grad_start(gateway: &dyn ModelGateway, instance: &RCInstance, target: usize) -> Result<Array2<f64>> {
    if target >= instance.context_len() {
        return Err(Error::instance(
            &instance.id,
            format!("target {target} outside context of {} tokens", instance.context_len()),
        ));
    }
    let e = gateway.embed(instance)?;
    let g = gateway.grad_start(instance, &e, target)?;
    if g.dim() != e.dim() {
        return Err(Error::Gateway {
            model_id: gateway.model_id().to_string(),
            instance_id: instance.id.clone(),
            message: format!("gradient shape {:?} differs from embedding shape {:?}", g.dim(), e.dim()),
        });
    }
    Ok(g)
}

fn mask_sequence(tokens: &mut [Token], positions: impl Fn(usize) -> bool, mask: &str) {
    let mut shift: isize = 0;
    let width = mask.chars().count() as isize;
    for (k, t) in tokens.iter_mut().enumerate() {
        let old = (t.char_end - t.char_start) as isize;
        t.char_start = (t.char_start as isize + shift) as usize;
        if positions(k) {
            t.text = mask.to_string();
            t.char_end = t.char_start + width as usize;
            shift += width - old;
        } else {
            t.char_end = (t.char_end as isize + shift) as usize;
        }
    }
}

/// Copy of `instance` with the words at `positions` replaced by `mask`.
///
/// Positions index question words followed by context words. Offsets are
/// shifted to stay consistent; gold answer texts are left as they were.
pub fn mask_words(instance: &RCInstance, positions: &BTreeSet<usize>, mask: &str) -> RCInstance {
    let mut out = instance.clone();
    let nq = out.question.len();
    mask_sequence(&mut out.question, |k| positions.contains(&k), mask);
    out.question_text = text::layout(&out.question);
    let mut base = nq;
    for s in &mut out.context {
        let b = base;
        mask_sequence(&mut s.tokens, |k| positions.contains(&(b + k)), mask);
        base += s.tokens.len();
    }
    out
}

/// Every word masked.
pub fn mask_all(instance: &RCInstance, mask: &str) -> RCInstance {
    let all = (0..instance.question.len() + instance.context_len()).collect();
    mask_words(instance, &all, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::InstanceBuilder;
    use proptest::prelude::*;

    fn brute_force(start: &[f64], end: &[f64], max_len: usize) -> (usize, usize) {
        let mut pairs = Vec::new();
        for i in 0..start.len() {
            for j in 0..end.len() {
                if i <= j && j - i < max_len {
                    pairs.push((start[i] + end[j], i, j));
                }
            }
        }
        let best = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let (_, i, j) = pairs.into_iter().filter(|p| p.0 == best).min_by_key(|p| (p.1, p.2)).unwrap();
        (i, j)
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_span(&[0.1, 0.7, 0.2], &[0.2, 0.1, 0.7], 3).unwrap(), (1, 2));
        assert_eq!(decode_span(&[1.0], &[1.0], 30).unwrap(), (0, 0));
        assert_eq!(decode_span(&[0.5, 0.5], &[0.5, 0.5], 30).unwrap(), (0, 0));
        assert!(decode_span(&[], &[], 3).is_err());
        assert!(decode_span(&[1.0], &[1.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn decode_matches_enumeration(
            v in prop::collection::vec((0u8..5, 0u8..5), 1..12),
            max_len in 1usize..6,
        ) {
            let start: Vec<f64> = v.iter().map(|p| p.0 as f64 / 4.0).collect();
            let end: Vec<f64> = v.iter().map(|p| p.1 as f64 / 4.0).collect();
            prop_assert_eq!(decode_span(&start, &end, max_len).unwrap(), brute_force(&start, &end, max_len));
        }
    }

    #[test]
    fn masking_keeps_offsets_consistent() {
        let inst = InstanceBuilder::new("m", "Who was born in Hawaii?")
            .paragraph("Barack Obama was the 44th president. He was born in Hawaii.", true, "p")
            .answer("Barack Obama")
            .build()
            .unwrap();
        let masked = mask_words(&inst, &[0, 4, 7].into_iter().collect(), MASK_TOKEN);
        assert_eq!(masked.question_text, "[MASK] was born in [MASK]?");
        assert_eq!(masked.context[0].text(), "Barack [MASK] was the 44th president.");
        for s in &masked.context {
            for t in &s.tokens {
                assert_eq!(t.char_end - t.char_start, t.text.chars().count());
            }
        }
        let all = mask_all(&inst, MASK_TOKEN);
        assert!(all.all_words().iter().all(|w| *w == MASK_TOKEN));
    }

    #[test]
    fn cross_sentence_text_is_joined() {
        let inst = InstanceBuilder::new("x", "Q?")
            .paragraph("Ann ran. Bob hid.", true, "p")
            .answer("Ann")
            .build()
            .unwrap();
        assert_eq!(span_text_across(&inst, 1, 4), "ran. Bob hid");
    }
}
