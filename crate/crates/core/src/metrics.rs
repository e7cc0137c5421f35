//! Extractive-QA answer metrics: token F1 and exact match.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::is_punctuation;
use crate::types::{EvalResult, RCInstance};

/// Lowercase, strip punctuation, drop the articles "a"/"an"/"the", and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| !is_punctuation(*c))
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_toks: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_toks: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_toks.is_empty() && gold_toks.is_empty() {
        return 1.0;
    }
    if pred_toks.is_empty() || gold_toks.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_toks {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_toks {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_toks.len() as f64;
    let recall = common as f64 / gold_toks.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 against the best-matching gold answer.
pub fn token_f1<S: AsRef<str>>(predicted: &str, gold_answers: &[S]) -> Result<f64> {
    if gold_answers.is_empty() {
        return Err(Error::EmptyGold);
    }
    Ok(gold_answers
        .iter()
        .map(|g| f1_single(predicted, g.as_ref()))
        .fold(0.0, f64::max))
}

pub fn exact_match<S: AsRef<str>>(predicted: &str, gold_answers: &[S]) -> Result<bool> {
    if gold_answers.is_empty() {
        return Err(Error::EmptyGold);
    }
    let pred = normalize_answer(predicted);
    Ok(gold_answers.iter().any(|g| normalize_answer(g.as_ref()) == pred))
}

/// Macro-averaged F1 and exact match over `instances`.
pub fn evaluate_dataset(
    predictions: &HashMap<String, String>,
    instances: &[RCInstance],
) -> Result<EvalResult> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty dataset".into()));
    }
    let mut f1_sum = 0.0;
    let mut em_sum = 0.0;
    for inst in instances {
        let pred = predictions
            .get(&inst.id)
            .ok_or_else(|| Error::MissingPrediction(inst.id.clone()))?;
        let golds = inst.gold_texts();
        f1_sum += token_f1(pred, &golds)?;
        if exact_match(pred, &golds)? {
            em_sum += 1.0;
        }
    }
    let n = instances.len() as f64;
    Ok(EvalResult {
        f1: f1_sum / n,
        exact_match: em_sum / n,
        n_instances: instances.len(),
    })
}
