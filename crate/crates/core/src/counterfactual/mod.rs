//! Counterfactual instances: operator antonym swaps for comparison questions
//! and authored cluster insertions for coreference questions.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ComparativeLexicon;
use crate::error::{Error, Result};
use crate::gateway::{predict, ModelGateway};
use crate::metrics::{exact_match, normalize_answer, token_f1};
use crate::text;
use crate::types::{splice_tokens, EvalResult, RCInstance, Skill};

pub use io::{load_cf_pairs, load_manual_coref_cf, pairs_from_records, read_cf_records, save_cf_pairs, CfRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionTag {
    InDistribution,
    OutOfDistribution,
}

impl DistributionTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in_dist" | "in_distribution" => Some(Self::InDistribution),
            "ood" | "out_of_distribution" => Some(Self::OutOfDistribution),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    AntonymSwap,
    ClusterInsertion,
}

/// Replacement surface forms per comparative operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntonymTable {
    pub entries: BTreeMap<String, Vec<String>>,
    pub distribution_tag: DistributionTag,
}

fn table(tag: DistributionTag, rows: &[(&str, &[&str])]) -> AntonymTable {
    AntonymTable {
        entries: rows
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
            .collect(),
        distribution_tag: tag,
    }
}

impl AntonymTable {
    /// Antonyms that also occur as operators in training questions.
    pub fn in_distribution() -> Self {
        table(
            DistributionTag::InDistribution,
            &[
                ("earlier", &["later"]),
                ("later", &["earlier"]),
                ("first", &["later"]),
                ("more recently", &["earlier"]),
                ("older", &["younger"]),
                ("younger", &["older"]),
            ],
        )
    }

    /// Antonyms never seen as operators in training questions.
    pub fn out_of_distribution() -> Self {
        table(
            DistributionTag::OutOfDistribution,
            &[
                ("first", &["less recently"]),
                ("older", &["less old", "more junior", "less mature", "less grown-up"]),
                ("earlier", &["subsequently", "thereafter", "less recently"]),
                ("later", &["less recently"]),
                ("younger", &["more old", "less junior", "more mature", "more grown-up"]),
                ("more recently", &["less recently", "longer ago"]),
            ],
        )
    }

    pub fn for_tag(tag: DistributionTag) -> Self {
        match tag {
            DistributionTag::InDistribution => Self::in_distribution(),
            DistributionTag::OutOfDistribution => Self::out_of_distribution(),
        }
    }

    /// Keys must be lexicon operators and replacements must differ from keys.
    pub fn validate(&self, lexicon: &ComparativeLexicon) -> Result<()> {
        for (k, reps) in &self.entries {
            if !lexicon.contains(k) {
                return Err(Error::InvalidInput(format!("antonym key {k:?} is not a comparative operator")));
            }
            if reps.is_empty() || reps.iter().any(|r| r.to_lowercase() == *k) {
                return Err(Error::InvalidInput(format!("antonym entry {k:?} has no usable replacement")));
            }
        }
        Ok(())
    }
}

/// Which replacement to use when an operator has several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacementChoice {
    First,
    Index(usize),
    /// Uniform pick from a stream keyed by this seed and the instance id.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CFPair {
    pub original: RCInstance,
    pub perturbed: RCInstance,
    pub perturbation: Perturbation,
    pub distribution_tag: DistributionTag,
    pub replaced_operator: Option<(String, String)>,
}

impl CFPair {
    pub fn id(&self) -> &str {
        &self.original.id
    }
}

fn cf_id(id: &str) -> String {
    match id.strip_suffix("-cf") {
        Some(base) => base.to_string(),
        None => format!("{id}-cf"),
    }
}

fn match_case(template: &str, replacement: &str) -> String {
    if text::is_capitalized(template) {
        let mut c = replacement.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

fn shift_set(set: &BTreeSet<usize>, after: usize, delta: isize) -> BTreeSet<usize> {
    set.iter()
        .map(|&i| if i >= after { (i as isize + delta) as usize } else { i })
        .collect()
}

pub fn perturb_comparison(instance: &RCInstance, table: &AntonymTable) -> Result<CFPair> {
    perturb_comparison_with(instance, table, ReplacementChoice::First)
}

/// Swap the comparison operator for an antonym and move the gold answer to
/// the other compared entity.
pub fn perturb_comparison_with(
    instance: &RCInstance,
    table: &AntonymTable,
    choice: ReplacementChoice,
) -> Result<CFPair> {
    let fail = |m: String| Error::instance(&instance.id, m);
    if instance.skill != Skill::Comparison {
        return Err(fail("antonym swap requires a comparison question".into()));
    }
    let op = &instance.annotations.comparison_operator;
    let (first, last) = match (op.first(), op.last()) {
        (Some(&a), Some(&b)) if b - a + 1 == op.len() => (a, b),
        _ => return Err(fail("operator tokens are missing or not contiguous".into())),
    };
    let words = instance.question_words();
    let surface = words[first..=last].iter().map(|w| text::key(w)).collect::<Vec<_>>().join(" ");
    let options = table
        .entries
        .get(&surface)
        .ok_or_else(|| fail(format!("operator {surface:?} has no antonym")))?;
    let pick = match choice {
        ReplacementChoice::First => 0,
        ReplacementChoice::Index(i) if i < options.len() => i,
        ReplacementChoice::Index(i) => return Err(fail(format!("antonym index {i} out of range for {surface:?}"))),
        ReplacementChoice::Seeded(seed) => crate::rng::stream(seed, &["antonym", &instance.id]).random_range(0..options.len()),
    };
    let replacement = match_case(words[first], &options[pick]);

    let entities = &instance.annotations.compared_entities;
    if entities.len() != 2 {
        return Err(fail(format!("expected two compared entities, found {}", entities.len())));
    }
    let entity_text = |set: &BTreeSet<usize>| {
        let toks: Vec<_> = set.iter().map(|&i| instance.question[i].clone()).collect();
        text::layout(&toks)
    };
    let names = [entity_text(&entities[0]), entity_text(&entities[1])];
    let golds: Vec<String> = instance.gold_texts().iter().map(|g| normalize_answer(g)).collect();
    let gold_entity = (0..2)
        .find(|&e| golds.contains(&normalize_answer(&names[e])))
        .ok_or_else(|| fail("gold answer matches neither compared entity".into()))?;
    let other = &names[1 - gold_entity];
    let new_gold = instance
        .anchor_answer(other)
        .ok_or_else(|| fail(format!("entity {other:?} not found in context")))?;

    let mut perturbed = instance.clone();
    perturbed.id = cf_id(&instance.id);
    perturbed.question = splice_tokens(&instance.question, first..last + 1, &replacement);
    perturbed.question_text = text::layout(&perturbed.question);
    let new_len = perturbed.question.len() - (instance.question.len() - (last + 1 - first));
    let delta = new_len as isize - (last + 1 - first) as isize;
    let a = &mut perturbed.annotations;
    a.comparison_operator = (first..first + new_len).collect();
    a.compared_entities = entities.iter().map(|s| shift_set(s, last + 1, delta)).collect();
    a.value_tokens = shift_set(&a.value_tokens, last + 1, delta);
    a.verb_tokens = shift_set(&a.verb_tokens, last + 1, delta);
    perturbed.gold_answers = vec![new_gold];
    perturbed.validate()?;

    Ok(CFPair {
        original: instance.clone(),
        perturbed,
        perturbation: Perturbation::AntonymSwap,
        distribution_tag: table.distribution_tag,
        replaced_operator: Some((surface, options[pick].clone())),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    GoldUnchanged,
    OriginalAnswerMissing,
    PerturbedGoldMissing,
    ContextChanged,
    QuestionChangedOutsideOperator,
    InvalidInstance(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GoldUnchanged => f.write_str("gold answer unchanged"),
            Violation::OriginalAnswerMissing => f.write_str("original answer missing from perturbed context"),
            Violation::PerturbedGoldMissing => f.write_str("perturbed gold absent from perturbed context"),
            Violation::ContextChanged => f.write_str("context changed"),
            Violation::QuestionChangedOutsideOperator => f.write_str("question changed outside the operator"),
            Violation::InvalidInstance(m) => write!(f, "invalid instance: {m}"),
        }
    }
}

fn occurs(instance: &RCInstance, answer: &str) -> bool {
    let toks = text::tokenize(answer);
    let words: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
    instance.find_phrase(&words, false).is_some()
}

/// All violated pair requirements; empty means the pair is valid.
pub fn validate_cf(pair: &CFPair) -> Vec<Violation> {
    let mut out = Vec::new();
    for inst in [&pair.original, &pair.perturbed] {
        if let Err(e) = inst.validate() {
            out.push(Violation::InvalidInstance(e.to_string()));
        }
    }
    let orig: BTreeSet<String> = pair.original.gold_texts().iter().map(|g| normalize_answer(g)).collect();
    if pair
        .perturbed
        .gold_texts()
        .iter()
        .any(|g| orig.contains(&normalize_answer(g)))
    {
        out.push(Violation::GoldUnchanged);
    }
    if !pair.original.gold_texts().iter().any(|g| occurs(&pair.perturbed, g)) {
        out.push(Violation::OriginalAnswerMissing);
    }
    if !pair.perturbed.gold_texts().iter().all(|g| occurs(&pair.perturbed, g)) {
        out.push(Violation::PerturbedGoldMissing);
    }
    if pair.perturbation == Perturbation::AntonymSwap {
        if pair.original.context != pair.perturbed.context {
            out.push(Violation::ContextChanged);
        }
        let a = pair.original.question_words();
        let b = pair.perturbed.question_words();
        let ops = (
            &pair.original.annotations.comparison_operator,
            &pair.perturbed.annotations.comparison_operator,
        );
        let same_outside = match (ops.0.first(), ops.0.last(), ops.1.last()) {
            (Some(&s), Some(&e), Some(&pe)) => {
                a[..s] == b[..s.min(b.len())] && a.get(e + 1..) == b.get(pe + 1..)
            }
            _ => false,
        };
        if !same_outside {
            out.push(Violation::QuestionChangedOutsideOperator);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub id: String,
    pub original_prediction: String,
    pub perturbed_prediction: String,
    pub original_correct: bool,
    pub perturbed_correct: bool,
}

impl PairOutcome {
    pub fn both_correct(&self) -> bool {
        self.original_correct && self.perturbed_correct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfAccuracy {
    pub original: EvalResult,
    pub perturbed: EvalResult,
    pub both_correct: f64,
    pub pairs: Vec<PairOutcome>,
}

/// Score a model on originals and their counterfactual twins.
pub fn cf_accuracy(gateway: &dyn ModelGateway, pairs: &[CFPair]) -> Result<CfAccuracy> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no counterfactual pairs".into()));
    }
    let run = |p: &CFPair| -> Result<(PairOutcome, [f64; 2])> {
        let o = predict(gateway, &p.original)?.predicted_span.text;
        let c = predict(gateway, &p.perturbed)?.predicted_span.text;
        let og = p.original.gold_texts();
        let cg = p.perturbed.gold_texts();
        Ok((
            PairOutcome {
                id: p.original.id.clone(),
                original_correct: exact_match(&o, &og)?,
                perturbed_correct: exact_match(&c, &cg)?,
                original_prediction: o.clone(),
                perturbed_prediction: c.clone(),
            },
            [token_f1(&o, &og)?, token_f1(&c, &cg)?],
        ))
    };
    let results: Vec<_> = if gateway.concurrent_safe() {
        pairs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        pairs.iter().map(run).collect::<Result<_>>()?
    };
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&(PairOutcome, [f64; 2])) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(CfAccuracy {
        original: EvalResult {
            f1: mean(&|r| r.1[0]),
            exact_match: mean(&|r| r.0.original_correct as u8 as f64),
            n_instances: pairs.len(),
        },
        perturbed: EvalResult {
            f1: mean(&|r| r.1[1]),
            exact_match: mean(&|r| r.0.perturbed_correct as u8 as f64),
            n_instances: pairs.len(),
        },
        both_correct: mean(&|r| r.0.both_correct() as u8 as f64),
        pairs: results.into_iter().map(|r| r.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{annotate_question, filter_comparison, RuleVerbTagger, SurfaceEntityMatcher};
    use crate::gateway::OracleModel;
    use crate::types::InstanceBuilder;

    fn film(op: &str, answer: &str) -> RCInstance {
        let q = format!("Which film came out {op}, Blind Shaft or The Mask Of Fu Manchu?");
        let inst = InstanceBuilder::new("film", q)
            .sentence("Blind Shaft is a 2003 film about con artists in China.", true, "Blind Shaft")
            .sentence("The Mask Of Fu Manchu is a 1932 pre-Code adventure film.", true, "The Mask Of Fu Manchu")
            .answer(answer)
            .build()
            .unwrap();
        let inst = filter_comparison(vec![inst], &ComparativeLexicon::default()).remove(0);
        annotate_question(&inst, &SurfaceEntityMatcher, &RuleVerbTagger).unwrap()
    }

    #[test]
    fn earlier_becomes_later_with_flipped_gold() {
        let pair = perturb_comparison(&film("earlier", "The Mask Of Fu Manchu"), &AntonymTable::in_distribution()).unwrap();
        assert_eq!(
            pair.perturbed.question_text,
            "Which film came out later, Blind Shaft or The Mask Of Fu Manchu?"
        );
        assert_eq!(pair.perturbed.gold_texts(), ["Blind Shaft"]);
        assert_eq!(pair.perturbed.id, "film-cf");
        assert!(validate_cf(&pair).is_empty());
    }

    #[test]
    fn ood_first_becomes_less_recently() {
        let pair = perturb_comparison(&film("first", "The Mask Of Fu Manchu"), &AntonymTable::out_of_distribution()).unwrap();
        assert_eq!(
            pair.perturbed.question_text,
            "Which film came out less recently, Blind Shaft or The Mask Of Fu Manchu?"
        );
        assert_eq!(pair.perturbed.gold_texts(), ["Blind Shaft"]);
        let ents = &pair.perturbed.annotations.compared_entities;
        let words = pair.perturbed.question_words();
        assert_eq!(words[*ents[0].first().unwrap()], "Blind");
        assert!(validate_cf(&pair).is_empty());
    }

    #[test]
    fn double_swap_restores_original() {
        let orig = film("earlier", "The Mask Of Fu Manchu");
        let t = AntonymTable::in_distribution();
        let once = perturb_comparison(&orig, &t).unwrap();
        let twice = perturb_comparison(&once.perturbed, &t).unwrap();
        assert_eq!(twice.perturbed, orig);
    }

    #[test]
    fn missing_operator_rejected() {
        let t = AntonymTable {
            entries: BTreeMap::from([("older".to_string(), vec!["younger".to_string()])]),
            distribution_tag: DistributionTag::InDistribution,
        };
        assert!(perturb_comparison(&film("earlier", "Blind Shaft"), &t).is_err());
    }

    #[test]
    fn edited_context_is_flagged() {
        let mut pair = perturb_comparison(&film("earlier", "The Mask Of Fu Manchu"), &AntonymTable::in_distribution()).unwrap();
        pair.perturbed.context.pop();
        pair.perturbed.gold_answers[0].sentence_index = 0;
        let v = validate_cf(&pair);
        assert!(v.contains(&Violation::ContextChanged));
    }

    #[test]
    fn tables_are_consistent_with_lexicon() {
        let lex = ComparativeLexicon::default();
        AntonymTable::in_distribution().validate(&lex).unwrap();
        AntonymTable::out_of_distribution().validate(&lex).unwrap();
    }

    #[test]
    fn seeded_choice_is_stable() {
        let orig = film("older", "The Mask Of Fu Manchu");
        let t = AntonymTable::out_of_distribution();
        let a = perturb_comparison_with(&orig, &t, ReplacementChoice::Seeded(3)).unwrap();
        let b = perturb_comparison_with(&orig, &t, ReplacementChoice::Seeded(3)).unwrap();
        assert_eq!(a, b);
        assert!(perturb_comparison_with(&orig, &t, ReplacementChoice::Index(9)).is_err());
    }

    #[test]
    fn oracle_is_perfect_on_pairs() {
        let pair = perturb_comparison(&film("earlier", "The Mask Of Fu Manchu"), &AntonymTable::in_distribution()).unwrap();
        let acc = cf_accuracy(&OracleModel, &[pair]).unwrap();
        assert_eq!(acc.original.f1, 1.0);
        assert_eq!(acc.perturbed.f1, 1.0);
        assert_eq!(acc.both_correct, 1.0);
    }
}
