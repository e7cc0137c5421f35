//! Comparison-question selection and automatic question annotation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::text;
use crate::types::{RCInstance, Skill};

use super::lexicon::ComparativeLexicon;

/// Finds the entities being compared in a question.
pub trait EntityMatcher: Send + Sync {
    /// Disjoint question-token index sets, one per entity, in question order.
    fn compared_entities(&self, instance: &RCInstance) -> Vec<BTreeSet<usize>>;
}

/// Tags verb tokens of a question.
pub trait PosTagger: Send + Sync {
    fn verb_positions(&self, words: &[&str]) -> BTreeSet<usize>;
}

/// Maximal capitalized question substrings that also occur verbatim
/// (case-folded) in the context.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurfaceEntityMatcher;

impl EntityMatcher for SurfaceEntityMatcher {
    fn compared_entities(&self, instance: &RCInstance) -> Vec<BTreeSet<usize>> {
        let words = instance.question_words();
        let op = &instance.annotations.comparison_operator;
        let mut out = Vec::new();
        let mut i = 1;
        while i < words.len() {
            let starts_entity = text::is_capitalized(words[i])
                && !op.contains(&i)
                && !text::is_pronoun(words[i]);
            if !starts_entity {
                i += 1;
                continue;
            }
            let mut best = None;
            let mut j = i;
            while j < words.len() && !op.contains(&j) {
                if instance.find_phrase(&words[i..=j], false).is_none() {
                    break;
                }
                best = Some(j);
                j += 1;
            }
            // trim trailing punctuation and function words
            let mut end = match best {
                Some(e) => e,
                None => {
                    i += 1;
                    continue;
                }
            };
            while end > i && (text::is_punct_token(words[end]) || text::is_function_word(words[end])) {
                end -= 1;
            }
            let single_function_word = end == i && text::is_function_word(words[i]);
            if !single_function_word && !text::is_punct_token(words[i]) {
                out.push((i..=end).collect());
            }
            i = end + 1;
        }
        out
    }
}

/// Lexicon-and-suffix verb tagger; a particle right after a verb
/// ("came out") is tagged with it.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleVerbTagger;

const VERBS: &[&str] = &[
    "is", "was", "are", "were", "be", "been", "being", "am", "has", "have", "had", "do", "does",
    "did", "come", "came", "comes", "coming", "born", "die", "died", "release", "released",
    "found", "founded", "establish", "established", "direct", "directed", "publish", "published",
    "write", "wrote", "written", "form", "formed", "make", "made", "open", "opened", "start",
    "started", "begin", "began", "begun", "create", "created", "produce", "produced", "build",
    "built", "win", "won", "play", "played", "live", "lived", "marry", "married", "debut",
    "debuted", "premiere", "premiered", "air", "aired", "become", "became", "go", "went", "get",
    "got", "take", "took", "taken", "leave", "left", "appear", "appeared", "serve", "served",
    "compose", "composed", "record", "recorded", "launch", "launched", "join", "joined",
];

const PARTICLES: &[&str] = &["out", "up", "off", "down", "in", "on"];

const NOT_VERBS: &[&str] = &["need", "bed", "red", "seed", "feed", "speed", "hundred"];

impl PosTagger for RuleVerbTagger {
    fn verb_positions(&self, words: &[&str]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for (i, w) in words.iter().enumerate() {
            if text::is_capitalized(w) && i > 0 {
                continue;
            }
            let k = text::key(w);
            let suffix_verb = k.len() > 4 && k.ends_with("ed") && !NOT_VERBS.contains(&k.as_str());
            if VERBS.contains(&k.as_str()) || suffix_verb {
                out.insert(i);
                if let Some(next) = words.get(i + 1) {
                    if PARTICLES.contains(&text::key(next).as_str()) {
                        out.insert(i + 1);
                    }
                }
            }
        }
        out
    }
}

/// Keep questions containing a comparative operator, marking them as
/// comparison instances with the operator's token positions.
pub fn filter_comparison(instances: Vec<RCInstance>, lexicon: &ComparativeLexicon) -> Vec<RCInstance> {
    instances
        .into_iter()
        .filter_map(|mut inst| {
            let range = lexicon.find(&inst.question_words())?;
            let op: BTreeSet<usize> = range.collect();
            let a = &mut inst.annotations;
            for set in a.compared_entities.iter_mut() {
                set.retain(|i| !op.contains(i));
            }
            a.compared_entities.retain(|s| !s.is_empty());
            a.value_tokens.retain(|i| !op.contains(i));
            a.verb_tokens.retain(|i| !op.contains(i));
            a.comparison_operator = op;
            inst.skill = Skill::Comparison;
            Some(inst)
        })
        .collect()
}

/// Fill compared entities, value tokens and verb tokens of a comparison
/// question. Instances with fewer than two entities come back flagged
/// `unannotatable`.
pub fn annotate_question(
    instance: &RCInstance,
    entity_matcher: &dyn EntityMatcher,
    pos_tagger: &dyn PosTagger,
) -> Result<RCInstance> {
    if instance.skill != Skill::Comparison {
        return Err(Error::instance(&instance.id, "annotation requires a comparison question"));
    }
    let mut inst = instance.clone();
    let words = inst.question_words();
    let op = inst.annotations.comparison_operator.clone();
    let mut taken = op.clone();

    let mut entities = Vec::new();
    for e in entity_matcher.compared_entities(&inst) {
        let e: BTreeSet<usize> = e.into_iter().filter(|i| !taken.contains(i) && *i < words.len()).collect();
        if !e.is_empty() {
            taken.extend(&e);
            entities.push(e);
        }
    }
    let values: BTreeSet<usize> = (0..words.len())
        .filter(|i| !taken.contains(i) && text::is_value_like(words[*i]))
        .collect();
    taken.extend(&values);
    let verbs: BTreeSet<usize> = pos_tagger
        .verb_positions(&words)
        .into_iter()
        .filter(|i| !taken.contains(i) && *i < words.len())
        .collect();

    inst.annotations.unannotatable = entities.len() < 2;
    inst.annotations.compared_entities = entities;
    inst.annotations.value_tokens = values;
    inst.annotations.verb_tokens = verbs;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::InstanceBuilder;

    fn blind_shaft(question: &str) -> RCInstance {
        InstanceBuilder::new("bs", question)
            .sentence(
                "Blind Shaft is a 2003 film about a pair of brutal con artists operating in the illegal coal mines of present day northern China.",
                true,
                "Blind Shaft",
            )
            .sentence(
                "The Mask Of Fu Manchu is a 1932 pre-Code adventure film directed by Charles Brabin.",
                true,
                "The Mask Of Fu Manchu",
            )
            .answer("The Mask Of Fu Manchu")
            .build()
            .unwrap()
    }

    fn idx(words: &[&str], inst: &RCInstance) -> BTreeSet<usize> {
        let q = inst.question_words();
        words.iter().map(|w| q.iter().position(|x| x == w).unwrap()).collect()
    }

    #[test]
    fn comparison_filter_examples() {
        let lex = ComparativeLexicon::default();
        let a = blind_shaft("Which film came out earlier, Blind Shaft or The Mask Of Fu Manchu?");
        let b = blind_shaft("Who was born in Hawaii?");
        let c = blind_shaft("Which film came out more recently, Blind Shaft or The Mask Of Fu Manchu?");
        let kept = filter_comparison(vec![a, b, c], &lex);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].annotations.comparison_operator, idx(&["earlier"], &kept[0]));
        assert_eq!(kept[1].annotations.comparison_operator, idx(&["more", "recently"], &kept[1]));
        assert!(kept.iter().all(|i| i.skill == Skill::Comparison));
        let again = filter_comparison(kept.clone(), &lex);
        assert_eq!(again, kept);
    }

    #[test]
    fn annotation_of_the_film_question() {
        let lex = ComparativeLexicon::default();
        let q = blind_shaft("Which film came out earlier, Blind Shaft or The Mask Of Fu Manchu?");
        let q = filter_comparison(vec![q], &lex).remove(0);
        let a = annotate_question(&q, &SurfaceEntityMatcher, &RuleVerbTagger).unwrap();
        assert_eq!(
            a.annotations.compared_entities,
            vec![
                idx(&["Blind", "Shaft"], &a),
                idx(&["The", "Mask", "Of", "Fu", "Manchu"], &a)
            ]
        );
        assert_eq!(a.annotations.verb_tokens, idx(&["came", "out"], &a));
        assert!(a.annotations.value_tokens.is_empty());
        assert!(!a.annotations.unannotatable);
        assert!(a.annotations.is_disjoint());
        a.validate().unwrap();
    }

    #[test]
    fn single_entity_is_flagged() {
        let lex = ComparativeLexicon::default();
        let q = blind_shaft("Did Blind Shaft come out earlier than 1990?");
        let q = filter_comparison(vec![q], &lex).remove(0);
        let a = annotate_question(&q, &SurfaceEntityMatcher, &RuleVerbTagger).unwrap();
        assert!(a.annotations.unannotatable);
        assert_eq!(a.annotations.value_tokens, idx(&["1990"], &a));
    }

    #[test]
    fn non_comparison_rejected() {
        let q = blind_shaft("Who was born in Hawaii?");
        assert!(annotate_question(&q, &SurfaceEntityMatcher, &RuleVerbTagger).is_err());
    }
}
