//! Small bundled corpora for tests, demos and calibration runs.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{
    annotate_question, filter_comparison, filter_coref_answer_in_cluster, ComparativeLexicon, RuleVerbTagger,
    SurfaceEntityMatcher,
};
use crate::counterfactual::{pairs_from_records, read_cf_records, CFPair};
use crate::error::Result;
use crate::types::{InstanceBuilder, RCInstance, Skill};

pub const CORPUS_JSONL: &str = include_str!("../fixtures/corpus.jsonl");
pub const COREF_CF_JSONL: &str = include_str!("../fixtures/coref_cf.jsonl");
pub const HEURISTIC_EXPECTED_JSON: &str = include_str!("../fixtures/heuristic_expected.json");

struct Coref {
    id: &'static str,
    question: &'static str,
    context: &'static str,
    answer: &'static str,
    mentions: &'static [&'static str],
}

const COREF: &[Coref] = &[
    Coref {
        id: "coref-01",
        question: "Who was born in Hawaii?",
        context: "Barack Obama was the 44th president of the US. He was born in Hawaii.",
        answer: "Barack Obama",
        mentions: &["Barack Obama", "He"],
    },
    Coref {
        id: "coref-02",
        question: "What is the last name of the person who had an aunt in Auschwitz?",
        context: "Górecki said of the work, I had a grandfather who was in Dachau, an aunt in Auschwitz.",
        answer: "Górecki",
        mentions: &["Górecki", "I"],
    },
    Coref {
        id: "coref-03",
        question: "Who founded the bakery on Elm Street?",
        context: "Maria Lopez moved to Texas in 1990. She founded the bakery on Elm Street.",
        answer: "Maria Lopez",
        mentions: &["Maria Lopez", "She"],
    },
    Coref {
        id: "coref-04",
        question: "Who painted the portrait of the queen?",
        context: "Thomas Hale trained in London for ten years. He painted the portrait of the queen.",
        answer: "Thomas Hale",
        mentions: &["Thomas Hale", "He"],
    },
    Coref {
        id: "coref-05",
        question: "Who wrote the letter to the mayor?",
        context: "Elena Petrova ran the city library in Moscow. She wrote the letter to the mayor.",
        answer: "Elena Petrova",
        mentions: &["Elena Petrova", "She"],
    },
    Coref {
        id: "coref-06",
        question: "Who scored the winning goal?",
        context: "Samuel Eto joined the club in 2004. He scored the winning goal.",
        answer: "Samuel Eto",
        mentions: &["Samuel Eto", "He"],
    },
    Coref {
        id: "coref-07",
        question: "Who discovered the comet?",
        context: "Caroline Herschel worked with her brother in England. She discovered the comet.",
        answer: "Caroline Herschel",
        mentions: &["Caroline Herschel", "She"],
    },
    Coref {
        id: "coref-08",
        question: "Who built the bridge over the river?",
        context: "John Roebling designed many bridges in Ohio. He built the bridge over the river.",
        answer: "John Roebling",
        mentions: &["John Roebling", "He"],
    },
    Coref {
        id: "coref-09",
        question: "Who signed the treaty?",
        context: "Henry Clay led the delegation from Kentucky. He signed the treaty.",
        answer: "Henry Clay",
        mentions: &["Henry Clay", "He"],
    },
    Coref {
        id: "coref-10",
        question: "Who opened the first school in the village?",
        context: "Grace Okafor returned to Nigeria after college. She opened the first school in the village.",
        answer: "Grace Okafor",
        mentions: &["Grace Okafor", "She"],
    },
];

struct Comparison {
    id: &'static str,
    question: &'static str,
    first: (&'static str, &'static str),
    second: (&'static str, &'static str),
    answer: &'static str,
}

const COMPARISON: &[Comparison] = &[
    Comparison {
        id: "cmp-01",
        question: "Which film came out more recently, Blind Shaft or The Mask Of Fu Manchu?",
        first: ("Blind Shaft", "Blind Shaft is a 2003 film about a pair of con artists in northern China."),
        second: ("The Mask Of Fu Manchu", "The Mask Of Fu Manchu is a 1932 adventure film directed by Charles Brabin."),
        answer: "Blind Shaft",
    },
    Comparison {
        id: "cmp-02",
        question: "Who was born earlier, Emma Bull or Virginia Woolf?",
        first: ("Emma Bull", "Emma Bull is an American science fiction author born in 1954."),
        second: ("Virginia Woolf", "Virginia Woolf was an English writer born in 1882."),
        answer: "Virginia Woolf",
    },
    Comparison {
        id: "cmp-03",
        question: "Which band was formed first, Oasis or Blur?",
        first: ("Oasis", "Oasis were an English rock band formed in Manchester in 1991."),
        second: ("Blur", "Blur are an English rock band formed in London in 1988."),
        answer: "Blur",
    },
    Comparison {
        id: "cmp-04",
        question: "Who is older, Serena Williams or Venus Williams?",
        first: ("Serena Williams", "Serena Williams was born on September 26, 1981."),
        second: ("Venus Williams", "Venus Williams was born on June 17, 1980."),
        answer: "Venus Williams",
    },
    Comparison {
        id: "cmp-05",
        question: "Which magazine was started later, Rolling Stone or Vogue?",
        first: ("Rolling Stone", "Rolling Stone was founded in San Francisco in 1967."),
        second: ("Vogue", "Vogue was founded in New York in 1892."),
        answer: "Rolling Stone",
    },
    Comparison {
        id: "cmp-06",
        question: "Who is younger, Lionel Messi or Cristiano Ronaldo?",
        first: ("Lionel Messi", "Lionel Messi was born in Rosario in 1987."),
        second: ("Cristiano Ronaldo", "Cristiano Ronaldo was born in Funchal in 1985."),
        answer: "Lionel Messi",
    },
    Comparison {
        id: "cmp-07",
        question: "Which university was founded earlier, Harvard University or Yale University?",
        first: ("Harvard University", "Harvard University was founded in 1636 in Cambridge."),
        second: ("Yale University", "Yale University was founded in 1701 in New Haven."),
        answer: "Harvard University",
    },
    Comparison {
        id: "cmp-08",
        question: "Which album was released more recently, Thriller or Purple Rain?",
        first: ("Thriller", "Thriller is the sixth studio album by Michael Jackson, released in 1982."),
        second: ("Purple Rain", "Purple Rain is a 1984 album by Prince."),
        answer: "Purple Rain",
    },
    Comparison {
        id: "cmp-09",
        question: "Who died later, Isaac Newton or Gottfried Leibniz?",
        first: ("Isaac Newton", "Isaac Newton died in London in 1727."),
        second: ("Gottfried Leibniz", "Gottfried Leibniz died in Hanover in 1716."),
        answer: "Isaac Newton",
    },
    Comparison {
        id: "cmp-10",
        question: "Which bridge was opened first, Tower Bridge or the Brooklyn Bridge?",
        first: ("Tower Bridge", "Tower Bridge in London was opened in 1894."),
        second: ("Brooklyn Bridge", "The Brooklyn Bridge in New York was opened in 1883."),
        answer: "Brooklyn Bridge",
    },
];

/// Mark comparison instances and fill their question annotations.
pub fn prepare_comparison(instances: Vec<RCInstance>) -> Result<Vec<RCInstance>> {
    filter_comparison(instances, &ComparativeLexicon::default())
        .iter()
        .map(|i| annotate_question(i, &SurfaceEntityMatcher, &RuleVerbTagger))
        .collect()
}

/// The ten coreference instances, each with its relevant cluster set.
pub fn coreference_instances() -> Result<Vec<RCInstance>> {
    let built = COREF
        .iter()
        .map(|c| {
            InstanceBuilder::new(c.id, c.question)
                .paragraph(c.context, true, "p0")
                .answer(c.answer)
                .cluster(c.mentions)
                .build()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(filter_coref_answer_in_cluster(built, None))
}

/// The ten annotated comparison instances.
pub fn comparison_instances() -> Result<Vec<RCInstance>> {
    let built = COMPARISON
        .iter()
        .map(|c| {
            InstanceBuilder::new(c.id, c.question)
                .sentence(c.first.1, true, c.first.0)
                .sentence(c.second.1, true, c.second.0)
                .answer(c.answer)
                .build()
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_comparison(built)
}

/// Coreference instances followed by comparison instances.
pub fn corpus() -> Result<Vec<RCInstance>> {
    let mut all = coreference_instances()?;
    all.extend(comparison_instances()?);
    Ok(all)
}

/// The bundled cluster-insertion counterfactuals of the coreference set.
pub fn coref_cf_pairs() -> Result<Vec<CFPair>> {
    let records = read_cf_records(COREF_CF_JSONL.as_bytes(), "coref_cf.jsonl".as_ref())?;
    pairs_from_records(&records, &coreference_instances()?)
}

const FIRST_NAMES: &[&str] = &[
    "Anna", "Boris", "Clara", "Daniel", "Elif", "Farah", "Goran", "Hana", "Ivan", "Julia", "Kenji", "Lena",
    "Marco", "Nadia", "Omar", "Priya", "Rafael", "Sofia", "Tomas", "Yara",
];
const LAST_NAMES: &[&str] = &[
    "Abbott", "Baker", "Castillo", "Dvorak", "Eriksen", "Fischer", "Garcia", "Horvat", "Ito", "Jensen", "Kowalski",
    "Lindqvist", "Moreau", "Novak", "Okonkwo", "Petrov", "Quinn", "Rossi", "Silva", "Tanaka",
];
const PLACES: &[&str] = &[
    "Lisbon", "Oslo", "Krakow", "Lagos", "Lima", "Hanoi", "Quebec", "Bergen", "Porto", "Tbilisi",
];
const TITLE_ADJ: &[&str] = &["Silver", "Broken", "Hidden", "Crimson", "Silent", "Golden", "Frozen", "Distant"];
const TITLE_NOUN: &[&str] = &["River", "Crown", "Garden", "Harbor", "Lantern", "Mirror", "Orchard", "Tower"];
const DEEDS: &[&str] = &[
    "repaired the old clock",
    "planted the oak trees",
    "wrote the town anthem",
    "trained the young horses",
    "painted the chapel ceiling",
    "rescued the stranded sailors",
];
const FILLERS: &[&str] = &[
    "The winter that year was unusually mild.",
    "Local newspapers covered the story for weeks.",
    "Many visitors still come to see the place.",
    "The archive keeps several letters from that time.",
];

fn person<R: Rng>(rng: &mut R) -> String {
    format!("{} {}", FIRST_NAMES.choose(rng).unwrap(), LAST_NAMES.choose(rng).unwrap())
}

fn two_distinct<R: Rng>(rng: &mut R, make: impl Fn(&mut R) -> String) -> (String, String) {
    let a = make(rng);
    loop {
        let b = make(rng);
        if b != a && !b.contains(&a) && !a.contains(&b) {
            return (a, b);
        }
    }
}

fn synthetic_coref<R: Rng>(id: String, rng: &mut R) -> Result<RCInstance> {
    let name = person(rng);
    let female = rng.random_bool(0.5);
    let pron = if female { "She" } else { "He" };
    let deed = DEEDS.choose(rng).unwrap();
    let place = PLACES.choose(rng).unwrap();
    let year = rng.random_range(1850..2000);
    let filler = FILLERS.choose(rng).unwrap();
    let context = format!("{name} moved to {place} in {year}. {filler} {pron} {deed}.");
    let inst = InstanceBuilder::new(id, format!("Who {deed}?"))
        .paragraph(&context, true, "p0")
        .answer(name.clone())
        .cluster(&[name.as_str(), pron])
        .build()?;
    Ok(filter_coref_answer_in_cluster(vec![inst], None).remove(0))
}

fn synthetic_comparison<R: Rng>(id: String, rng: &mut R) -> Result<RCInstance> {
    let (y1, y2) = loop {
        let (a, b) = (rng.random_range(1900..2020), rng.random_range(1900..2020));
        if a != b {
            break (a, b);
        }
    };
    let films = rng.random_bool(0.5);
    let (a, b) = if films {
        two_distinct(rng, |r| {
            format!("{} {}", TITLE_ADJ.choose(r).unwrap(), TITLE_NOUN.choose(r).unwrap())
        })
    } else {
        two_distinct(rng, person)
    };
    let ops: &[&str] = if films {
        &["earlier", "later", "first", "more recently"]
    } else {
        &["older", "younger"]
    };
    let op = *ops.choose(rng).unwrap();
    let first_is_older = y1 < y2;
    let pick_first = match op {
        "earlier" | "first" | "older" => first_is_older,
        _ => !first_is_older,
    };
    let answer = if pick_first { a.clone() } else { b.clone() };
    let place = PLACES.choose(rng).unwrap();
    let (question, s1, s2) = if films {
        let director = person(rng);
        (
            format!("Which film came out {op}, {a} or {b}?"),
            format!("{a} is a {y1} film directed by {director}."),
            format!("{b} is a {y2} drama film shot in {place}."),
        )
    } else {
        (
            format!("Who is {op}, {a} or {b}?"),
            format!("{a} is a painter who was born in {y1}."),
            format!("{b} is an architect from {place} who was born in {y2}."),
        )
    };
    let inst = InstanceBuilder::new(id, question)
        .sentence(&s1, true, &a)
        .sentence(&s2, true, &b)
        .answer(answer)
        .build()?;
    Ok(prepare_comparison(vec![inst])?.remove(0))
}

/// `n` template-generated instances, alternating coreference and comparison.
pub fn synthetic_corpus(n: usize, seed: u64) -> Result<Vec<RCInstance>> {
    (0..n)
        .map(|i| {
            let id = format!("syn-{i:04}");
            let mut rng = crate::rng::stream(seed, &["synthetic", &id]);
            let inst = if i % 2 == 0 {
                synthetic_coref(id, &mut rng)?
            } else {
                synthetic_comparison(id, &mut rng)?
            };
            debug_assert!(inst.skill != Skill::Other);
            Ok(inst)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::unified::write_instances;
    use crate::partition::skill_partition;

    #[test]
    fn bundled_corpus_file_matches_builders() {
        let mut buf = Vec::new();
        write_instances(&mut buf, &corpus().unwrap()).unwrap();
        let generated = String::from_utf8(buf).unwrap();
        if std::env::var_os("READCHECK_WRITE_FIXTURES").is_some() {
            std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus.jsonl"), &generated).unwrap();
        }
        assert_eq!(generated, CORPUS_JSONL);
    }

    #[test]
    fn every_fixture_has_a_skill_partition() {
        let all = corpus().unwrap();
        assert_eq!(all.len(), 20);
        for inst in &all {
            let p = skill_partition(inst).unwrap();
            p.validate(inst).unwrap();
        }
    }

    #[test]
    fn synthetic_instances_are_valid_and_reproducible() {
        let a = synthetic_corpus(40, 3).unwrap();
        assert_eq!(a, synthetic_corpus(40, 3).unwrap());
        for inst in &a {
            inst.validate().unwrap();
            skill_partition(inst).unwrap();
        }
    }

    #[test]
    fn heuristic_answers_match_frozen() {
        use crate::heuristic::{heuristic_answer, HeuristicConfig, HeuristicPlugins, SelectionStrategy};
        use std::collections::BTreeMap;
        let plugins = HeuristicPlugins::default();
        let mut got: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for s in SelectionStrategy::ALL {
            for inst in corpus().unwrap() {
                let a = heuristic_answer(&inst, &HeuristicConfig::with_strategy(s), &plugins).unwrap();
                got.entry(s.name().to_string()).or_default().insert(inst.id.clone(), a);
            }
        }
        if std::env::var_os("READCHECK_WRITE_FIXTURES").is_some() {
            let text = serde_json::to_string_pretty(&got).unwrap() + "\n";
            std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/heuristic_expected.json"), text).unwrap();
        }
        let frozen: BTreeMap<String, BTreeMap<String, String>> = serde_json::from_str(HEURISTIC_EXPECTED_JSON).unwrap();
        assert_eq!(got, frozen);
    }

    #[test]
    fn coref_counterfactuals_load() {
        assert_eq!(coref_cf_pairs().unwrap().len(), 10);
    }
}
