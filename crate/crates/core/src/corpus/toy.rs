//! Synthetic template grammar with attribute-bearing slots.
//!
//! Each sentence has the shape
//! `SUBJECT VERB the [ADJ] FOOD and the DRINKS ADVERB PUNCT`. Person number
//! lives in the subject, tense in the verb form, and sentiment in the verb,
//! the adjective, or both depending on the template. The food (NN) and drinks
//! (NNS) slots cancel in the person-number vote, and there is exactly one
//! finite verb, so the rule labelers recover every template label. Food,
//! drink and adverb are drawn from one content topic per sentence.
//! Sentiment adjectives follow a Zipf distribution so that small samples miss
//! the rare ones.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attributes::AttributeSchema;
use super::{LabeledCorpus, LabeledSentence};
use crate::error::{Error, Result};

type VerbForms = (&'static str, &'static str, &'static str);

const POSITIVE_VERBS: [VerbForms; 4] = [
    ("love", "loves", "loved"),
    ("enjoy", "enjoys", "enjoyed"),
    ("like", "likes", "liked"),
    ("adore", "adores", "adored"),
];
const NEGATIVE_VERBS: [VerbForms; 4] = [
    ("hate", "hates", "hated"),
    ("dislike", "dislikes", "disliked"),
    ("detest", "detests", "detested"),
    ("regret", "regrets", "regretted"),
];
const NEUTRAL_VERBS: [VerbForms; 4] = [
    ("order", "orders", "ordered"),
    ("try", "tries", "tried"),
    ("get", "gets", "got"),
    ("share", "shares", "shared"),
];
const POSITIVE_ADJECTIVES: [&str; 12] = [
    "great", "tasty", "fresh", "delicious", "lovely", "perfect", "excellent", "superb",
    "amazing", "wonderful", "fantastic", "splendid",
];
const NEGATIVE_ADJECTIVES: [&str; 12] = [
    "bad", "bland", "stale", "awful", "terrible", "greasy", "soggy", "cold", "horrible",
    "disgusting", "mediocre", "burnt",
];
/// (subject, takes third-person -s in the present)
const SINGULAR_SUBJECTS: [(&str, bool); 5] = [
    ("i", false),
    ("he", true),
    ("she", true),
    ("my friend", true),
    ("my husband", true),
];
const PLURAL_SUBJECTS: [&str; 5] = ["we", "they", "my friends", "my parents", "our kids"];
/// Content topics: (foods, drinks, adverbs) that co-occur in a sentence.
const TOPICS: [(&[&str], &[&str], &[&str]); 4] = [
    (&["pizza", "pasta"], &["wines", "sodas"], &["tonight"]),
    (&["burger", "steak"], &["beers", "sodas"], &["there"]),
    (&["salad", "soup"], &["juices", "teas"], &["today"]),
    (&["cake", "bread"], &["teas", "drinks"], &["again", "here"]),
];
const PUNCT: [&str; 2] = [".", "!"];

#[derive(Debug, Clone, Copy)]
enum Template {
    VerbSentiment,
    AdjectiveSentiment,
    Both,
}

fn zipf_index(rng: &mut impl Rng, n: usize) -> usize {
    let total: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for r in 1..=n {
        u -= 1.0 / r as f64;
        if u <= 0.0 {
            return r - 1;
        }
    }
    n - 1
}

/// Target labels for one synthetic sentence, as value names.
struct ToyLabels {
    positive: bool,
    past: bool,
    plural: bool,
}

fn realize(labels: &ToyLabels, rng: &mut impl Rng) -> Vec<&'static str> {
    let template = [Template::VerbSentiment, Template::AdjectiveSentiment, Template::Both]
        .choose(rng)
        .copied()
        .expect("nonempty");
    let mut out: Vec<&'static str> = Vec::with_capacity(12);
    let third_person = if labels.plural {
        out.extend(PLURAL_SUBJECTS.choose(rng).expect("nonempty").split(' '));
        false
    } else {
        let (subj, third) = SINGULAR_SUBJECTS.choose(rng).expect("nonempty");
        out.extend(subj.split(' '));
        *third
    };
    let verbs = match (template, labels.positive) {
        (Template::AdjectiveSentiment, _) => &NEUTRAL_VERBS,
        (_, true) => &POSITIVE_VERBS,
        (_, false) => &NEGATIVE_VERBS,
    };
    let (base, third, past) = *verbs.choose(rng).expect("nonempty");
    out.push(if labels.past {
        past
    } else if third_person {
        third
    } else {
        base
    });
    out.push("the");
    if !matches!(template, Template::VerbSentiment) {
        let adjectives = if labels.positive {
            &POSITIVE_ADJECTIVES
        } else {
            &NEGATIVE_ADJECTIVES
        };
        out.push(adjectives[zipf_index(rng, adjectives.len())]);
    }
    let (foods, drinks, adverbs) = TOPICS.choose(rng).expect("nonempty");
    out.push(foods.choose(rng).expect("nonempty"));
    out.push("and");
    out.push("the");
    out.push(drinks.choose(rng).expect("nonempty"));
    out.push(adverbs.choose(rng).expect("nonempty"));
    out.push(PUNCT.choose(rng).expect("nonempty"));
    out
}

fn supported(schema: &AttributeSchema) -> Result<()> {
    for spec in &schema.attributes {
        let allowed: &[&str] = match spec.name.as_str() {
            "sentiment" => &["positive", "negative"],
            "tense" => &["present", "past"],
            "person" => &["singular", "plural"],
            other => {
                return Err(Error::InvalidInput(format!(
                    "the synthetic grammar has no attribute `{other}`"
                )))
            }
        };
        let mut values = spec.values.clone();
        values.sort();
        let mut expected: Vec<String> = allowed.iter().map(|s| s.to_string()).collect();
        expected.sort();
        if values != expected {
            return Err(Error::InvalidInput(format!(
                "the synthetic grammar supports {allowed:?} for `{}`",
                spec.name
            )));
        }
    }
    Ok(())
}

/// `n` sentences cycling through every attribute combination of `schema`, so
/// each combination appears `n / combos` times (±1). Attributes missing from
/// the schema are drawn uniformly.
pub fn generate_toy_corpus(n: usize, schema: &AttributeSchema, seed: u64) -> Result<LabeledCorpus> {
    supported(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combos = schema.combinations();
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let combo = &combos[i % combos.len()];
        let pick = |name: &str, yes: &str, rng: &mut ChaCha8Rng| match schema.index_of(name) {
            Some(k) => schema.value_name(k, combo[k]) == yes,
            None => rng.random::<bool>(),
        };
        let labels = ToyLabels {
            positive: pick("sentiment", "positive", &mut rng),
            past: pick("tense", "past", &mut rng),
            plural: pick("person", "plural", &mut rng),
        };
        let tokens: Vec<String> = realize(&labels, &mut rng).into_iter().map(String::from).collect();
        sentences.push(LabeledSentence {
            text: tokens.join(" "),
            tokens,
            labels: combo.clone(),
        });
    }
    Ok(LabeledCorpus {
        schema: schema.clone(),
        sentences,
    })
}

/// Partial synonym table over the grammar's vocabulary, for EDA baselines.
pub fn toy_synonym_table() -> HashMap<String, Vec<String>> {
    let groups: &[&[&str]] = &[
        &["great", "excellent", "superb"],
        &["tasty", "delicious"],
        &["lovely", "wonderful", "splendid"],
        &["amazing", "fantastic"],
        &["bad", "awful", "horrible"],
        &["terrible", "disgusting"],
        &["stale", "soggy"],
        &["bland", "mediocre"],
        &["love", "adore"],
        &["loves", "adores"],
        &["loved", "adored"],
        &["hate", "detest"],
        &["hates", "detests"],
        &["hated", "detested"],
        &["sodas", "drinks"],
        &["today", "tonight"],
        &["here", "there"],
    ];
    let mut table = HashMap::new();
    for group in groups {
        for &w in group.iter() {
            let syns: Vec<String> = group.iter().filter(|&&s| s != w).map(|s| s.to_string()).collect();
            table.insert(w.to_string(), syns);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{relabel_accuracy, LexiconTagger, Vocabulary};

    #[test]
    fn one_per_combination() {
        let schema = AttributeSchema::toy();
        let c = generate_toy_corpus(8, &schema, 1).unwrap();
        let mut labels: Vec<_> = c.sentences.iter().map(|s| s.labels.clone()).collect();
        labels.sort();
        assert_eq!(labels, schema.combinations());
    }

    #[test]
    fn relabeling_agrees_with_templates() {
        let schema = AttributeSchema::toy();
        let c = generate_toy_corpus(2000, &schema, 3).unwrap();
        let acc = relabel_accuracy(&c, &LexiconTagger).unwrap();
        assert_eq!(acc.get("tense"), Some(&1.0));
        assert_eq!(acc.get("person"), Some(&1.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let schema = AttributeSchema::toy();
        let a = generate_toy_corpus(50, &schema, 9).unwrap();
        let b = generate_toy_corpus(50, &schema, 9).unwrap();
        let c = generate_toy_corpus(50, &schema, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn small_vocabulary() {
        let c = generate_toy_corpus(5000, &AttributeSchema::toy(), 0).unwrap();
        let toks: Vec<Vec<String>> = c.sentences.iter().map(|s| s.tokens.clone()).collect();
        let v = Vocabulary::build(&toks, 1).unwrap();
        assert!(v.len() <= 200, "{}", v.len());
        assert!(toks.iter().all(|t| t.len() <= 20));
    }

    #[test]
    fn subset_schema_and_unsupported() {
        let s = AttributeSchema::new(vec![("sentiment", &["negative", "positive"])]).unwrap();
        let c = generate_toy_corpus(10, &s, 0).unwrap();
        assert_eq!(c.sentences.len(), 10);
        assert!(generate_toy_corpus(4, &AttributeSchema::reviews(), 0).is_err());
    }

    #[test]
    fn synonyms_symmetric() {
        let t = toy_synonym_table();
        for (w, syns) in &t {
            for s in syns {
                assert!(t[s].contains(w));
            }
        }
    }
}
