//! Rule-based attribute labelers.

use serde::{Deserialize, Serialize};

use super::tagger::{PosTag, PosTaggedSentence};
use crate::error::{Error, Result};

pub const SINGULAR_PRONOUNS: [&str; 5] = ["i", "he", "she", "it", "myself"];
pub const PLURAL_PRONOUNS: [&str; 4] = ["we", "they", "themselves", "ourselves"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Present,
    Past,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonNumber {
    Singular,
    Plural,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Negative,
}

impl Tense {
    pub fn as_str(self) -> &'static str {
        match self {
            Tense::Present => "present",
            Tense::Past => "past",
        }
    }
}

impl PersonNumber {
    pub fn as_str(self) -> &'static str {
        match self {
            PersonNumber::Singular => "singular",
            PersonNumber::Plural => "plural",
            PersonNumber::Balanced => "balanced",
        }
    }
}

impl Sentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Negative => "negative",
        }
    }
}

/// Pure tense rule over verb counts. `None` on ties, including verbless input.
pub fn tense_from_counts(present: usize, past: usize) -> Option<Tense> {
    use std::cmp::Ordering::*;
    match present.cmp(&past) {
        Greater => Some(Tense::Present),
        Less => Some(Tense::Past),
        Equal => None,
    }
}

/// Present if VBP+VBZ outnumber VBD, past if the reverse, `None` on a tie.
pub fn label_tense(tagged: &PosTaggedSentence) -> Option<Tense> {
    let present = tagged.count(PosTag::Vbp) + tagged.count(PosTag::Vbz);
    tense_from_counts(present, tagged.count(PosTag::Vbd))
}

/// Singular and plural evidence: fixed pronoun lists plus NN / NNS tags, one
/// vote per occurrence.
pub fn person_evidence(tagged: &PosTaggedSentence) -> (usize, usize) {
    let mut singular = 0;
    let mut plural = 0;
    for (tok, tag) in tagged.tokens.iter().zip(&tagged.tags) {
        let tok = tok.as_str();
        if SINGULAR_PRONOUNS.contains(&tok) || *tag == PosTag::Nn {
            singular += 1;
        } else if PLURAL_PRONOUNS.contains(&tok) || *tag == PosTag::Nns {
            plural += 1;
        }
    }
    (singular, plural)
}

pub fn label_person_number(tagged: &PosTaggedSentence) -> PersonNumber {
    let (singular, plural) = person_evidence(tagged);
    use std::cmp::Ordering::*;
    match singular.cmp(&plural) {
        Greater => PersonNumber::Singular,
        Less => PersonNumber::Plural,
        Equal => PersonNumber::Balanced,
    }
}

/// 4–5 stars positive, 1–2 negative, 3 excluded (`None`).
pub fn label_sentiment(rating: i64) -> Result<Option<Sentiment>> {
    match rating {
        4 | 5 => Ok(Some(Sentiment::Positive)),
        1 | 2 => Ok(Some(Sentiment::Negative)),
        3 => Ok(None),
        other => Err(Error::InvalidInput(format!("rating {other} outside 1..=5"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tagger::LexiconTagger;
    use proptest::prelude::*;

    fn tagged(s: &str) -> PosTaggedSentence {
        LexiconTagger.tag_tokens(&crate::corpus::tokenize(s))
    }

    #[test]
    fn tense_examples() {
        assert_eq!(label_tense(&tagged("i loved it")), Some(Tense::Past));
        assert_eq!(label_tense(&tagged("they are friendly")), Some(Tense::Present));
        assert_eq!(label_tense(&tagged("nice place .")), None);
    }

    #[test]
    fn person_examples() {
        assert_eq!(label_person_number(&tagged("we stayed")), PersonNumber::Plural);
        assert_eq!(
            label_person_number(&tagged("she was a sweetheart")),
            PersonNumber::Singular
        );
        assert_eq!(
            label_person_number(&tagged("the dog saw the cats")),
            PersonNumber::Balanced
        );
        assert_eq!(label_person_number(&tagged("")), PersonNumber::Balanced);
    }

    #[test]
    fn you_is_not_evidence() {
        assert_eq!(label_person_number(&tagged("you are")), PersonNumber::Balanced);
    }

    #[test]
    fn sentiment_rule() {
        assert_eq!(label_sentiment(5).unwrap(), Some(Sentiment::Positive));
        assert_eq!(label_sentiment(4).unwrap(), Some(Sentiment::Positive));
        assert_eq!(label_sentiment(1).unwrap(), Some(Sentiment::Negative));
        assert_eq!(label_sentiment(2).unwrap(), Some(Sentiment::Negative));
        assert_eq!(label_sentiment(3).unwrap(), None);
        assert!(label_sentiment(0).is_err());
        assert!(label_sentiment(6).is_err());
    }

    fn arb_tag() -> impl Strategy<Value = PosTag> {
        prop_oneof![
            Just(PosTag::Vbp),
            Just(PosTag::Vbz),
            Just(PosTag::Vbd),
            Just(PosTag::Nn),
            Just(PosTag::Nns),
            Just(PosTag::Prp),
            Just(PosTag::Other),
        ]
    }

    proptest! {
        #[test]
        fn tense_is_a_function_of_counts(tags in proptest::collection::vec(arb_tag(), 0..40)) {
            let sentence = PosTaggedSentence { tokens: vec!["x".into(); tags.len()], tags: tags.clone() };
            let present = tags.iter().filter(|t| matches!(t, PosTag::Vbp | PosTag::Vbz)).count();
            let past = tags.iter().filter(|t| **t == PosTag::Vbd).count();
            let expected = if present > past { Some(Tense::Present) } else if past > present { Some(Tense::Past) } else { None };
            prop_assert_eq!(label_tense(&sentence), expected);
            // and labeling is deterministic
            prop_assert_eq!(label_tense(&sentence), label_tense(&sentence));
        }
    }
}
