//! Corpus ingestion, tokenization, vocabulary, rule-based attribute labels,
//! splits, and the synthetic grammar used for desk-scale runs.

mod attributes;
mod labels;
mod tagger;
mod tokenize;
mod toy;
mod vocab;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use attributes::{AttributeSchema, AttributeSpec, AttributeVector};
pub use labels::{
    label_person_number, label_sentiment, label_tense, person_evidence, tense_from_counts,
    PersonNumber, Sentiment, Tense, PLURAL_PRONOUNS, SINGULAR_PRONOUNS,
};
pub use tagger::{
    parse_tagged_exchange, write_tokens_exchange, ExternalTagger, LexiconTagger, PosTag,
    PosTaggedSentence, PosTagger,
};
pub use tokenize::{tokenize, NUM};
pub use toy::{generate_toy_corpus, toy_synonym_table};
pub use vocab::{Vocabulary, EOS, NUM_ID, PAD, SOS, SPECIALS, UNK};

use crate::error::{Error, Result};

/// Maximum number of content tokens per sentence.
pub const MAX_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    pub tokens: Vec<String>,
    /// Value index per schema attribute.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub schema: AttributeSchema,
    pub sentences: Vec<LabeledSentence>,
}

/// A sentence ready for the networks: framed ids and its attribute vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub ids: Vec<u32>,
    pub attributes: AttributeVector,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_lists(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.tokens.clone()).collect()
    }

    pub fn encode(&self, vocab: &Vocabulary, max_len: usize) -> Result<Vec<LabeledExample>> {
        self.sentences
            .iter()
            .map(|s| {
                Ok(LabeledExample {
                    ids: vocab.encode_sentence(&s.tokens, max_len),
                    attributes: self.schema.vector_from_indices(&s.labels)?,
                })
            })
            .collect()
    }

    pub fn with_sentences(&self, sentences: Vec<LabeledSentence>) -> Self {
        Self {
            schema: self.schema.clone(),
            sentences,
        }
    }

    pub fn to_records(&self) -> Vec<LabeledRecord> {
        self.sentences
            .iter()
            .map(|s| LabeledRecord {
                tokens: s.tokens.clone(),
                labels: s
                    .labels
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        (
                            self.schema.attributes[k].name.clone(),
                            self.schema.value_name(k, v).to_string(),
                        )
                    })
                    .collect(),
                provenance: None,
            })
            .collect()
    }

    pub fn from_records(schema: &AttributeSchema, records: Vec<LabeledRecord>) -> Result<Self> {
        let sentences = records
            .into_iter()
            .map(|r| {
                let labels = schema
                    .attributes
                    .iter()
                    .enumerate()
                    .map(|(k, spec)| {
                        let value = r.labels.get(&spec.name).ok_or_else(|| {
                            Error::InvalidInput(format!("record lacks label `{}`", spec.name))
                        })?;
                        schema.value_index(k, value)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LabeledSentence {
                    text: r.tokens.join(" "),
                    tokens: r.tokens,
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema: schema.clone(),
            sentences,
        })
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.to_records())
    }

    pub fn load_jsonl(path: &Path, schema: &AttributeSchema) -> Result<Self> {
        Self::from_records(schema, read_jsonl(path)?)
    }
}

/// One line of raw corpus input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, String>>,
}

/// Where a generated sentence came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub checkpoint: String,
    pub seed: u64,
}

/// One line of labeled corpus output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub tokens: Vec<String>,
    pub labels: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Result of labeling a raw corpus: kept sentences and per-reason exclusion counts.
#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub corpus: LabeledCorpus,
    pub excluded: BTreeMap<String, usize>,
}

/// Automatic label for a well-known attribute, or `None` when the rule abstains.
fn auto_label(
    attribute: &str,
    record: &RawRecord,
    tagged: &PosTaggedSentence,
) -> Result<Option<&'static str>> {
    Ok(match attribute {
        "sentiment" => match record.rating {
            Some(r) => label_sentiment(r)?.map(Sentiment::as_str),
            None => None,
        },
        "tense" => label_tense(tagged).map(Tense::as_str),
        "person" => Some(label_person_number(tagged).as_str()),
        _ => None,
    })
}

/// Tokenizes and labels raw records. Explicit labels win over the rules;
/// a sentence is dropped when any attribute ends up without a label in the
/// schema (rule abstention, missing rating, or a value the schema lacks).
pub fn label_records(
    records: &[RawRecord],
    schema: &AttributeSchema,
    tagger: &dyn PosTagger,
) -> Result<LabelOutcome> {
    let mut sentences = Vec::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    'records: for record in records {
        let tokens = tokenize(&record.text);
        if tokens.is_empty() {
            *excluded.entry("empty".into()).or_default() += 1;
            continue;
        }
        let tagged = tagger.tag(&tokens)?;
        let mut labels = Vec::with_capacity(schema.len());
        for (k, spec) in schema.attributes.iter().enumerate() {
            let explicit = record.labels.as_ref().and_then(|m| m.get(&spec.name));
            let value = match explicit {
                Some(v) => Some(v.as_str()),
                None => auto_label(&spec.name, record, &tagged)?,
            };
            let Some(value) = value else {
                *excluded.entry(format!("no_label:{}", spec.name)).or_default() += 1;
                continue 'records;
            };
            match schema.value_index(k, value) {
                Ok(idx) => labels.push(idx),
                Err(_) => {
                    *excluded
                        .entry(format!("unmapped:{}={value}", spec.name))
                        .or_default() += 1;
                    continue 'records;
                }
            }
        }
        sentences.push(LabeledSentence {
            text: record.text.clone(),
            tokens,
            labels,
        });
    }
    Ok(LabelOutcome {
        corpus: LabeledCorpus {
            schema: schema.clone(),
            sentences,
        },
        excluded,
    })
}

/// Fraction of sentences whose rule labels (tense, person) match the stored
/// ones, per rule-labeled attribute. Abstentions count as disagreement.
pub fn relabel_accuracy(
    corpus: &LabeledCorpus,
    tagger: &dyn PosTagger,
) -> Result<BTreeMap<String, f64>> {
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in &corpus.sentences {
        let tagged = tagger.tag(&s.tokens)?;
        for (k, spec) in corpus.schema.attributes.iter().enumerate() {
            let predicted = match spec.name.as_str() {
                "tense" => label_tense(&tagged).map(Tense::as_str),
                "person" => Some(label_person_number(&tagged).as_str()),
                _ => continue,
            };
            let e = hits.entry(spec.name.clone()).or_default();
            e.1 += 1;
            if predicted == Some(corpus.schema.value_name(k, s.labels[k])) {
                e.0 += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|(k, (h, n))| (k, h as f64 / n as f64))
        .collect())
}

/// Deterministic shuffled split into (train, valid, test).
pub fn make_splits<T: Clone>(
    items: &[T],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidInput(format!(
            "split fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * fractions[0]).round() as usize;
    let n_valid = (((n as f64) * fractions[1]).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_valid]),
        pick(&order[n_train + n_valid..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..10).collect();
        let (a, b, c) = make_splits(&items, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let again = make_splits(&items, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!((a.clone(), b.clone(), c.clone()), again);
        let mut all: Vec<u32> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, items);
        assert!(make_splits(&items, [0.5, 0.1, 0.1], 7).is_err());
    }

    #[test]
    fn labels_raw_records() {
        let schema = AttributeSchema::reviews();
        let records = vec![
            RawRecord { text: "We loved the pizza and the drinks".into(), rating: Some(5), labels: None },
            RawRecord { text: "It is awful".into(), rating: Some(1), labels: None },
            RawRecord { text: "meh".into(), rating: Some(3), labels: None },
            RawRecord { text: "nice place".into(), rating: Some(4), labels: None },
            RawRecord {
                text: "nice place".into(),
                rating: None,
                labels: Some([("tense".to_string(), "past".to_string()), ("sentiment".into(), "positive".into())].into()),
            },
        ];
        let out = label_records(&records, &schema, &LexiconTagger).unwrap();
        assert_eq!(out.corpus.len(), 3);
        let names: Vec<Vec<&str>> = out.corpus.sentences.iter().map(|s| schema.label_names(&s.labels)).collect();
        assert_eq!(names[0], ["positive", "past", "plural"]);
        assert_eq!(names[1], ["negative", "present", "singular"]);
        assert_eq!(names[2], ["positive", "past", "singular"]);
        assert_eq!(out.excluded.get("no_label:sentiment"), Some(&1));
        assert_eq!(out.excluded.get("no_label:tense"), Some(&1));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schema = AttributeSchema::toy();
        let c = generate_toy_corpus(16, &schema, 4).unwrap();
        let path = dir.path().join("c.jsonl");
        c.save_jsonl(&path).unwrap();
        let first = std::fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert!(line["tokens"].is_array());
        assert!(line["labels"]["sentiment"].is_string());
        let back = LabeledCorpus::load_jsonl(&path, &schema).unwrap();
        assert_eq!(back.sentences.iter().map(|s| &s.labels).collect::<Vec<_>>(), c.sentences.iter().map(|s| &s.labels).collect::<Vec<_>>());
        let raw: Vec<RawRecord> = vec![];
        write_jsonl(&dir.path().join("empty.jsonl"), &raw).unwrap();
        assert!(read_jsonl::<RawRecord>(&dir.path().join("empty.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn raw_record_rejects_unknown_fields() {
        assert!(serde_json::from_str::<RawRecord>(r#"{"text":"a","stars":3}"#).is_err());
        let r: RawRecord = serde_json::from_str(r#"{"text":"a"}"#).unwrap();
        assert_eq!(r.rating, None);
    }
}
