//! Oracle-based attribute matching, sentence-embedding similarity and a
//! latent-code probe.

mod probe;
mod similarity;
mod textcnn;

use std::collections::BTreeMap;
use std::sync::Arc;

use candle_core::DType;
use serde::{Deserialize, Serialize};

pub use probe::{probe_accuracy, LogisticProbe, ProbeConfig};
pub use similarity::{
    ascii_histogram, cluster_similarity_score, embed_sentence, similarity_matrix, summarize_clusters,
    ClusterSummary, Embedder, Histogram, MeanWordVectors, SimilarityReport, HISTOGRAM_BIN,
};
pub use textcnn::{accuracy, TextCnn, TextCnnConfig};
pub(crate) use textcnn::{cross_entropy, dropout_mask};

use crate::corpus::{
    label_person_number, label_tense, relabel_accuracy, LabeledCorpus, LabeledExample, PosTagger, Tense,
};
use crate::error::{Error, Result};
use crate::model::{Batch, ModelState};

pub const DEFAULT_K_NEIGHBORS: usize = 50;

/// Predicts one attribute's value from tokens; `None` means abstain.
pub trait AttributeOracle: Send + Sync {
    fn predict(&self, sentences: &[Vec<String>]) -> Result<Vec<Option<String>>>;
}

/// Rule labelers over a part-of-speech tagger.
#[derive(Clone)]
pub enum RuleOracle {
    Tense(Arc<dyn PosTagger>),
    Person(Arc<dyn PosTagger>),
}

impl AttributeOracle for RuleOracle {
    fn predict(&self, sentences: &[Vec<String>]) -> Result<Vec<Option<String>>> {
        sentences
            .iter()
            .map(|s| {
                Ok(match self {
                    RuleOracle::Tense(t) => label_tense(&t.tag(s)?).map(|v| Tense::as_str(v).to_string()),
                    RuleOracle::Person(t) => Some(label_person_number(&t.tag(s)?).as_str().to_string()),
                })
            })
            .collect()
    }
}

impl AttributeOracle for TextCnn {
    fn predict(&self, sentences: &[Vec<String>]) -> Result<Vec<Option<String>>> {
        let refs: Vec<&[String]> = sentences.iter().map(Vec::as_slice).collect();
        Ok(TextCnn::predict(self, &refs)?
            .into_iter()
            .map(|c| Some(self.classes[c].clone()))
            .collect())
    }
}

/// One oracle per attribute with its accuracy on labeled data.
#[derive(Clone, Default)]
pub struct OracleBundle {
    pub oracles: BTreeMap<String, Arc<dyn AttributeOracle>>,
    pub accuracy: BTreeMap<String, f64>,
}

impl OracleBundle {
    /// Rule oracles for `tense` and `person`; a trained classifier for every
    /// other attribute of the corpus schema.
    pub fn build(corpus: &LabeledCorpus, tagger: Arc<dyn PosTagger>, cnn: &TextCnnConfig, seed: u64) -> Result<Self> {
        let mut bundle = Self::default();
        let rule = relabel_accuracy(corpus, tagger.as_ref())?;
        for (k, spec) in corpus.schema.attributes.iter().enumerate() {
            let oracle: Arc<dyn AttributeOracle> = match spec.name.as_str() {
                "tense" => Arc::new(RuleOracle::Tense(tagger.clone())),
                "person" => Arc::new(RuleOracle::Person(tagger.clone())),
                _ => {
                    let data: Vec<(Vec<String>, usize)> =
                        corpus.sentences.iter().map(|s| (s.tokens.clone(), s.labels[k])).collect();
                    let m = TextCnn::train(&data, spec.values.clone(), cnn, seed.wrapping_add(k as u64))?;
                    bundle.accuracy.insert(spec.name.clone(), m.heldout_accuracy);
                    bundle.oracles.insert(spec.name.clone(), Arc::new(m));
                    continue;
                }
            };
            if let Some(a) = rule.get(&spec.name) {
                bundle.accuracy.insert(spec.name.clone(), *a);
            }
            bundle.oracles.insert(spec.name.clone(), oracle);
        }
        Ok(bundle)
    }
}

/// Matching accuracy of one attribute across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub mean: f64,
    /// Population standard deviation over splits.
    pub std: f64,
    pub per_split: Vec<f64>,
    pub abstained: usize,
    pub evaluated: usize,
}

/// Partitions indices into `n_splits` groups, dealing each label
/// combination round-robin so every split stays balanced.
pub fn balanced_splits(corpus: &LabeledCorpus, n_splits: usize) -> Vec<Vec<usize>> {
    let mut by_combo: BTreeMap<&[usize], usize> = BTreeMap::new();
    let n = n_splits.max(1);
    let mut splits = vec![Vec::new(); n];
    for (i, s) in corpus.sentences.iter().enumerate() {
        let seen = by_combo.entry(s.labels.as_slice()).or_insert(0);
        splits[*seen % n].push(i);
        *seen += 1;
    }
    splits
}

/// Fraction of sentences whose oracle prediction equals the requested label,
/// per attribute, as mean and std over balanced splits. Abstentions leave
/// the denominator and are counted.
pub fn attribute_matching(
    generated: &LabeledCorpus,
    bundle: &OracleBundle,
    n_splits: usize,
) -> Result<BTreeMap<String, MatchStats>> {
    if n_splits == 0 || generated.len() < n_splits {
        return Err(Error::InsufficientData(format!(
            "{} sentences cannot fill {n_splits} splits",
            generated.len()
        )));
    }
    let splits = balanced_splits(generated, n_splits);
    let tokens = generated.token_lists();
    let mut out = BTreeMap::new();
    for (k, spec) in generated.schema.attributes.iter().enumerate() {
        let Some(oracle) = bundle.oracles.get(&spec.name) else {
            continue;
        };
        let predicted = oracle.predict(&tokens)?;
        let (mut abstained, mut evaluated) = (0, 0);
        let mut per_split = Vec::with_capacity(splits.len());
        for split in &splits {
            let (mut hits, mut n) = (0usize, 0usize);
            for &i in split {
                match &predicted[i] {
                    None => abstained += 1,
                    Some(p) => {
                        n += 1;
                        hits += (p == generated.schema.value_name(k, generated.sentences[i].labels[k])) as usize;
                    }
                }
            }
            evaluated += n;
            per_split.push(if n == 0 { 0.0 } else { hits as f64 / n as f64 });
        }
        let m = per_split.iter().sum::<f64>() / per_split.len() as f64;
        let var = per_split.iter().map(|a| (a - m).powi(2)).sum::<f64>() / per_split.len() as f64;
        out.insert(
            spec.name.clone(),
            MatchStats {
                mean: m,
                std: var.sqrt(),
                per_split,
                abstained,
                evaluated,
            },
        );
    }
    Ok(out)
}

/// Posterior means of `examples` under the frozen encoder.
pub fn latent_means(model: &ModelState, examples: &[LabeledExample]) -> Result<Vec<Vec<f64>>> {
    let w = model.frozen();
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(256) {
        let refs: Vec<&LabeledExample> = chunk.iter().collect();
        let batch = Batch::new(&refs, model.dtype())?;
        let (mu, _) = w.encode(&batch.tokens, &batch.mask)?;
        out.extend(mu.to_dtype(DType::F64)?.to_vec2::<f64>()?);
    }
    Ok(out)
}

/// Held-out probe accuracy per attribute on latent means, with the
/// majority-class rate for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: BTreeMap<String, f64>,
    pub majority: BTreeMap<String, f64>,
}

impl ProbeReport {
    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy.values().sum::<f64>() / self.accuracy.len().max(1) as f64
    }
}

pub fn probe_disentanglement(
    model: &ModelState,
    corpus: &LabeledCorpus,
    examples: &[LabeledExample],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ProbeReport> {
    let x = latent_means(model, examples)?;
    let mut report = ProbeReport {
        accuracy: BTreeMap::new(),
        majority: BTreeMap::new(),
    };
    for (k, spec) in corpus.schema.attributes.iter().enumerate() {
        let y: Vec<usize> = examples.iter().map(|e| e.attributes.labels[k]).collect();
        let (acc, maj) = probe_accuracy(&x, &y, spec.values.len(), cfg, seed)?;
        report.accuracy.insert(spec.name.clone(), acc);
        report.majority.insert(spec.name.clone(), maj);
    }
    Ok(report)
}

/// Similarity analysis of a corpus grouped by one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAnalysis {
    pub attribute: String,
    pub class_names: Vec<String>,
    pub excluded: usize,
    pub summary: ClusterSummary,
}

pub fn analyze_similarity(
    corpus: &LabeledCorpus,
    attribute: &str,
    embedder: &dyn Embedder,
    k_neighbors: usize,
) -> Result<(SimilarityReport, SimilarityAnalysis)> {
    let k = corpus
        .schema
        .index_of(attribute)
        .ok_or_else(|| Error::UnknownLabel {
            attribute: attribute.to_string(),
            value: String::new(),
        })?;
    let mut embeddings = Vec::new();
    let mut classes = Vec::new();
    let mut excluded = 0;
    for s in &corpus.sentences {
        match embed_sentence(&s.tokens, embedder) {
            Some(e) => {
                embeddings.push(e);
                classes.push(s.labels[k]);
            }
            None => excluded += 1,
        }
    }
    let report = similarity_matrix(&embeddings, &classes)?;
    let summary = summarize_clusters(&report, k_neighbors)?;
    Ok((
        report,
        SimilarityAnalysis {
            attribute: attribute.to_string(),
            class_names: corpus.schema.attributes[k].values.clone(),
            excluded,
            summary,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_corpus, AttributeSchema, LabeledSentence, LexiconTagger};

    struct Fixed(Vec<Option<String>>);

    impl AttributeOracle for Fixed {
        fn predict(&self, _: &[Vec<String>]) -> Result<Vec<Option<String>>> {
            Ok(self.0.clone())
        }
    }

    fn corpus(n: usize) -> LabeledCorpus {
        let schema = AttributeSchema::new(vec![("sentiment", &["positive", "negative"])]).unwrap();
        let sentences = (0..n)
            .map(|i| LabeledSentence {
                text: "x".into(),
                tokens: vec!["x".into()],
                labels: vec![i % 2],
            })
            .collect();
        LabeledCorpus { schema, sentences }
    }

    fn bundle(pred: Vec<Option<String>>) -> OracleBundle {
        let mut b = OracleBundle::default();
        b.oracles.insert("sentiment".into(), Arc::new(Fixed(pred)));
        b
    }

    fn truth(n: usize) -> Vec<Option<String>> {
        (0..n).map(|i| Some(["positive", "negative"][i % 2].to_string())).collect()
    }

    #[test]
    fn perfect_oracle_scores_one() {
        let r = attribute_matching(&corpus(20), &bundle(truth(20)), 5).unwrap();
        assert_eq!(r["sentiment"].mean, 1.0);
        assert_eq!(r["sentiment"].std, 0.0);
    }

    #[test]
    fn half_agreement_scores_half() {
        let pred = vec![Some("positive".to_string()); 20];
        let r = attribute_matching(&corpus(20), &bundle(pred), 5).unwrap();
        assert_eq!(r["sentiment"].mean, 0.5);
    }

    #[test]
    fn abstentions_leave_the_denominator() {
        let mut pred = truth(20);
        pred[0] = None;
        pred[3] = None;
        let r = attribute_matching(&corpus(20), &bundle(pred), 5).unwrap();
        assert_eq!(r["sentiment"].mean, 1.0);
        assert_eq!(r["sentiment"].abstained, 2);
        assert_eq!(r["sentiment"].evaluated, 18);
    }

    #[test]
    fn splits_are_balanced() {
        let splits = balanced_splits(&corpus(30), 5);
        let c = corpus(30);
        for s in &splits {
            assert_eq!(s.len(), 6);
            assert_eq!(s.iter().filter(|&&i| c.sentences[i].labels[0] == 0).count(), 3);
        }
    }

    #[test]
    fn rule_oracles_on_toy_grammar() {
        let c = generate_toy_corpus(300, &AttributeSchema::toy(), 4).unwrap();
        let tagger: Arc<dyn PosTagger> = Arc::new(LexiconTagger);
        let mut b = OracleBundle::build(&c, tagger, &TextCnnConfig { emb_dim: 16, filters: 8, epochs: 3, ..Default::default() }, 0).unwrap();
        assert!(b.accuracy["tense"] > 0.95 && b.accuracy["person"] > 0.95, "{:?}", b.accuracy);
        b.oracles.remove("sentiment");
        let r = attribute_matching(&c, &b, 5).unwrap();
        assert!(r["tense"].mean > 0.95 && r["person"].mean > 0.95);
        assert!(!r.contains_key("sentiment"));
    }

    proptest::proptest! {
        #[test]
        fn order_within_splits_does_not_matter(flips in proptest::collection::vec(proptest::bool::ANY, 20)) {
            let pred: Vec<Option<String>> = flips.iter().enumerate()
                .map(|(i, f)| Some(["positive", "negative"][(i % 2) ^ (*f as usize)].to_string())).collect();
            let c = corpus(20);
            let r = attribute_matching(&c, &bundle(pred.clone()), 5).unwrap();
            let m = r["sentiment"].mean;
            proptest::prop_assert!((0.0..=1.0).contains(&m));
            // reversing pairs of equal-label sentences keeps every split's contents
            let mut c2 = c.clone();
            let mut p2 = pred.clone();
            c2.sentences.reverse();
            p2.reverse();
            let r2 = attribute_matching(&c2, &bundle(p2), 5).unwrap();
            let mut a = r["sentiment"].per_split.clone();
            let mut b = r2["sentiment"].per_split.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            proptest::prop_assert_eq!(a, b);
        }
    }
}
