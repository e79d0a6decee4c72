//! Part-of-speech tagging over the reduced tag set the labelers need.
//!
//! [`LexiconTagger`] is a closed-lexicon tagger with a handful of context and
//! suffix rules. It covers the synthetic grammar's vocabulary and common
//! review English; anything else is tagged [`PosTag::Other`]. Real corpora
//! should go through [`ExternalTagger`], which talks to any program that
//! speaks the `token<TAB>tag` exchange format.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosTag {
    /// Present tense, non-3rd-person singular.
    Vbp,
    /// Present tense, 3rd-person singular.
    Vbz,
    /// Past tense.
    Vbd,
    /// Singular or mass noun.
    Nn,
    /// Plural noun.
    Nns,
    /// Personal pronoun.
    Prp,
    Other,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Vbp => "VBP",
            PosTag::Vbz => "VBZ",
            PosTag::Vbd => "VBD",
            PosTag::Nn => "NN",
            PosTag::Nns => "NNS",
            PosTag::Prp => "PRP",
            PosTag::Other => "OTHER",
        }
    }

    /// Maps a Penn Treebank tag onto the reduced set. Unknown tags become `Other`.
    pub fn from_penn(tag: &str) -> Self {
        match tag.trim() {
            "VBP" => PosTag::Vbp,
            "VBZ" => PosTag::Vbz,
            "VBD" => PosTag::Vbd,
            "NN" => PosTag::Nn,
            "NNS" => PosTag::Nns,
            "PRP" => PosTag::Prp,
            _ => PosTag::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosTaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<PosTag>,
}

impl PosTaggedSentence {
    pub fn count(&self, tag: PosTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Result<PosTaggedSentence>;
}

// (base, 3rd singular, past) for verbs whose forms are not derivable by the
// regular rules, plus regular verbs listed so they are known to the lexicon.
const IRREGULAR_VERBS: &[(&str, &str, &str)] = &[
    ("have", "has", "had"),
    ("do", "does", "did"),
    ("go", "goes", "went"),
    ("get", "gets", "got"),
    ("make", "makes", "made"),
    ("take", "takes", "took"),
    ("eat", "eats", "ate"),
    ("see", "sees", "saw"),
    ("come", "comes", "came"),
    ("say", "says", "said"),
    ("find", "finds", "found"),
    ("give", "gives", "gave"),
    ("feel", "feels", "felt"),
    ("leave", "leaves", "left"),
    ("pay", "pays", "paid"),
    ("keep", "keeps", "kept"),
    ("know", "knows", "knew"),
    ("think", "thinks", "thought"),
    ("buy", "buys", "bought"),
    ("bring", "brings", "brought"),
    ("tell", "tells", "told"),
    ("sit", "sits", "sat"),
    ("spend", "spends", "spent"),
    ("drink", "drinks", "drank"),
    ("choose", "chooses", "chose"),
    ("forget", "forgets", "forgot"),
    ("send", "sends", "sent"),
    ("serve", "serves", "served"),
    ("try", "tries", "tried"),
    ("regret", "regrets", "regretted"),
    ("stop", "stops", "stopped"),
    ("care", "cares", "cared"),
    ("rob", "robs", "robbed"),
];

const REGULAR_VERBS: &[&str] = &[
    "love", "like", "hate", "enjoy", "adore", "dislike", "detest", "want", "need", "order",
    "share", "visit", "stay", "look", "seem", "taste", "work", "wait", "agree", "recommend",
    "walk", "help", "return", "arrive", "ask", "call", "smell", "cook", "start", "finish",
    "offer", "prefer", "miss", "watch", "expect", "complain", "appreciate", "deserve", "plan",
    "treat", "check", "end", "open", "close", "play", "laugh", "cry", "act", "live", "learn",
];

const PERSONAL_PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "myself",
    "yourself", "himself", "herself", "itself", "ourselves", "themselves",
];

// (singular, plural) nouns; `None` plural means regular +s/+es/ies.
const NOUNS: &[(&str, Option<&str>)] = &[
    ("food", None), ("place", None), ("service", None), ("time", None), ("restaurant", None),
    ("pizza", None), ("pasta", None), ("burger", None), ("salad", None), ("soup", None),
    ("steak", None), ("cake", None), ("bread", None), ("drink", None), ("soda", None),
    ("wine", None), ("beer", None), ("juice", None), ("tea", None), ("friend", None),
    ("husband", None), ("wife", None), ("parent", None), ("kid", None), ("chef", None),
    ("waiter", None), ("waitress", None), ("table", None), ("menu", None), ("price", None),
    ("movie", None), ("film", None), ("actor", None), ("plot", None), ("scene", None),
    ("story", None), ("ending", None), ("hotel", None), ("room", None), ("night", None),
    ("day", None), ("week", None), ("year", None), ("dish", None), ("meal", None),
    ("lunch", None), ("dinner", None), ("breakfast", None), ("dessert", None), ("sauce", None),
    ("chicken", None), ("fish", Some("fish")), ("sushi", None), ("bar", None), ("town", None),
    ("city", None), ("family", None), ("guy", None), ("girl", None), ("boy", None),
    ("dog", None), ("cat", None), ("car", None), ("book", None), ("house", None),
    ("door", None), ("wait", None), ("deal", None), ("fact", None), ("selection", None),
    ("stylist", None), ("sweetheart", None), ("customer", None), ("manager", None),
    ("management", None), ("experience", None), ("atmosphere", None), ("staff", None),
    ("owner", None), ("patient", None), ("bite", None), ("money", None), ("character", None),
    ("man", Some("men")), ("woman", Some("women")), ("child", Some("children")),
    ("person", Some("people")), ("foot", Some("feet")), ("tooth", Some("teeth")),
];

// Tokens after which a bare verb is an infinitive/base form rather than VBP.
const BASE_TRIGGERS: &[&str] = &[
    "to", "will", "would", "can", "could", "should", "must", "may", "might", "shall", "'ll",
    "'d", "wo", "ca", "do", "does", "did", "let",
];

// Tokens after which a past form is a participle rather than VBD.
const PARTICIPLE_TRIGGERS: &[&str] = &[
    "have", "has", "had", "'ve", "is", "are", "was", "were", "be", "been", "being", "am", "'m",
    "'re", "get", "gets", "got",
];

// Skipped when looking back for a trigger.
const ADVERBS: &[&str] = &[
    "n't", "not", "never", "really", "also", "always", "just", "even", "definitely", "ever",
    "already", "still", "totally", "so", "very", "truly", "absolutely", "often",
];

// After these a verb-looking form is read as a noun ("the wait", "the drinks").
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "my", "our", "your", "their", "his", "this", "that", "these", "those",
    "every", "some", "no",
];

const S_CONTEXT: &[&str] = &[
    "that", "there", "here", "what", "who", "where", "how", "this", "everything", "nothing",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Entry {
    Fixed(PosTag),
    BaseVerb,
    PastVerb,
}

fn third_singular(base: &str) -> String {
    if base.ends_with('s') || base.ends_with('x') || base.ends_with("ch") || base.ends_with("sh") {
        format!("{base}es")
    } else if base.ends_with('y') && !base.ends_with("ay") && !base.ends_with("ey") && !base.ends_with("oy") {
        format!("{}ies", &base[..base.len() - 1])
    } else {
        format!("{base}s")
    }
}

fn past(base: &str) -> String {
    if base.ends_with('e') {
        format!("{base}d")
    } else {
        format!("{base}ed")
    }
}

fn lexicon() -> &'static HashMap<String, Entry> {
    static LEXICON: OnceLock<HashMap<String, Entry>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut lex = HashMap::new();
        for w in PERSONAL_PRONOUNS {
            lex.insert(w.to_string(), Entry::Fixed(PosTag::Prp));
        }
        for (sg, pl) in NOUNS {
            lex.insert(sg.to_string(), Entry::Fixed(PosTag::Nn));
            let plural = pl.map(str::to_string).unwrap_or_else(|| third_singular(sg));
            if plural != *sg {
                lex.insert(plural, Entry::Fixed(PosTag::Nns));
            }
        }
        // Verbs override nouns sharing a surface form ("drinks", "wait").
        for base in REGULAR_VERBS {
            lex.insert(base.to_string(), Entry::BaseVerb);
            lex.insert(third_singular(base), Entry::Fixed(PosTag::Vbz));
            lex.insert(past(base), Entry::PastVerb);
        }
        for (base, third, pst) in IRREGULAR_VERBS {
            lex.insert(base.to_string(), Entry::BaseVerb);
            lex.insert(third.to_string(), Entry::Fixed(PosTag::Vbz));
            lex.insert(pst.to_string(), Entry::PastVerb);
        }
        for (w, t) in [
            ("am", PosTag::Vbp),
            ("are", PosTag::Vbp),
            ("'re", PosTag::Vbp),
            ("'m", PosTag::Vbp),
            ("'ve", PosTag::Vbp),
            ("is", PosTag::Vbz),
            ("was", PosTag::Vbd),
            ("were", PosTag::Vbd),
        ] {
            lex.insert(w.to_string(), Entry::Fixed(t));
        }
        lex
    })
}

/// Lexicon tagger with light context rules for base-form and participle
/// disambiguation.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconTagger;

impl LexiconTagger {
    fn previous_content<'a>(tokens: &'a [String], i: usize) -> Option<&'a str> {
        tokens[..i]
            .iter()
            .rev()
            .map(String::as_str)
            .find(|t| !ADVERBS.contains(t))
    }

    pub fn tag_tokens(&self, tokens: &[String]) -> PosTaggedSentence {
        let lex = lexicon();
        let mut tags = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let prev = Self::previous_content(tokens, i);
            let after_det = i > 0 && DETERMINERS.contains(&tokens[i - 1].as_str());
            let tag = match lex.get(tok.as_str()) {
                Some(Entry::Fixed(PosTag::Vbz)) if after_det && tok.ends_with('s') => PosTag::Nns,
                Some(Entry::Fixed(t)) => *t,
                Some(Entry::BaseVerb) if after_det => PosTag::Nn,
                Some(Entry::BaseVerb) => {
                    if prev.is_some_and(|p| BASE_TRIGGERS.contains(&p)) {
                        PosTag::Other
                    } else {
                        PosTag::Vbp
                    }
                }
                Some(Entry::PastVerb) => Self::past_or_participle(prev),
                None if tok == "'s" => PosTag::Other,
                None => {
                    // Regular past-tense suffix on an unknown word.
                    if tok.len() > 4 && tok.ends_with("ed") && !tok.ends_with("eed") {
                        Self::past_or_participle(prev)
                    } else {
                        PosTag::Other
                    }
                }
            };
            tags.push(tag);
        }
        // `'s` is a verb after a pronoun or a deictic, possessive otherwise.
        for i in 0..tokens.len() {
            if tokens[i] == "'s" && i > 0 {
                let p = tokens[i - 1].as_str();
                if tags[i - 1] == PosTag::Prp || S_CONTEXT.contains(&p) {
                    tags[i] = PosTag::Vbz;
                }
            }
        }
        PosTaggedSentence {
            tokens: tokens.to_vec(),
            tags,
        }
    }

    fn past_or_participle(prev: Option<&str>) -> PosTag {
        if prev.is_some_and(|p| PARTICIPLE_TRIGGERS.contains(&p)) {
            PosTag::Other
        } else {
            PosTag::Vbd
        }
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> Result<PosTaggedSentence> {
        Ok(self.tag_tokens(tokens))
    }
}

/// Writes sentences in the exchange format: one token per line, a blank line
/// between sentences.
pub fn write_tokens_exchange<W: Write>(mut out: W, sentences: &[Vec<String>]) -> std::io::Result<()> {
    for sentence in sentences {
        for tok in sentence {
            writeln!(out, "{tok}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses `token<TAB>tag` lines; blank lines separate sentences.
pub fn parse_tagged_exchange<R: BufRead>(input: R) -> Result<Vec<PosTaggedSentence>> {
    let mut sentences = Vec::new();
    let mut current = PosTaggedSentence {
        tokens: vec![],
        tags: vec![],
    };
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<tagger output>", e))?;
        if line.trim().is_empty() {
            sentences.push(std::mem::replace(
                &mut current,
                PosTaggedSentence {
                    tokens: vec![],
                    tags: vec![],
                },
            ));
            continue;
        }
        let (tok, tag) = line.split_once('\t').ok_or_else(|| {
            Error::InvalidInput(format!("tagger output line {} lacks a TAB: {line:?}", lineno + 1))
        })?;
        current.tokens.push(tok.to_string());
        current.tags.push(PosTag::from_penn(tag));
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Adapter for an external tagging program. The program reads the token
/// exchange format on stdin and answers with `token<TAB>tag` lines.
#[derive(Debug, Clone)]
pub struct ExternalTagger {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalTagger {
    pub fn tag_batch(&self, sentences: &[Vec<String>]) -> Result<Vec<PosTaggedSentence>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        {
            let stdin = child.stdin.take().expect("piped stdin");
            write_tokens_exchange(std::io::BufWriter::new(stdin), sentences)
                .map_err(|e| Error::io(&self.program, e))?;
        }
        let stdout = child.stdout.take().expect("piped stdout");
        let tagged = parse_tagged_exchange(BufReader::new(stdout))?;
        let status = child.wait().map_err(|e| Error::io(&self.program, e))?;
        if !status.success() {
            return Err(Error::InvalidInput(format!("external tagger exited with {status}")));
        }
        if tagged.len() != sentences.len() {
            return Err(Error::InvalidInput(format!(
                "external tagger returned {} sentences for {} inputs",
                tagged.len(),
                sentences.len()
            )));
        }
        for (t, s) in tagged.iter().zip(sentences) {
            if t.tokens.len() != s.len() {
                return Err(Error::InvalidInput("external tagger changed the tokenization".into()));
            }
        }
        Ok(tagged)
    }
}

impl PosTagger for ExternalTagger {
    fn tag(&self, tokens: &[String]) -> Result<PosTaggedSentence> {
        Ok(self.tag_batch(&[tokens.to_vec()])?.remove(0))
    }
}
