//! Run configuration: a TOML tree merged from a named profile, an optional
//! file and `key=value` overrides, in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::{AugmentationGrid, DownstreamConfig};
use crate::corpus::{AttributeSchema, MAX_LEN};
use crate::error::{Error, Result};
use crate::evaluation::{ProbeConfig, TextCnnConfig, DEFAULT_K_NEIGHBORS};
use crate::model::{CellType, DecodeMode, DiscriminatorKind, ModelConfig};
use crate::objectives::ScheduleConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Yelp,
    Imdb,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// JSONL corpus (raw or labeled records); the toy grammar is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Number of sentences drawn from the toy grammar.
    pub toy_sentences: usize,
    pub toy_seed: u64,
    /// Train / valid / test fractions.
    pub splits: [f64; 3],
    pub min_freq: usize,
    pub max_len: usize,
}

/// Model sizes; vocabulary and attribute layout come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    pub cell: CellType,
    pub discriminator: DiscriminatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_hidden: Option<usize>,
    pub freeze_embeddings: bool,
    /// Word-vector text file used to initialize the embedding table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_embeddings: Option<PathBuf>,
}

impl ModelSection {
    pub fn resolve(&self, vocab_size: usize, schema: &AttributeSchema) -> ModelConfig {
        let k = schema.len();
        ModelConfig {
            vocab_size,
            emb_dim: self.emb_dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim.unwrap_or_else(|| ModelConfig::default_latent_dim(k)),
            attr_cardinalities: schema.cardinalities(),
            cell: self.cell,
            discriminator: self.discriminator,
            disc_hidden: self.disc_hidden.unwrap_or_else(|| ModelConfig::default_disc_hidden(self.discriminator, k)),
            freeze_embeddings: self.freeze_embeddings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub per_combination: usize,
    pub mode: DecodeMode,
    pub max_len: usize,
    pub dedup: bool,
    pub max_retries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_splits: usize,
    pub k_neighbors: usize,
    /// Attribute whose classes define the similarity blocks.
    pub similarity_attribute: String,
    /// Word-vector text file for the similarity embedder; the checkpoint's
    /// embedding table is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_vectors: Option<PathBuf>,
    pub textcnn: TextCnnConfig,
    pub probe: ProbeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub grid: AugmentationGrid,
    pub downstream: DownstreamConfig,
    /// Held-out sentences for downstream testing.
    pub test_size: usize,
    /// Attribute the downstream classifier predicts.
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub schema: AttributeSchema,
    pub data: DataConfig,
    pub model: ModelSection,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub generate: GenerateSection,
    pub eval: EvalSection,
    pub augment: AugmentSection,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let review_model = ModelSection {
            emb_dim: 300,
            hidden_dim: 256,
            latent_dim: None,
            cell: CellType::Gru,
            discriminator: DiscriminatorKind::Mlp,
            disc_hidden: None,
            freeze_embeddings: false,
            pretrained_embeddings: None,
        };
        let base = Self {
            seed: 0,
            schema: AttributeSchema::reviews(),
            data: DataConfig {
                corpus: None,
                toy_sentences: 5000,
                toy_seed: 1,
                splits: [0.8, 0.1, 0.1],
                min_freq: 1,
                max_len: MAX_LEN,
            },
            model: review_model,
            schedule: ScheduleConfig::yelp(),
            train: TrainConfig::default(),
            generate: GenerateSection {
                per_combination: 2500,
                mode: DecodeMode::Greedy,
                max_len: MAX_LEN,
                dedup: false,
                max_retries: 10,
            },
            eval: EvalSection {
                n_splits: 5,
                k_neighbors: DEFAULT_K_NEIGHBORS,
                similarity_attribute: "sentiment".into(),
                word_vectors: None,
                textcnn: TextCnnConfig::default(),
                probe: ProbeConfig::default(),
            },
            augment: AugmentSection {
                grid: AugmentationGrid::default(),
                downstream: DownstreamConfig::default(),
                test_size: 2000,
                attribute: "sentiment".into(),
            },
        };
        match profile {
            Profile::Yelp => Self { augment: AugmentSection { grid: AugmentationGrid { dataset: "yelp".into(), ..base.augment.grid.clone() }, ..base.augment.clone() }, ..base },
            Profile::Imdb => Self {
                schedule: ScheduleConfig::imdb(),
                train: TrainConfig { epochs: 15, ..TrainConfig::default() },
                augment: AugmentSection { grid: AugmentationGrid { dataset: "imdb".into(), ..base.augment.grid.clone() }, ..base.augment.clone() },
                ..base
            },
            Profile::Toy => Self {
                schema: AttributeSchema::toy(),
                model: ModelSection {
                    emb_dim: 32,
                    hidden_dim: 64,
                    latent_dim: Some(16),
                    disc_hidden: Some(64),
                    ..base.model.clone()
                },
                schedule: ScheduleConfig::toy(),
                generate: GenerateSection {
                    per_combination: 150,
                    ..base.generate.clone()
                },
                eval: EvalSection {
                    textcnn: TextCnnConfig {
                        emb_dim: 32,
                        filters: 16,
                        epochs: 4,
                        ..TextCnnConfig::default()
                    },
                    ..base.eval.clone()
                },
                augment: AugmentSection {
                    grid: AugmentationGrid {
                        base_sizes: vec![200],
                        percentages: vec![10, 20, 30, 50, 70, 100, 120],
                        sources: vec![crate::augmentation::Source::Eda, crate::augmentation::Source::Cga],
                        ..AugmentationGrid::default()
                    },
                    downstream: DownstreamConfig {
                        emb_dim: 32,
                        hidden_dim: 32,
                        max_epochs: 40,
                        ..DownstreamConfig::default()
                    },
                    test_size: 1000,
                    ..base.augment.clone()
                },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.schedule.validate()?;
        self.train.validate()?;
        self.augment.grid.validate()?;
        self.augment.downstream.validate()?;
        let s = self.data.splits;
        if s.iter().any(|f| *f < 0.0) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("data.splits", "fractions must be non-negative and sum to 1"));
        }
        if self.data.max_len == 0 || self.generate.max_len == 0 {
            return Err(Error::config("data.max_len", "must be positive"));
        }
        if self.model.emb_dim == 0 || self.model.hidden_dim == 0 || self.model.latent_dim == Some(0) {
            return Err(Error::config("model", "dimensions must be positive"));
        }
        if self.eval.n_splits == 0 {
            return Err(Error::config("eval.n_splits", "must be positive"));
        }
        if self.eval.k_neighbors == 0 {
            return Err(Error::config("eval.k_neighbors", "must be positive"));
        }
        for (key, name) in [("eval.similarity_attribute", &self.eval.similarity_attribute), ("augment.attribute", &self.augment.attribute)] {
            if self.schema.index_of(name).is_none() {
                return Err(Error::config(key, format!("`{name}` is not a schema attribute")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    /// Parses a complete configuration; unknown keys and type errors are
    /// reported with their key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::config("", e.message().trim_end()))?;
        from_value(value)
    }
}

fn from_value(value: toml::Value) -> Result<RunConfig> {
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string().trim_end())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a plain string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(tree: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut node = tree;
    for p in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not inside a table")))?;
        node = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::config(key, "parent is not a table"))?;
    table.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}

/// Profile defaults, then the file at `path`, then `overrides`.
pub fn parse_config(profile: Profile, path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut tree = toml::Value::try_from(RunConfig::profile(profile)).map_err(|e| Error::config("", e.to_string()))?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: toml::Value = toml::from_str(&text).map_err(|e| Error::config("", format!("{}: {}", path.display(), e.message())))?;
        merge(&mut tree, file);
    }
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    from_value(tree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config(Profile::Yelp, Some(&path), &o)
    }

    #[test]
    fn empty_file_gives_profile_defaults() {
        let c = parse("", &[]).unwrap();
        assert_eq!(c.schedule, ScheduleConfig::yelp());
        assert_eq!(c.schedule.wd_tau, 500);
        assert_eq!(c.schedule.wd_k1, 0.6);
        assert_eq!(c.train.lr_vae, 1e-3);
        assert_eq!(c.model.hidden_dim, 256);
        let imdb = parse_config(Profile::Imdb, None, &[]).unwrap();
        assert_eq!(imdb.schedule.wd_tau, 250);
        assert_eq!(imdb.schedule.disc_k1, 5000);
    }

    #[test]
    fn file_then_overrides() {
        let c = parse("[schedule]\nwd_tau = 300\n", &[]).unwrap();
        assert_eq!(c.schedule.wd_tau, 300);
        let c = parse("[schedule]\nwd_tau = 300\n", &["schedule.wd_tau=250", "eval.similarity_attribute=tense"]).unwrap();
        assert_eq!(c.schedule.wd_tau, 250);
        assert_eq!(c.eval.similarity_attribute, "tense");
        let c = parse("", &["generate.mode={ mode = \"sample\", temperature = 0.5 }"]).unwrap();
        assert_eq!(c.generate.mode, DecodeMode::Sample { temperature: 0.5 });
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("[shcedule]\ntau = 3\n", &[]).unwrap_err();
        assert!(e.to_string().contains("shcedule"), "{e}");
        let e = parse("", &["schedule.tau=3"]).unwrap_err();
        assert!(e.to_string().contains("tau"), "{e}");
    }

    #[test]
    fn type_and_constraint_errors_carry_paths() {
        let e = parse("[train]\nepochs = \"many\"\n", &[]).unwrap_err();
        assert!(e.to_string().contains("train.epochs"), "{e}");
        let e = parse("", &["train.batch_size=0"]).unwrap_err();
        assert!(e.to_string().contains("batch_size"), "{e}");
    }

    #[test]
    fn profiles_round_trip_through_toml() {
        for p in [Profile::Yelp, Profile::Imdb, Profile::Toy] {
            let c = RunConfig::profile(p);
            c.validate().unwrap();
            assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        }
    }
}
