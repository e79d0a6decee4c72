//! Downstream data-augmentation experiments: a recurrent sentiment
//! classifier trained on real data plus EDA, extra real or generated
//! sentences.

mod classifier;
mod eda;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use classifier::{train_downstream, DownstreamConfig, DownstreamResult, Example};
pub use eda::{eda_augment, EdaOp, SynonymTable, EDA_OPS};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Eda,
    Cga,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Eda => "eda",
            Source::Cga => "cga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationGrid {
    pub dataset: String,
    pub base_sizes: Vec<usize>,
    pub percentages: Vec<u32>,
    pub sources: Vec<Source>,
    pub seeds: Vec<u64>,
    pub eda_alpha: f64,
    /// Fraction of each base set held out for early stopping.
    pub valid_fraction: f64,
}

impl Default for AugmentationGrid {
    fn default() -> Self {
        Self {
            dataset: "toy".into(),
            base_sizes: vec![500, 1000, 10000],
            percentages: vec![10, 20, 30, 50, 70, 100, 120, 150, 200],
            sources: vec![Source::Real, Source::Eda, Source::Cga],
            seeds: (0..5).collect(),
            eda_alpha: 0.1,
            valid_fraction: 0.1,
        }
    }
}

impl AugmentationGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| Err(Error::config(&format!("augment.grid.{k}"), m));
        if self.percentages.contains(&0) {
            return bad("percentages", "must be positive");
        }
        if self.sources.is_empty() {
            return bad("sources", "must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty");
        }
        if self.base_sizes.iter().any(|&s| s < 2) {
            return bad("base_sizes", "must be at least 2");
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return bad("valid_fraction", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.eda_alpha) {
            return bad("eda_alpha", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Labeled pools the grid draws from.
#[derive(Debug, Clone, Copy)]
pub struct GridData<'a> {
    /// Real training pool: base sets and extra real sentences.
    pub real: &'a [Example],
    pub test: &'a [Example],
    pub generated: &'a [Example],
    pub synonyms: &'a SynonymTable,
    pub classes: usize,
}

/// One trained classifier; `accuracy` is `None` when the cell is unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub dataset: String,
    pub source: Source,
    pub base_size: usize,
    pub percent: u32,
    pub seed: u64,
    pub accuracy: Option<f64>,
}

type Key = (Source, usize, u32, u64);

fn augmentation_count(size: usize, percent: u32) -> usize {
    (size as f64 * percent as f64 / 100.0).round() as usize
}

/// Runs every (size, seed, source, percentage) cell. Base sets for one seed
/// are nested prefixes of a seeded permutation of the real pool; the
/// validation split and the classifier seed are shared by all sources.
pub fn run_grid(grid: &AugmentationGrid, data: &GridData, cfg: &DownstreamConfig) -> Result<Vec<GridRow>> {
    grid.validate()?;
    cfg.validate()?;
    if let Some(&s) = grid.base_sizes.iter().find(|&&s| s > data.real.len()) {
        return Err(Error::InsufficientData(format!(
            "base size {s} exceeds the {} available real sentences",
            data.real.len()
        )));
    }
    let mut jobs: Vec<(usize, u64, Option<(Source, u32)>)> = Vec::new();
    for &size in &grid.base_sizes {
        for &seed in &grid.seeds {
            jobs.push((size, seed, None));
            for &src in &grid.sources {
                for &pct in &grid.percentages {
                    jobs.push((size, seed, Some((src, pct))));
                }
            }
        }
    }
    let results: Vec<(usize, u64, Option<(Source, u32)>, Option<f64>)> = jobs
        .par_iter()
        .map(|&(size, seed, cell)| Ok((size, seed, cell, run_cell(grid, data, cfg, size, seed, cell)?)))
        .collect::<Result<_>>()?;
    let mut merged: BTreeMap<Key, Option<f64>> = BTreeMap::new();
    let mut insert = |k: Key, v: Option<f64>| -> Result<()> {
        if merged.insert(k, v).is_some() {
            return Err(Error::InvalidInput(format!("duplicate grid cell {k:?}")));
        }
        Ok(())
    };
    for (size, seed, cell, acc) in results {
        match cell {
            Some((src, pct)) => insert((src, size, pct, seed), acc)?,
            None => {
                for &src in &grid.sources {
                    insert((src, size, 0, seed), acc)?;
                }
            }
        }
    }
    Ok(merged
        .into_iter()
        .map(|((source, base_size, percent, seed), accuracy)| GridRow {
            dataset: grid.dataset.clone(),
            source,
            base_size,
            percent,
            seed,
            accuracy,
        })
        .collect())
}

fn run_cell(
    grid: &AugmentationGrid,
    data: &GridData,
    cfg: &DownstreamConfig,
    size: usize,
    seed: u64,
    cell: Option<(Source, u32)>,
) -> Result<Option<f64>> {
    let mut order: Vec<usize> = (0..data.real.len()).collect();
    order.shuffle(&mut substream(seed, "grid/real"));
    let base: Vec<Example> = order[..size].iter().map(|&i| data.real[i].clone()).collect();
    let n_valid = ((size as f64 * grid.valid_fraction).round() as usize).min(size - 1);
    let (valid, base_train) = base.split_at(n_valid);
    let mut train = base_train.to_vec();
    if let Some((src, pct)) = cell {
        let n = augmentation_count(size, pct);
        match src {
            Source::Real => {
                if size + n > order.len() {
                    return Ok(None);
                }
                train.extend(order[size..size + n].iter().map(|&i| data.real[i].clone()));
            }
            Source::Eda => {
                let mut rng = substream(seed, &format!("grid/eda/{size}/{pct}"));
                for i in 0..n {
                    let (tokens, label) = &base_train[i % base_train.len()];
                    let aug = eda_augment(tokens, grid.eda_alpha, None, &mut rng, data.synonyms);
                    train.push((aug, *label));
                }
            }
            Source::Cga => {
                if n > data.generated.len() {
                    return Err(Error::InsufficientData(format!(
                        "{n} generated sentences requested, {} available",
                        data.generated.len()
                    )));
                }
                let mut gen: Vec<usize> = (0..data.generated.len()).collect();
                gen.shuffle(&mut substream(seed, "grid/cga"));
                train.extend(gen[..n].iter().map(|&i| data.generated[i].clone()));
            }
        }
    }
    let r = train_downstream(&train, valid, data.test, data.classes, cfg, derive_seed(seed, &format!("downstream/{size}")))?;
    Ok(Some(r.test_accuracy))
}

/// Mean and std over seeds of one (source, size, percentage) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub source: Source,
    pub base_size: usize,
    pub percent: u32,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub seeds: usize,
}

/// Aggregates available cells; unavailable ones are skipped.
pub fn aggregate(rows: &[GridRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, Source, usize, u32), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(a) = r.accuracy {
            groups.entry((r.dataset.clone(), r.source, r.base_size, r.percent)).or_default().push(a);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, source, base_size, percent), v)| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
            AggregateRow {
                dataset,
                source,
                base_size,
                percent,
                mean: m,
                std: var.sqrt(),
                seeds: v.len(),
            }
        })
        .collect()
}

/// Highest-mean row per (dataset, size, source); ties go to the lower
/// percentage.
pub fn best_rows(aggregates: &[AggregateRow]) -> Vec<AggregateRow> {
    let mut best: BTreeMap<(String, usize, Source), AggregateRow> = BTreeMap::new();
    for a in aggregates {
        let key = (a.dataset.clone(), a.base_size, a.source);
        let better = match best.get(&key) {
            None => true,
            Some(b) => a.mean > b.mean || (a.mean == b.mean && a.percent < b.percent),
        };
        if better {
            best.insert(key, a.clone());
        }
    }
    best.into_values().collect()
}

pub fn rows_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("dataset,source,base_size,percent,seed,accuracy\n");
    for r in rows {
        let acc = r.accuracy.map(|a| format!("{a:.6}")).unwrap_or_else(|| "unavailable".into());
        let _ = writeln!(out, "{},{},{},{},{},{acc}", r.dataset, r.source.as_str(), r.base_size, r.percent, r.seed);
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("dataset,source,base_size,percent,mean,std,seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{}",
            r.dataset,
            r.source.as_str(),
            r.base_size,
            r.percent,
            r.mean,
            r.std,
            r.seeds
        );
    }
    out
}

/// Best rows as a markdown table: model, size, `acc. (std)` and percentage.
pub fn summary_markdown(best: &[AggregateRow]) -> String {
    let mut out = String::from("| model | size | acc. (std) | % |\n|---|---|---|---|\n");
    for r in best {
        let _ = writeln!(
            out,
            "| {}+{} | {} | {:.2} ({:.2}) | {} |",
            r.dataset,
            r.source.as_str().to_uppercase(),
            r.base_size,
            r.mean,
            r.std,
            r.percent
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_corpus, toy_synonym_table, AttributeSchema};

    fn agg(source: Source, percent: u32, mean: f64) -> AggregateRow {
        AggregateRow {
            dataset: "toy".into(),
            source,
            base_size: 200,
            percent,
            mean,
            std: 0.02,
            seeds: 5,
        }
    }

    #[test]
    fn ties_go_to_the_lower_percentage() {
        let best = best_rows(&[agg(Source::Cga, 50, 0.8), agg(Source::Cga, 20, 0.8), agg(Source::Cga, 70, 0.7)]);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].percent, 20);
        assert!(summary_markdown(&best).contains("| toy+CGA | 200 | 0.80 (0.02) | 20 |"));
    }

    #[test]
    fn empty_results_keep_headers() {
        assert_eq!(summary_markdown(&[]).lines().count(), 2);
        assert_eq!(aggregate_csv(&aggregate(&[])).lines().count(), 1);
        assert_eq!(rows_csv(&[]), "dataset,source,base_size,percent,seed,accuracy\n");
    }

    #[test]
    fn counts_are_relative_to_the_base() {
        assert_eq!(augmentation_count(200, 10), 20);
        assert_eq!(augmentation_count(200, 120), 240);
        assert_eq!(augmentation_count(500, 150), 750);
    }

    #[test]
    fn bad_grids_are_rejected() {
        let g = AugmentationGrid { percentages: vec![0, 10], ..AugmentationGrid::default() };
        assert!(g.validate().is_err());
        let g = AugmentationGrid { sources: vec![], ..AugmentationGrid::default() };
        assert!(g.validate().is_err());
    }

    fn examples(n: usize, seed: u64) -> Vec<Example> {
        generate_toy_corpus(n, &AttributeSchema::toy(), seed)
            .unwrap()
            .sentences
            .into_iter()
            .map(|s| (s.tokens, s.labels[0]))
            .collect()
    }

    #[test]
    fn small_grid_shape_and_determinism() {
        let real = examples(60, 1);
        let test = examples(30, 2);
        let generated = examples(80, 3);
        let table = toy_synonym_table();
        let data = GridData { real: &real, test: &test, generated: &generated, synonyms: &table, classes: 2 };
        let grid = AugmentationGrid {
            base_sizes: vec![20],
            percentages: vec![50, 300],
            sources: vec![Source::Real, Source::Eda, Source::Cga],
            seeds: vec![0],
            ..AugmentationGrid::default()
        };
        let cfg = DownstreamConfig { emb_dim: 8, hidden_dim: 8, max_epochs: 3, patience: 1, ..DownstreamConfig::default() };
        let a = run_grid(&grid, &data, &cfg).unwrap();
        assert_eq!(a.len(), 9);
        let zero: Vec<_> = a.iter().filter(|r| r.percent == 0).map(|r| r.accuracy).collect();
        assert!(zero.iter().all(|z| *z == zero[0]));
        let real300 = a.iter().find(|r| r.source == Source::Real && r.percent == 300).unwrap();
        assert_eq!(real300.accuracy, None);
        assert_eq!(a, run_grid(&grid, &data, &cfg).unwrap());
        let too_big = AugmentationGrid { base_sizes: vec![100], ..grid };
        assert!(run_grid(&too_big, &data, &cfg).is_err());
    }
}
