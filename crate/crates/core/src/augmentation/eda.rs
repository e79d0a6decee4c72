use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The four lexical perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaOp {
    SynonymReplacement,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

pub const EDA_OPS: [EdaOp; 4] = [
    EdaOp::SynonymReplacement,
    EdaOp::RandomInsertion,
    EdaOp::RandomSwap,
    EdaOp::RandomDeletion,
];

pub type SynonymTable = HashMap<String, Vec<String>>;

fn synonym_positions(tokens: &[String], table: &SynonymTable) -> Vec<usize> {
    (0..tokens.len())
        .filter(|&i| table.get(&tokens[i]).is_some_and(|s| !s.is_empty()))
        .collect()
}

fn swap<R: Rng + ?Sized>(tokens: &mut [String], n: usize, rng: &mut R) {
    if tokens.len() < 2 {
        return;
    }
    for _ in 0..n {
        let a = rng.random_range(0..tokens.len());
        let mut b = rng.random_range(0..tokens.len() - 1);
        if b >= a {
            b += 1;
        }
        tokens.swap(a, b);
    }
}

/// Applies one perturbation at rate `alpha` (`op = None` picks one
/// uniformly). Replacement and insertion fall back to swapping when no token
/// has a synonym.
pub fn eda_augment<R: Rng + ?Sized>(
    tokens: &[String],
    alpha: f64,
    op: Option<EdaOp>,
    rng: &mut R,
    table: &SynonymTable,
) -> Vec<String> {
    let mut out = tokens.to_vec();
    if out.is_empty() {
        return out;
    }
    let op = op.unwrap_or_else(|| *EDA_OPS.choose(rng).expect("nonempty"));
    let n = ((alpha * out.len() as f64) as usize).max(1);
    let candidates = synonym_positions(&out, table);
    match op {
        EdaOp::SynonymReplacement | EdaOp::RandomInsertion if candidates.is_empty() => swap(&mut out, n, rng),
        EdaOp::SynonymReplacement => {
            let mut pos = candidates;
            for _ in 0..n.min(pos.len()) {
                let k = rng.random_range(0..pos.len());
                let i = pos.swap_remove(k);
                out[i] = table[&out[i]].choose(rng).expect("nonempty").clone();
            }
        }
        EdaOp::RandomInsertion => {
            for _ in 0..n {
                let i = *candidates.choose(rng).expect("nonempty");
                let syn = table[&tokens[i]].choose(rng).expect("nonempty").clone();
                let at = rng.random_range(0..=out.len());
                out.insert(at, syn);
            }
        }
        EdaOp::RandomSwap => swap(&mut out, n, rng),
        EdaOp::RandomDeletion => {
            let kept: Vec<String> = out.iter().filter(|_| rng.random::<f64>() >= alpha).cloned().collect();
            out = if kept.is_empty() {
                vec![out.choose(rng).expect("nonempty").clone()]
            } else {
                kept
            };
        }
    }
    out
}
