use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, SPECIALS};
use crate::error::{Error, Result};

/// Maps a sentence to a unit vector, or `None` when it carries no information.
pub trait Embedder: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Option<Vec<f64>>;
}

/// L2-normalized mean of word vectors; unknown words are skipped.
#[derive(Debug, Clone, Default)]
pub struct MeanWordVectors {
    pub vectors: HashMap<String, Vec<f64>>,
}

impl MeanWordVectors {
    /// Uses the rows of an embedding table, skipping special tokens.
    pub fn from_table(vocab: &Vocabulary, table: &[Vec<f32>]) -> Self {
        let vectors = vocab
            .tokens()
            .iter()
            .zip(table)
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .map(|(t, row)| (t.clone(), row.iter().map(|&x| x as f64).collect()))
            .collect();
        Self { vectors }
    }

    /// Reads the word2vec / GloVe text format: `word v1 v2 ...` per line,
    /// with an optional `count dim` first line.
    pub fn load_text(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() || (i == 0 && parts.len() == 2) {
                continue;
            }
            let v: Vec<f64> = parts[1..]
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(Error::InvalidInput(format!("{}:{}: inconsistent dimension", path.display(), i + 1)));
            }
            vectors.insert(parts[0].to_string(), v);
        }
        Ok(Self { vectors })
    }
}

impl Embedder for MeanWordVectors {
    fn embed(&self, tokens: &[String]) -> Option<Vec<f64>> {
        let mut sum: Option<Vec<f64>> = None;
        for t in tokens {
            if let Some(v) = self.vectors.get(t) {
                match &mut sum {
                    Some(s) => s.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                    None => sum = Some(v.clone()),
                }
            }
        }
        let s = sum?;
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        (norm > 0.0).then(|| s.iter().map(|x| x / norm).collect())
    }
}

pub fn embed_sentence(tokens: &[String], embedder: &dyn Embedder) -> Option<Vec<f64>> {
    if tokens.is_empty() {
        return None;
    }
    embedder.embed(tokens)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise cosine similarities of class-sorted unit embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub matrix: Vec<Vec<f64>>,
    /// Class of each row, non-decreasing.
    pub classes: Vec<usize>,
    /// Start row of each class block, plus the total as the last entry.
    pub boundaries: Vec<usize>,
    /// For each sorted row, its index in the input.
    pub order: Vec<usize>,
}

/// Sorts embeddings by class (stable) and computes the cosine matrix.
pub fn similarity_matrix(embeddings: &[Vec<f64>], classes: &[usize]) -> Result<SimilarityReport> {
    if embeddings.len() != classes.len() {
        return Err(Error::InvalidInput("one class per embedding is required".into()));
    }
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    order.sort_by_key(|&i| classes[i]);
    let sorted: Vec<&Vec<f64>> = order.iter().map(|&i| &embeddings[i]).collect();
    let matrix: Vec<Vec<f64>> = sorted
        .par_iter()
        .map(|a| sorted.iter().map(|b| dot(a, b)).collect())
        .collect();
    let cls: Vec<usize> = order.iter().map(|&i| classes[i]).collect();
    let mut boundaries = vec![0];
    for i in 1..cls.len() {
        if cls[i] != cls[i - 1] {
            boundaries.push(i);
        }
    }
    boundaries.push(cls.len());
    Ok(SimilarityReport {
        matrix,
        classes: cls,
        boundaries,
        order,
    })
}

/// Mean of the `k` largest similarities between `sample` and `cluster`
/// members (excluding the sample itself). Returns the score and whether `k`
/// had to be lowered to the number of available neighbours.
pub fn cluster_similarity_score(matrix: &[Vec<f64>], sample: usize, cluster: &[usize], k: usize) -> Result<(f64, bool)> {
    let mut sims: Vec<f64> = cluster
        .iter()
        .filter(|&&j| j != sample)
        .map(|&j| matrix[sample][j])
        .collect();
    if sims.is_empty() || k == 0 {
        return Err(Error::InvalidInput("cluster has no neighbours for this sample".into()));
    }
    sims.sort_by(|a, b| b.total_cmp(a));
    let flagged = sims.len() < k;
    let k = k.min(sims.len());
    Ok((sims[..k].iter().sum::<f64>() / k as f64, flagged))
}

/// Histogram with fixed-width bins over [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub start: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bin_width: f64) -> Self {
        let n = (2.0 / bin_width).round() as usize;
        let mut counts = vec![0; n];
        for v in values {
            let b = (((v + 1.0) / bin_width).floor() as isize).clamp(0, n as isize - 1) as usize;
            counts[b] += 1;
        }
        Self {
            bin_width,
            start: -1.0,
            counts,
        }
    }
}

/// Per-cluster similarity-score histograms and block means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Keyed `"a-b"`: scores of class-`a` samples against class-`b` members.
    pub histograms: BTreeMap<String, Histogram>,
    pub mean_scores: BTreeMap<String, f64>,
    pub k_lowered: usize,
    pub mean_intra: f64,
    pub mean_cross: f64,
}

pub const HISTOGRAM_BIN: f64 = 0.02;

pub fn summarize_clusters(report: &SimilarityReport, k: usize) -> Result<ClusterSummary> {
    let blocks: Vec<(usize, Vec<usize>)> = report
        .boundaries
        .windows(2)
        .map(|w| (report.classes[w[0]], (w[0]..w[1]).collect()))
        .collect();
    let mut histograms = BTreeMap::new();
    let mut mean_scores = BTreeMap::new();
    let mut k_lowered = 0;
    for (ca, rows) in &blocks {
        for (cb, members) in &blocks {
            let mut scores = Vec::with_capacity(rows.len());
            for &i in rows {
                let (s, low) = cluster_similarity_score(&report.matrix, i, members, k)?;
                k_lowered += low as usize;
                scores.push(s);
            }
            let key = format!("{ca}-{cb}");
            mean_scores.insert(key.clone(), scores.iter().sum::<f64>() / scores.len() as f64);
            histograms.insert(key, Histogram::new(&scores, HISTOGRAM_BIN));
        }
    }
    let (mut intra, mut n_intra, mut cross, mut n_cross) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..report.matrix.len() {
        for j in 0..report.matrix.len() {
            if i == j {
                continue;
            }
            if report.classes[i] == report.classes[j] {
                intra += report.matrix[i][j];
                n_intra += 1;
            } else {
                cross += report.matrix[i][j];
                n_cross += 1;
            }
        }
    }
    Ok(ClusterSummary {
        histograms,
        mean_scores,
        k_lowered,
        mean_intra: intra / n_intra.max(1) as f64,
        mean_cross: cross / n_cross.max(1) as f64,
    })
}

/// ASCII rendering of a histogram, one line per non-empty bin.
pub fn ascii_histogram(h: &Histogram, width: usize) -> String {
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1);
    let mut out = String::new();
    for (i, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let lo = h.start + i as f64 * h.bin_width;
        out.push_str(&format!("{lo:+.2} {:>6} {}\n", c, "#".repeat(c * width / max)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(String::from).collect()
    }

    fn embedder() -> MeanWordVectors {
        let mut vectors = HashMap::new();
        vectors.insert("good".into(), vec![1.0, 0.0]);
        vectors.insert("bad".into(), vec![0.0, 2.0]);
        MeanWordVectors { vectors }
    }

    #[test]
    fn unit_norm_and_mean_invariance() {
        let e = embedder();
        let a = embed_sentence(&toks("good bad"), &e).unwrap();
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
        let g1 = embed_sentence(&toks("good"), &e).unwrap();
        let g2 = embed_sentence(&toks("good good"), &e).unwrap();
        assert!((dot(&g1, &g2) - 1.0).abs() < 1e-12);
        assert!(embed_sentence(&toks("zzz"), &e).is_none());
        assert!(embed_sentence(&[], &e).is_none());
    }

    #[test]
    fn orthogonal_pair() {
        let r = similarity_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 1]).unwrap();
        assert_eq!(r.matrix, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(r.boundaries, vec![0, 1, 2]);
    }

    #[test]
    fn cluster_scores() {
        let m = vec![vec![1.0; 4]; 4];
        assert_eq!(cluster_similarity_score(&m, 0, &[0, 1, 2, 3], 2).unwrap(), (1.0, false));
        let (s, low) = cluster_similarity_score(&m, 0, &[0, 1, 2, 3], 50).unwrap();
        assert_eq!((s, low), (1.0, true));
        let z = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(cluster_similarity_score(&z, 0, &[1, 2], 2).unwrap().0, 0.0);
        assert!(cluster_similarity_score(&z, 0, &[0], 1).is_err());
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::new(&[-1.0, 0.0, 0.01, 0.999, 1.0], 0.02);
        assert_eq!(h.counts.len(), 100);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[50], 2);
        assert_eq!(h.counts[99], 2);
        assert!(ascii_histogram(&h, 10).lines().count() == 3);
    }

    #[test]
    fn block_means() {
        let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let r = similarity_matrix(&e, &[1, 0, 1, 0]).unwrap();
        let s = summarize_clusters(&r, 50).unwrap();
        assert_eq!(s.mean_intra, 0.0);
        assert_eq!(s.mean_cross, 0.5);
        assert_eq!(s.histograms.len(), 4);
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
        v.into_iter().map(|x| x / n).collect()
    }

    proptest! {
        #[test]
        fn symmetric_unit_diagonal_and_permutation(raw in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 3), 2..8), seed in 0u64..100) {
            let e: Vec<Vec<f64>> = raw.into_iter().map(unit).collect();
            let classes: Vec<usize> = (0..e.len()).map(|i| i % 2).collect();
            let r = similarity_matrix(&e, &classes).unwrap();
            for i in 0..e.len() {
                prop_assert!((r.matrix[i][i] - 1.0).abs() < 1e-6);
                for j in 0..e.len() {
                    prop_assert!((r.matrix[i][j] - r.matrix[j][i]).abs() < 1e-6);
                }
            }
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..e.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pe: Vec<Vec<f64>> = perm.iter().map(|&i| e[i].clone()).collect();
            let pc: Vec<usize> = perm.iter().map(|&i| classes[i]).collect();
            let rp = similarity_matrix(&pe, &pc).unwrap();
            for a in 0..e.len() {
                for b in 0..e.len() {
                    let (ia, ib) = (perm[a], perm[b]);
                    prop_assert!((dot(&pe[a], &pe[b]) - dot(&e[ia], &e[ib])).abs() < 1e-12);
                }
            }
            prop_assert_eq!(rp.boundaries, r.boundaries);
        }

        #[test]
        fn higher_neighbour_never_lowers_score(sims in prop::collection::vec(-1.0f64..1.0, 3..10), extra in -1.0f64..1.0, k in 1usize..5) {
            let n = sims.len() + 2;
            let mut m = vec![vec![0.0; n]; n];
            for (j, s) in sims.iter().enumerate() { m[0][j + 1] = *s; }
            m[0][n - 1] = extra;
            let base: Vec<usize> = (1..=sims.len()).collect();
            let (before, _) = cluster_similarity_score(&m, 0, &base, k).unwrap();
            let mut kth: Vec<f64> = sims.clone();
            kth.sort_by(|a, b| b.total_cmp(a));
            let threshold = kth[k.min(kth.len()) - 1];
            if k <= sims.len() && extra >= threshold {
                let mut with: Vec<usize> = base.clone();
                with.push(n - 1);
                let (after, _) = cluster_similarity_score(&m, 0, &with, k).unwrap();
                prop_assert!(after >= before - 1e-12);
            }
        }
    }
}
