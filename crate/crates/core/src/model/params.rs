use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Named trainable parameters. Names are dotted paths whose first segment
/// selects the sub-network (`emb`, `enc`, `dec`, `disc`).
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let t = Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        self.vars.insert(name.to_string(), Var::from_tensor(&t)?);
        Ok(())
    }

    pub fn var(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no parameter named `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Parameters whose name starts with one of `prefixes`.
    pub fn group(&self, prefixes: &[&str]) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Deep copy: the returned store does not share storage with `self`.
    pub fn deep_clone(&self) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (k, v) in &self.vars {
            vars.insert(k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?);
        }
        Ok(Self {
            vars,
            dtype: self.dtype,
        })
    }

    pub fn all_finite(&self) -> Result<bool> {
        for v in self.vars.values() {
            let vals = v.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            if vals.iter().any(|x| !x.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A `rows x cols` matrix made of `cols / rows` square orthogonal blocks
/// placed side by side (one per gate).
pub(crate) fn orthogonal_blocks<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    let blocks = cols / rows;
    for b in 0..blocks {
        let q = orthogonal(rng, rows);
        for r in 0..rows {
            for c in 0..rows {
                out[r * cols + b * rows + c] = q[r * rows + c];
            }
        }
    }
    out
}

/// Random `n x n` orthogonal matrix via Gram-Schmidt on Gaussian columns.
fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for u in &cols {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    let mut m = vec![0.0; n * n];
    for (c, col) in cols.iter().enumerate() {
        for (r, x) in col.iter().enumerate() {
            m[r * n + c] = *x;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_blocks_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (n, cols) = (5, 15);
        let m = orthogonal_blocks(&mut rng, n, cols);
        for b in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|r| m[r * cols + b * n + i] * m[r * cols + b * n + j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn deep_clone_is_independent() {
        let mut p = ParamStore::new(DType::F32);
        p.insert("a.w", &[2], vec![1.0, 2.0]).unwrap();
        let q = p.deep_clone().unwrap();
        p.var("a.w").unwrap().set(&Tensor::new(&[5f32, 5.0], &Device::Cpu).unwrap()).unwrap();
        assert_eq!(q.var("a.w").unwrap().as_tensor().to_vec1::<f32>().unwrap(), [1.0, 2.0]);
        assert_eq!(p.num_parameters(), 2);
    }
}
