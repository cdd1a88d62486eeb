use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter tensors with their Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<DMatrix<f64>>,
    first: Vec<DMatrix<f64>>,
    second: Vec<DMatrix<f64>>,
    step: u64,
}

/// Gradient buffers shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(Vec<DMatrix<f64>>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &DMatrix<f64> {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DMatrix<f64> {
        &mut self.0[id.0]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|m| m.iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), first: Vec::new(), second: Vec::new(), step: 0 }
    }

    pub fn add(&mut self, name: impl Into<String>, value: DMatrix<f64>) -> ParamId {
        let (r, c) = value.shape();
        self.names.push(name.into());
        self.values.push(value);
        self.first.push(DMatrix::zeros(r, c));
        self.second.push(DMatrix::zeros(r, c));
        ParamId(self.values.len() - 1)
    }

    /// Glorot-uniform weight matrix.
    pub fn add_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let w = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound));
        self.add(name, w)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, DMatrix::zeros(rows, cols))
    }

    pub fn get(&self, id: ParamId) -> &DMatrix<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DMatrix<f64> {
        &mut self.values[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.values.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect())
    }

    /// All parameter scalars in store order (each tensor column-major).
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::DimensionMismatch(format!(
                "flat parameter vector has {} entries, store has {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut k = 0;
        for m in &mut self.values {
            for v in m.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &Grads, cfg: &AdamConfig) -> Result<()> {
        if grads.0.len() != self.values.len()
            || grads.0.iter().zip(&self.values).any(|(g, p)| g.shape() != p.shape())
        {
            return Err(Error::DimensionMismatch("gradient shapes do not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((p, g), (m, v)) in self
            .values
            .iter_mut()
            .zip(&grads.0)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensor = |name: &str, m: &DMatrix<f64>| NamedTensor {
            name: name.to_string(),
            shape: [m.nrows(), m.ncols()],
            values: (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect(),
        };
        Checkpoint {
            step: self.step,
            params: self.names.iter().zip(&self.values).map(|(n, m)| tensor(n, m)).collect(),
            first_moments: self.names.iter().zip(&self.first).map(|(n, m)| tensor(n, m)).collect(),
            second_moments: self.names.iter().zip(&self.second).map(|(n, m)| tensor(n, m)).collect(),
        }
    }

    /// Restores values and moments into a store with the same layout.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let restore = |dst: &mut Vec<DMatrix<f64>>, src: &[NamedTensor], names: &[String]| -> Result<()> {
            if src.len() != dst.len() {
                return Err(Error::DimensionMismatch(format!(
                    "checkpoint has {} tensors, store has {}",
                    src.len(),
                    dst.len()
                )));
            }
            for ((m, t), name) in dst.iter_mut().zip(src).zip(names) {
                if t.name != *name || t.shape != [m.nrows(), m.ncols()] || t.values.len() != m.len() {
                    return Err(Error::DimensionMismatch(format!("checkpoint tensor `{}` does not match `{name}`", t.name)));
                }
                *m = DMatrix::from_row_slice(t.shape[0], t.shape[1], &t.values);
            }
            Ok(())
        };
        restore(&mut self.values, &ck.params, &self.names)?;
        restore(&mut self.first, &ck.first_moments, &self.names)?;
        restore(&mut self.second, &ck.second_moments, &self.names)?;
        self.step = ck.step;
        Ok(())
    }
}

/// Shape plus row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub params: Vec<NamedTensor>,
    pub first_moments: Vec<NamedTensor>,
    pub second_moments: Vec<NamedTensor>,
}
