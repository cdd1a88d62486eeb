//! Root-cause ranking by random walk with restarts over a causal graph.
//!
//! The walker moves from effects to causes: from node `j` it steps to one of
//! the parents of `j` uniformly at random. Mass at a node without parents and
//! the restart mass are both sent to the restart distribution `q`, which is
//! proportional to the per-node anomaly scores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwrConfig {
    pub restart_prob: f64,
    /// Nonnegative restart weights, one per node.
    pub anomaly_scores: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RwrConfig {
    fn default() -> Self {
        Self { restart_prob: 0.3, anomaly_scores: Vec::new(), tol: 1e-12, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub node: usize,
    pub score: f64,
}

/// Stationary distribution of the walk.
pub fn stationary(a: &AdjacencyMatrix, cfg: &RwrConfig) -> Result<Vec<f64>> {
    let d = a.d();
    if cfg.anomaly_scores.len() != d {
        return Err(Error::DimensionMismatch(format!("{} anomaly scores for {d} nodes", cfg.anomaly_scores.len())));
    }
    if !(cfg.restart_prob > 0.0 && cfg.restart_prob < 1.0) {
        return Err(Error::InvalidConfig(format!("restart probability must lie in (0, 1), got {}", cfg.restart_prob)));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 {
        return Err(Error::InvalidConfig("tolerance and iteration cap must be positive".into()));
    }
    if cfg.anomaly_scores.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidConfig("anomaly scores must be finite and nonnegative".into()));
    }
    let mass: f64 = cfg.anomaly_scores.iter().sum();
    if mass <= 0.0 {
        return Err(Error::Empty("all anomaly scores are zero"));
    }
    let q: Vec<f64> = cfg.anomaly_scores.iter().map(|s| s / mass).collect();
    let parents: Vec<Vec<usize>> = (0..d).map(|j| a.parents(j)).collect();
    let r = cfg.restart_prob;

    let mut pi = q.clone();
    for _ in 0..cfg.max_iter {
        let mut next = vec![0.0; d];
        let mut dangling = 0.0;
        for (j, pa) in parents.iter().enumerate() {
            if pa.is_empty() {
                dangling += pi[j];
            } else {
                let share = pi[j] / pa.len() as f64;
                for &p in pa {
                    next[p] += share;
                }
            }
        }
        for (v, qv) in next.iter_mut().zip(&q) {
            *v = (1.0 - r) * (*v + dangling * qv) + r * qv;
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < cfg.tol {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence(cfg.max_iter))
}

/// Nodes sorted by stationary score, descending; ties by index.
pub fn rank_root_causes(a: &AdjacencyMatrix, cfg: &RwrConfig) -> Result<Vec<RankedNode>> {
    let pi = stationary(a, cfg)?;
    let mut ranked: Vec<RankedNode> = pi.into_iter().enumerate().map(|(node, score)| RankedNode { node, score }).collect();
    ranked.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.node.cmp(&y.node)));
    Ok(ranked)
}

/// Per-node anomaly score: mean |z| over the fault window minus the normal
/// window's own mean |z|, floored at zero. `z` standardises by the normal
/// window's mean and standard deviation.
pub fn anomaly_scores(normal: &DMatrix<f64>, fault: &DMatrix<f64>) -> Result<Vec<f64>> {
    if normal.ncols() != fault.ncols() {
        return Err(Error::DimensionMismatch("normal and fault windows differ in width".into()));
    }
    if normal.nrows() < 2 || fault.nrows() == 0 {
        return Err(Error::InsufficientData { rows: normal.nrows().min(fault.nrows()), needed: 2 });
    }
    let n = normal.nrows() as f64;
    Ok((0..normal.ncols())
        .map(|j| {
            let col = normal.column(j);
            let mean = col.sum() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
            let mean_abs_z = |m: &DMatrix<f64>| m.column(j).iter().map(|v| ((v - mean) / std).abs()).sum::<f64>() / m.nrows() as f64;
            (mean_abs_z(fault) - mean_abs_z(normal)).max(0.0)
        })
        .collect())
}
