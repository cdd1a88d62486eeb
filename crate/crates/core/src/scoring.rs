//! BIC scoring of candidate DAGs and the agents' reward functions.
//!
//! The score is the non-equal-variance BIC
//!
//! ```text
//! S(A, X) = Σᵢ n·ln(RSSᵢ / n) + |E|·ln n
//! ```
//!
//! where `RSSᵢ` is the residual sum of squares of an intercept regression of
//! column `i` on its parents. Lower is better; rewards use `-S`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{complement, AdjacencyMatrix};

/// Residual variances are floored here so that noiseless fits stay finite.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Linear,
    /// Parents, their squares and pairwise products.
    #[serde(alias = "quadratic-features")]
    Quadratic,
}

/// Noise-variance model of the likelihood term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variance {
    /// `Σᵢ n·ln(RSSᵢ/n)`: one variance per node.
    #[default]
    PerNode,
    /// `n·d·ln(Σᵢ RSSᵢ / (n·d))`: a single variance shared by all nodes.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub backend: Backend,
    pub variance: Variance,
    /// Weight of the state-specific decoupling term. Not a published value.
    pub penalty_lambda1: f64,
    /// Weight of the state-invariant decoupling term. Not a published value.
    pub penalty_lambda2: f64,
    pub ridge_eps: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Linear,
            variance: Variance::PerNode,
            penalty_lambda1: 0.1,
            penalty_lambda2: 0.1,
            ridge_eps: 1e-8,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_eps > 0.0 && self.ridge_eps.is_finite()) {
            return Err(Error::InvalidConfig("ridge_eps must be a positive finite number".into()));
        }
        for (name, v) in [("lambda1", self.penalty_lambda1), ("lambda2", self.penalty_lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Per-batch scoring context. Column means and the centred Gram matrix are
/// computed once; node scores are memoised by parent set.
pub struct BatchScorer {
    n: usize,
    d: usize,
    backend: Backend,
    variance: Variance,
    ridge: f64,
    centered: DMatrix<f64>,
    gram: DMatrix<f64>,
    cache: Mutex<HashMap<(usize, Vec<u64>), f64>>,
}

impl BatchScorer {
    pub fn new(x: &DMatrix<f64>, cfg: &ScoreConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, d) = x.shape();
        let needed = d + 2;
        if n < needed {
            return Err(Error::InsufficientData { rows: n, needed });
        }
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let gram = centered.transpose() * &centered;
        Ok(Self {
            n,
            d,
            backend: cfg.backend,
            variance: cfg.variance,
            ridge: cfg.ridge_eps,
            centered,
            gram,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Residual sum of squares of `node` regressed on `parents` (plus intercept).
    pub fn node_rss(&self, node: usize, parents: &[usize]) -> f64 {
        if parents.is_empty() {
            return self.gram[(node, node)].max(0.0);
        }
        match self.backend {
            Backend::Linear => self.linear_rss(node, parents),
            Backend::Quadratic => self.quadratic_rss(node, parents),
        }
    }

    fn linear_rss(&self, node: usize, parents: &[usize]) -> f64 {
        let p = parents.len();
        let g = DMatrix::from_fn(p, p, |a, b| {
            self.gram[(parents[a], parents[b])] + if a == b { self.ridge } else { 0.0 }
        });
        let rhs = DVector::from_fn(p, |a, _| self.gram[(parents[a], node)]);
        let explained = match g.cholesky() {
            Some(ch) => rhs.dot(&ch.solve(&rhs)),
            None => 0.0,
        };
        (self.gram[(node, node)] - explained).max(0.0)
    }

    fn quadratic_rss(&self, node: usize, parents: &[usize]) -> f64 {
        let feats = quadratic_features(&self.centered, parents);
        let y = self.centered.column(node).into_owned();
        let mut g = feats.transpose() * &feats;
        for k in 0..g.nrows() {
            g[(k, k)] += self.ridge;
        }
        let rhs = feats.transpose() * &y;
        match g.cholesky() {
            Some(ch) => {
                let beta = ch.solve(&rhs);
                let resid = &y - &feats * beta;
                resid.norm_squared()
            }
            None => y.norm_squared(),
        }
    }

    fn cached_rss(&self, node: usize, parents: &[usize]) -> f64 {
        let key = (node, bitset(parents));
        if let Some(&s) = self.cache.lock().expect("score cache poisoned").get(&key) {
            return s;
        }
        let rss = self.node_rss(node, parents);
        self.cache.lock().expect("score cache poisoned").insert(key, rss);
        rss
    }

    pub fn bic(&self, a: &AdjacencyMatrix) -> Result<f64> {
        if a.d() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, batch has {} columns",
                a.d(),
                self.d
            )));
        }
        let n = self.n as f64;
        let rss = (0..self.d).map(|i| self.cached_rss(i, &a.parents(i)));
        let fit = match self.variance {
            Variance::PerNode => rss.map(|r| n * (r / n).max(MIN_VARIANCE).ln()).sum(),
            Variance::Shared => {
                let total = n * self.d as f64;
                total * (rss.sum::<f64>() / total).max(MIN_VARIANCE).ln()
            }
        };
        Ok(fit + a.edge_count() as f64 * n.ln())
    }
}

fn bitset(idx: &[usize]) -> Vec<u64> {
    let words = idx.iter().max().map_or(0, |m| m / 64 + 1);
    let mut bits = vec![0u64; words];
    for &i in idx {
        bits[i / 64] |= 1 << (i % 64);
    }
    bits
}

/// Centred quadratic feature matrix: parents, squares, pairwise products.
fn quadratic_features(centered: &DMatrix<f64>, parents: &[usize]) -> DMatrix<f64> {
    let n = centered.nrows();
    let p = parents.len();
    let q = p + p * (p + 1) / 2;
    let mut f = DMatrix::zeros(n, q);
    let mut k = 0;
    for &a in parents {
        f.set_column(k, &centered.column(a));
        k += 1;
    }
    for x in 0..p {
        for y in x..p {
            let col = centered.column(parents[x]).component_mul(&centered.column(parents[y]));
            f.set_column(k, &col);
            k += 1;
        }
    }
    for mut col in f.column_iter_mut().skip(p) {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    f
}

/// BIC of `a` on the rows of `x` (`n x d`).
pub fn bic_score(a: &AdjacencyMatrix, x: &DMatrix<f64>, cfg: &ScoreConfig) -> Result<f64> {
    BatchScorer::new(x, cfg)?.bic(a)
}

fn sq_dist(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    a.hamming(b).map(|h| h as f64)
}

/// `(‖Ã − ∁Ā_prev‖² + ‖Ã − ∁A_{t−1}‖²) / d`.
pub fn decouple_specific(
    spec: &AdjacencyMatrix,
    inv_prev: &AdjacencyMatrix,
    prev_state: &AdjacencyMatrix,
) -> Result<f64> {
    let d = spec.d().max(1) as f64;
    Ok((sq_dist(spec, &complement(inv_prev))? + sq_dist(spec, &complement(prev_state))?) / d)
}

/// `(‖Ā − ∁Ã_prev‖² + ‖Ā − A_{t−1}‖²) / d`; the second term has no complement.
pub fn decouple_invariant(
    inv: &AdjacencyMatrix,
    spec_prev: &AdjacencyMatrix,
    prev_state: &AdjacencyMatrix,
) -> Result<f64> {
    let d = inv.d().max(1) as f64;
    Ok((sq_dist(inv, &complement(spec_prev))? + sq_dist(inv, prev_state)?) / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Specific,
    Invariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub bic: f64,
    pub decouple: f64,
    pub total: f64,
}

/// The matrices a decoupling term compares against.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    /// The agent's own DAG for this sample (Ã or Ā).
    pub own: &'a AdjacencyMatrix,
    /// The other agent's DAG from the previous batch.
    pub other_prev: &'a AdjacencyMatrix,
    /// Final estimate of the previous system state.
    pub prev_state: &'a AdjacencyMatrix,
}

/// Combines an already computed BIC with the agent's decoupling term.
pub fn reward_from_bic(kind: AgentKind, bic: f64, ctx: &RewardContext<'_>, cfg: &ScoreConfig) -> Result<RewardBreakdown> {
    let (decouple, lambda) = match kind {
        AgentKind::Specific => (decouple_specific(ctx.own, ctx.other_prev, ctx.prev_state)?, cfg.penalty_lambda1),
        AgentKind::Invariant => (decouple_invariant(ctx.own, ctx.other_prev, ctx.prev_state)?, cfg.penalty_lambda2),
    };
    Ok(RewardBreakdown { bic, decouple, total: -bic + lambda * decouple })
}

/// `-S(A_full, X) + λ·decouple` for the given agent.
pub fn reward(
    kind: AgentKind,
    full: &AdjacencyMatrix,
    ctx: &RewardContext<'_>,
    scorer: &BatchScorer,
    cfg: &ScoreConfig,
) -> Result<RewardBreakdown> {
    let bic = scorer.bic(full)?;
    reward_from_bic(kind, bic, ctx, cfg)
}
