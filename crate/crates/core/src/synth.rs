//! Synthetic non-stationary streams with per-state ground truth.
//!
//! The last state's graph is an Erdős–Rényi DAG. Earlier states are obtained
//! by deleting edges cumulatively while walking backwards, and each non-final
//! state additionally gets a few spurious edges that keep it acyclic. The
//! stream runs from the sparsest state to the complete one.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_acyclic, AdjacencyMatrix};
use crate::seed;
use crate::stream::StreamBatch;

const SEED_GRAPH: u64 = 1;
const SEED_WEIGHTS: u64 = 2;
const SEED_DELETE: u64 = 3;
const SEED_INJECT: u64 = 4;
const SEED_SAMPLE: u64 = 5;

const GP_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mechanism {
    /// Linear, Gaussian noise.
    #[default]
    LG,
    /// Linear, exponential noise.
    LE,
    /// Full quadratic polynomial in the parents, Gaussian noise.
    QR,
    /// Gaussian-process draw over the parents, Gaussian noise.
    GP,
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LG" => Ok(Mechanism::LG),
            "LE" => Ok(Mechanism::LE),
            "QR" => Ok(Mechanism::QR),
            "GP" => Ok(Mechanism::GP),
            other => Err(Error::InvalidConfig(format!("unknown mechanism `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub d: usize,
    /// Number of system states.
    pub m: usize,
    /// Spurious edges injected per non-final state, in percent of its edges.
    pub e: f64,
    pub mechanism: Mechanism,
    pub er_expected_degree: f64,
    pub n_per_state: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise_scale: f64,
    /// Standardise every column after it is generated. `None` picks the
    /// mechanism default: on for QR and GP, off for the linear families.
    pub standardize: Option<bool>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 10,
            m: 3,
            e: 1.0,
            mechanism: Mechanism::LG,
            er_expected_degree: 4.0,
            n_per_state: 500,
            batch_size: 50,
            seed: 0,
            noise_scale: 1.0,
            standardize: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.m < 2 {
            return bad("a non-stationary stream needs m >= 2 states");
        }
        if !(self.e >= 0.0 && self.e.is_finite()) {
            return bad("noise rate e must be finite and >= 0");
        }
        if !(self.er_expected_degree > 0.0 && self.er_expected_degree.is_finite()) {
            return bad("expected degree must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.n_per_state {
            return bad("batch size must lie in 1..=n_per_state");
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return bad("noise scale must be positive");
        }
        Ok(())
    }

    pub fn standardizes(&self) -> bool {
        self.standardize.unwrap_or(matches!(self.mechanism, Mechanism::QR | Mechanism::GP))
    }

    /// Batches per state.
    pub fn batches_per_state(&self) -> usize {
        self.n_per_state / self.batch_size
    }
}

/// Coefficients shared by every state. Row `i`, column `j` of `weights` is the
/// linear coefficient of parent `i` in node `j`'s mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub mechanism: Mechanism,
    pub noise_scale: f64,
    pub standardize: bool,
    pub weights: Vec<Vec<f64>>,
    /// `quadratic[j][p][q]` (p ≤ q) multiplies `x_p·x_q` in node `j`. QR only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<Vec<Vec<Vec<f64>>>>,
}

impl MechanismParams {
    /// Draws coefficients with magnitude in `[0.5, 2]` and a random sign.
    pub fn random(d: usize, mechanism: Mechanism, noise_scale: f64, standardize: bool, rng: &mut impl Rng) -> Self {
        let mut coef = || {
            let mag: f64 = rng.random_range(0.5..=2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let weights = (0..d).map(|_| (0..d).map(|_| coef()).collect()).collect();
        let quadratic = (mechanism == Mechanism::QR).then(|| {
            (0..d)
                .map(|_| (0..d).map(|p| (0..d).map(|q| if q >= p { coef() } else { 0.0 }).collect()).collect())
                .collect()
        });
        Self { mechanism, noise_scale, standardize, weights, quadratic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub graphs: Vec<AdjacencyMatrix>,
    pub params: MechanismParams,
}

impl GroundTruth {
    /// Graph of 1-based state `t`.
    pub fn graph(&self, t: usize) -> Option<&AdjacencyMatrix> {
        t.checked_sub(1).and_then(|i| self.graphs.get(i))
    }
}

/// ER DAG: a random causal order and each forward pair joined with probability `p`.
pub fn er_dag(d: usize, p: f64, rng: &mut impl Rng) -> AdjacencyMatrix {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut a = AdjacencyMatrix::zeros(d);
    for x in 0..d {
        for y in x + 1..d {
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                a.set(order[x], order[y], true);
            }
        }
    }
    a
}

/// Absent pairs `(i, j)` whose addition keeps `a` acyclic.
pub fn acyclic_slots(a: &AdjacencyMatrix) -> Vec<(usize, usize)> {
    let d = a.d();
    let reach: Vec<Vec<bool>> = (0..d).map(|v| a.descendants(v)).collect();
    let mut slots = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j && !a.get(i, j) && !reach[j][i] {
                slots.push((i, j));
            }
        }
    }
    slots
}

/// Adds `count` random edges while keeping `a` acyclic.
pub fn inject_edges(a: &mut AdjacencyMatrix, count: usize, rng: &mut impl Rng) -> Result<()> {
    for attempt in 0..count {
        let slots = acyclic_slots(a);
        let Some(&(i, j)) = slots.get(rng.random_range(0..slots.len().max(1))) else {
            return Err(Error::InfeasibleInjection(attempt + 1));
        };
        a.set(i, j, true);
    }
    Ok(())
}

/// Per-state graphs `G_1..G_m` (index 0 is the sparsest).
pub fn state_graphs(cfg: &SynthConfig) -> Result<Vec<AdjacencyMatrix>> {
    cfg.validate()?;
    let p = if cfg.d > 1 { cfg.er_expected_degree / (cfg.d - 1) as f64 } else { 0.0 };
    let last = er_dag(cfg.d, p, &mut seed::rng(cfg.seed, &[SEED_GRAPH]));
    let per_step = last.edge_count() / cfg.m;

    let mut bases = vec![last.clone()];
    let mut del_rng = seed::rng(cfg.seed, &[SEED_DELETE]);
    for _ in 1..cfg.m {
        let mut g = bases.last().expect("nonempty").clone();
        let mut edges: Vec<(usize, usize)> = g.edges().collect();
        edges.shuffle(&mut del_rng);
        for &(i, j) in edges.iter().take(per_step) {
            g.set(i, j, false);
        }
        bases.push(g);
    }
    bases.reverse();

    let mut inj_rng = seed::rng(cfg.seed, &[SEED_INJECT]);
    let last_index = cfg.m - 1;
    let mut graphs = Vec::with_capacity(cfg.m);
    for (t, mut g) in bases.into_iter().enumerate() {
        if t < last_index {
            let count = (cfg.e / 100.0 * g.edge_count() as f64).ceil() as usize;
            inject_edges(&mut g, count, &mut inj_rng)?;
        }
        graphs.push(g);
    }
    Ok(graphs)
}

fn standardize_column(x: &mut DMatrix<f64>, j: usize) {
    let n = x.nrows() as f64;
    let mean = x.column(j).sum() / n;
    let std = (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
    for v in x.column_mut(j).iter_mut() {
        *v = (*v - mean) * scale;
    }
}

fn noise(mechanism: Mechanism, scale: f64, rng: &mut impl Rng) -> f64 {
    let e: f64 = match mechanism {
        Mechanism::LE => rng.sample(Exp1),
        _ => rng.sample(StandardNormal),
    };
    scale * e
}

fn gp_draw(parents: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DVector<f64>> {
    let n = parents.nrows();
    let kernel = DMatrix::from_fn(n, n, |a, b| {
        let dist2: f64 = (0..parents.ncols()).map(|k| (parents[(a, k)] - parents[(b, k)]).powi(2)).sum();
        (-0.5 * dist2).exp() + if a == b { GP_JITTER } else { 0.0 }
    });
    let chol = Cholesky::new(kernel).ok_or_else(|| Error::InvalidConfig("GP kernel is not positive definite".into()))?;
    let z = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    Ok(chol.l() * z)
}

/// `n` rows from the SEM over `g`, evaluated in topological order.
pub fn sem_sample(g: &AdjacencyMatrix, params: &MechanismParams, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    sem_sample_scaled(g, params, n, &vec![1.0; g.d()], rng)
}

/// [`sem_sample`] with node `j`'s noise multiplied by `noise_factor[j]`.
/// Inflating a root's factor simulates a fault originating at that root.
pub fn sem_sample_scaled(
    g: &AdjacencyMatrix,
    params: &MechanismParams,
    n: usize,
    noise_factor: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let order = g.topological_order().ok_or(Error::Cyclic)?;
    let d = g.d();
    if params.weights.len() != d {
        return Err(Error::DimensionMismatch(format!("{} weight rows for {d} nodes", params.weights.len())));
    }
    if noise_factor.len() != d {
        return Err(Error::DimensionMismatch(format!("{} noise factors for {d} nodes", noise_factor.len())));
    }
    let mut x = DMatrix::zeros(n, d);
    for &j in &order {
        let parents = g.parents(j);
        let f: DVector<f64> = match params.mechanism {
            Mechanism::LG | Mechanism::LE => {
                DVector::from_fn(n, |r, _| parents.iter().map(|&p| params.weights[p][j] * x[(r, p)]).sum())
            }
            Mechanism::QR => {
                let quad = params
                    .quadratic
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("QR mechanism needs quadratic coefficients".into()))?;
                DVector::from_fn(n, |r, _| {
                    let mut v = 0.0;
                    for (a, &p) in parents.iter().enumerate() {
                        v += params.weights[p][j] * x[(r, p)];
                        for &q in &parents[a..] {
                            v += quad[j][p][q] * x[(r, p)] * x[(r, q)];
                        }
                    }
                    v
                })
            }
            Mechanism::GP => {
                if parents.is_empty() {
                    DVector::zeros(n)
                } else {
                    let pa = DMatrix::from_fn(n, parents.len(), |r, k| x[(r, parents[k])]);
                    gp_draw(&pa, rng)?
                }
            }
        };
        for r in 0..n {
            x[(r, j)] = f[r] + noise_factor[j] * noise(params.mechanism, params.noise_scale, rng);
        }
        if params.standardize {
            standardize_column(&mut x, j);
        }
    }
    Ok(x)
}

/// Builds the whole stream and its ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<StreamBatch>, GroundTruth)> {
    let graphs = state_graphs(cfg)?;
    let params = MechanismParams::random(
        cfg.d,
        cfg.mechanism,
        cfg.noise_scale,
        cfg.standardizes(),
        &mut seed::rng(cfg.seed, &[SEED_WEIGHTS]),
    );
    let per_state = cfg.batches_per_state();
    let mut batches = Vec::with_capacity(per_state * cfg.m);
    for (ti, g) in graphs.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, &[SEED_SAMPLE, ti as u64]);
        let x = sem_sample(g, &params, per_state * cfg.batch_size, &mut rng)?;
        for l in 0..per_state {
            batches.push(StreamBatch {
                t: ti + 1,
                l: l + 1,
                transition: l == 0,
                x: x.rows(l * cfg.batch_size, cfg.batch_size).into_owned(),
            });
        }
    }
    debug_assert!(graphs.iter().all(is_acyclic));
    Ok((batches, GroundTruth { graphs, params }))
}
