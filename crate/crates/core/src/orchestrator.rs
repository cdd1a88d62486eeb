//! The online loop.
//!
//! [`Engine::process_batch`] consumes one [`StreamBatch`] and emits one
//! [`EpisodeRecord`]. All three modes share the same loop:
//!
//! * `marlin`: one worker holding a specific and an invariant agent over the
//!   whole action vector;
//! * `marlin-m`: the action vector is cut into contiguous sub-ranges, each owned
//!   by a worker with its own agent pair. Workers sample in parallel, the
//!   sub-vectors are assembled at a barrier and the shared rewards are
//!   broadcast back. With one worker this is exactly `marlin`;
//! * `marlin-s`: a single specific-style agent, no fusion, no decoupling.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agents::{fuse_actions, Agent, AgentConfig, ColumnStats, Rollout};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{action_slice_to_dag, ActionVector, AdjacencyMatrix};
use crate::scoring::{reward_from_bic, AgentKind, BatchScorer, RewardContext, ScoreConfig};
use crate::seed;
use crate::stream::StreamBatch;

const SEED_SPECIFIC: u64 = 11;
const SEED_INVARIANT: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "marlin")]
    Marlin,
    #[serde(rename = "marlin-s")]
    MarlinS,
    #[serde(rename = "marlin-m")]
    MarlinM,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Marlin => "marlin",
            Mode::MarlinS => "marlin-s",
            Mode::MarlinM => "marlin-m",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marlin" => Ok(Mode::Marlin),
            "marlin-s" => Ok(Mode::MarlinS),
            "marlin-m" => Ok(Mode::MarlinM),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    /// Fusion weight of the specific agent's action.
    pub beta: f64,
    pub xi_threshold: f64,
    /// Training iterations per batch.
    pub episodes_per_batch: usize,
    /// Actions drawn per training iteration.
    pub samples_per_episode: usize,
    pub mode: Mode,
    pub workers: usize,
    pub seed: u64,
    pub score: ScoreConfig,
    pub agent: AgentConfig,
    pub execution: Execution,
    /// When false every record reports `wall_ms = 0`.
    pub timing: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            xi_threshold: 0.98,
            episodes_per_batch: 64,
            samples_per_episode: 8,
            mode: Mode::Marlin,
            workers: 1,
            seed: 0,
            score: ScoreConfig::default(),
            agent: AgentConfig::default(),
            execution: Execution::default(),
            timing: true,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.xi_threshold) {
            return Err(Error::InvalidConfig(format!("xi threshold must lie in [0, 1], got {}", self.xi_threshold)));
        }
        if self.episodes_per_batch == 0 || self.samples_per_episode == 0 {
            return Err(Error::InvalidConfig("episodes and samples per episode must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.workers > 1 && self.mode != Mode::MarlinM {
            return Err(Error::InvalidConfig(format!("{} runs a single worker; use marlin-m", self.mode.as_str())));
        }
        if d == 0 {
            return Err(Error::InvalidConfig("graph must have at least one node".into()));
        }
        let full = ActionVector::len_for(d);
        if self.workers > full {
            return Err(Error::InvalidConfig(format!("{} workers exceed the {full} action entries", self.workers)));
        }
        self.score.validate()?;
        self.agent.validate()
    }
}

/// Splits `0..len` into `parts` contiguous ranges; the last absorbs the remainder.
pub fn partition(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let size = len / parts;
    (0..parts)
        .map(|k| {
            let end = if k + 1 == parts { len } else { (k + 1) * size };
            k * size..end
        })
        .collect()
}

/// `1 − mean JS divergence` over the off-diagonal cells, each cell read as a
/// Laplace-smoothed Bernoulli.
pub fn graph_similarity(prev: &AdjacencyMatrix, cur: &AdjacencyMatrix) -> Result<f64> {
    prev.check_same_d(cur)?;
    const EPS: f64 = 1e-3;
    let d = prev.d();
    if d < 2 {
        return Ok(1.0);
    }
    let smooth = |on: bool| (f64::from(u8::from(on)) + EPS) / (1.0 + 2.0 * EPS);
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                total += js_bernoulli(smooth(prev.get(i, j)), smooth(cur.get(i, j)));
            }
        }
    }
    Ok((1.0 - total / (d * (d - 1)) as f64).clamp(0.0, 1.0))
}

fn js_bernoulli(p: f64, q: f64) -> f64 {
    let kl = |a: f64, b: f64| if a > 0.0 { a * (a / b).log2() } else { 0.0 };
    let m1 = 0.5 * (p + q);
    let m0 = 1.0 - m1;
    0.5 * (kl(p, m1) + kl(1.0 - p, m0)) + 0.5 * (kl(q, m1) + kl(1.0 - q, m0))
}

/// Change-point channel. The engine asks the detector for every batch.
pub trait TransitionDetector: Send {
    fn is_transition(&mut self, batch: &StreamBatch) -> bool;
}

/// Trusts the stream's `transition` flag.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleDetector;

impl TransitionDetector for OracleDetector {
    fn is_transition(&mut self, batch: &StreamBatch) -> bool {
        batch.transition
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub l: usize,
    pub a_est: AdjacencyMatrix,
    pub a_spec: AdjacencyMatrix,
    pub a_inv: AdjacencyMatrix,
    pub best_reward: f64,
    pub xi: f64,
    pub wall_ms: f64,
    /// True when the batch was served from an already converged state.
    pub converged: bool,
    /// Sigmoid of the fused mask-logit means, zero where the ordering forbids
    /// the edge. Used as AUROC scores.
    pub edge_scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Worker {
    index: usize,
    specific: Agent,
    invariant: Option<Agent>,
}

struct WorkerRollout {
    specific: Rollout,
    invariant: Option<Rollout>,
}

#[derive(Debug, Clone)]
struct Best {
    total: f64,
    fused: Vec<f64>,
    a_est: AdjacencyMatrix,
    a_spec: AdjacencyMatrix,
    a_inv: AdjacencyMatrix,
    mean_logits: Vec<f64>,
}

/// Online engine over a stream of fixed width `d`.
pub struct Engine {
    cfg: OnlineConfig,
    d: usize,
    workers: Vec<Worker>,
    detector: Box<dyn TransitionDetector>,
    batches_seen: usize,
    state_ordinal: u64,
    batches_in_state: usize,
    converged: bool,
    last_est: AdjacencyMatrix,
    last_spec: AdjacencyMatrix,
    last_inv: AdjacencyMatrix,
    last_reward: f64,
    last_scores: Vec<Vec<f64>>,
    prev_state: AdjacencyMatrix,
    prev_summary: DMatrix<f64>,
    current_stats: ColumnStats,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("mode", &self.cfg.mode)
            .field("d", &self.d)
            .field("workers", &self.workers.len())
            .field("batches_seen", &self.batches_seen)
            .field("converged", &self.converged)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(cfg: OnlineConfig, d: usize) -> Result<Self> {
        cfg.validate(d)?;
        let full = ActionVector::len_for(d);
        let workers = partition(full, cfg.workers)
            .into_iter()
            .enumerate()
            .map(|(index, range)| {
                let specific = Agent::new(
                    AgentKind::Specific,
                    d,
                    range.clone(),
                    cfg.agent,
                    seed::derive(cfg.seed, &[SEED_SPECIFIC, index as u64, 0]),
                )?;
                let invariant = match cfg.mode {
                    Mode::MarlinS => None,
                    _ => Some(Agent::new(
                        AgentKind::Invariant,
                        d,
                        range,
                        cfg.agent,
                        seed::derive(cfg.seed, &[SEED_INVARIANT, index as u64]),
                    )?),
                };
                Ok(Worker { index, specific, invariant })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            d,
            workers,
            detector: Box::new(OracleDetector),
            batches_seen: 0,
            state_ordinal: 0,
            batches_in_state: 0,
            converged: false,
            last_est: AdjacencyMatrix::zeros(d),
            last_spec: AdjacencyMatrix::zeros(d),
            last_inv: AdjacencyMatrix::zeros(d),
            last_reward: f64::NEG_INFINITY,
            last_scores: vec![vec![0.0; d]; d],
            prev_state: AdjacencyMatrix::zeros(d),
            prev_summary: DMatrix::zeros(d, crate::agents::STATE_FEATURES),
            current_stats: ColumnStats::new(d),
        })
    }

    pub fn with_detector(mut self, detector: Box<dyn TransitionDetector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.cfg
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    pub fn specific_agent(&self, worker: usize) -> Option<&Agent> {
        self.workers.get(worker).map(|w| &w.specific)
    }

    pub fn invariant_agent(&self, worker: usize) -> Option<&Agent> {
        self.workers.get(worker).and_then(|w| w.invariant.as_ref())
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Final estimate of the previous system state (zeros during the first).
    pub fn previous_state_estimate(&self) -> &AdjacencyMatrix {
        &self.prev_state
    }

    pub fn last_estimate(&self) -> &AdjacencyMatrix {
        &self.last_est
    }

    /// Closes the current state. Ignored before the first batch.
    pub fn on_state_transition(&mut self, _t_new: usize) -> Result<()> {
        if self.batches_seen == 0 {
            return Ok(());
        }
        self.prev_state = self.last_est.clone();
        self.prev_summary = self.current_stats.summary();
        self.current_stats = ColumnStats::new(self.d);
        self.state_ordinal += 1;
        for w in &mut self.workers {
            w.specific
                .reinit_specific(seed::derive(self.cfg.seed, &[SEED_SPECIFIC, w.index as u64, self.state_ordinal]))?;
        }
        self.converged = false;
        self.batches_in_state = 0;
        Ok(())
    }

    pub fn run_marlin_s(&mut self, batch: &StreamBatch) -> Result<EpisodeRecord> {
        if self.cfg.mode != Mode::MarlinS {
            return Err(Error::InvalidConfig("engine is not in marlin-s mode".into()));
        }
        self.process_batch(batch)
    }

    pub fn run_marlin_m(&mut self, batch: &StreamBatch) -> Result<EpisodeRecord> {
        if self.cfg.mode != Mode::MarlinM {
            return Err(Error::InvalidConfig("engine is not in marlin-m mode".into()));
        }
        self.process_batch(batch)
    }

    /// Processes every batch in order, stopping at the first error.
    pub fn run<I>(&mut self, batches: I) -> Result<Vec<EpisodeRecord>>
    where
        I: IntoIterator<Item = Result<StreamBatch>>,
    {
        batches.into_iter().map(|b| self.process_batch(&b?)).collect()
    }

    pub fn process_batch(&mut self, batch: &StreamBatch) -> Result<EpisodeRecord> {
        if batch.x.ncols() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "batch (t={}, l={}) has {} columns, stream has {}",
                batch.t,
                batch.l,
                batch.x.ncols(),
                self.d
            )));
        }
        if self.detector.is_transition(batch) {
            self.on_state_transition(batch.t)?;
        }
        let start = Instant::now();
        self.current_stats.push_rows(&batch.x);
        self.batches_seen += 1;
        self.batches_in_state += 1;

        if self.converged {
            let xi = graph_similarity(&self.last_est, &self.last_est)?;
            return Ok(EpisodeRecord {
                t: batch.t,
                l: batch.l,
                a_est: self.last_est.clone(),
                a_spec: self.last_spec.clone(),
                a_inv: self.last_inv.clone(),
                best_reward: self.last_reward,
                xi,
                wall_ms: self.elapsed(start),
                converged: true,
            edge_scores: self.last_scores.clone(),
            });
        }

        let best = self.train_on_batch(&batch.x)?;
        let xi = if self.batches_in_state > 1 { graph_similarity(&self.last_est, &best.a_est)? } else { 0.0 };
        if self.batches_in_state > 1 && xi > self.cfg.xi_threshold {
            self.converged = true;
        }
        let edge_scores = edge_scores(self.d, &best.fused, &best.mean_logits);
        self.last_est = best.a_est.clone();
        self.last_spec = best.a_spec.clone();
        self.last_inv = best.a_inv.clone();
        self.last_reward = best.total;
        self.last_scores = edge_scores.clone();
        Ok(EpisodeRecord {
            t: batch.t,
            l: batch.l,
            a_est: best.a_est,
            a_spec: best.a_spec,
            a_inv: best.a_inv,
            best_reward: best.total,
            xi,
            wall_ms: self.elapsed(start),
            converged: false,
            edge_scores,
        })
    }

    fn elapsed(&self, start: Instant) -> f64 {
        if self.cfg.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }

    fn train_on_batch(&mut self, x: &DMatrix<f64>) -> Result<Best> {
        let scorer = BatchScorer::new(x, &self.cfg.score)?;
        let exec = self.cfg.execution;
        let d = self.d;
        let full = ActionVector::len_for(d);
        let k = self.cfg.samples_per_episode;
        let beta = self.cfg.beta;
        let single = self.cfg.mode == Mode::MarlinS;
        let mut best: Option<Best> = None;
        let mut last_encodings = Vec::new();

        for _ in 0..self.cfg.episodes_per_batch {
            let prev_dag = &self.last_est;
            let prev_summary = &self.prev_summary;
            let rollouts: Vec<Result<WorkerRollout>> = exec.map_mut(&mut self.workers, |w| {
                let enc = w.specific.encode_specific(x, prev_dag)?;
                let inv_enc = match &w.invariant {
                    Some(inv) => Some(inv.encode_invariant(prev_summary, enc.embedding(), prev_dag)?),
                    None => None,
                };
                let specific = w.specific.rollout(enc, k)?;
                let invariant = match (w.invariant.as_mut(), inv_enc) {
                    (Some(inv), Some(e)) => Some(inv.rollout(e, k)?),
                    _ => None,
                };
                Ok(WorkerRollout { specific, invariant })
            });
            let rollouts = rollouts.into_iter().collect::<Result<Vec<_>>>()?;

            // Barrier: assemble full specific / invariant / fused vectors.
            let mut spec_full = vec![vec![0.0; full]; k];
            let mut inv_full = vec![vec![0.0; full]; k];
            let mut fused_full = vec![vec![0.0; full]; k];
            let mut mean_logits = vec![0.0; full];
            for (w, r) in self.workers.iter().zip(&rollouts) {
                let range = w.specific.action_range();
                for s in 0..k {
                    let a_s = &r.specific.proposals[s].action;
                    spec_full[s][range.clone()].copy_from_slice(a_s);
                    match &r.invariant {
                        Some(ri) => {
                            let a_i = &ri.proposals[s].action;
                            inv_full[s][range.clone()].copy_from_slice(a_i);
                            fused_full[s][range.clone()].copy_from_slice(&fuse_actions(a_s, a_i, beta)?);
                        }
                        None => fused_full[s][range.clone()].copy_from_slice(a_s),
                    }
                }
                let m = match &r.invariant {
                    Some(ri) => fuse_actions(&r.specific.policy.mean, &ri.policy.mean, beta)?,
                    None => r.specific.policy.mean.clone(),
                };
                mean_logits[range].copy_from_slice(&m);
            }

            let samples: Vec<usize> = (0..k).collect();
            let (other_spec, other_inv, prev_state) = (&self.last_spec, &self.last_inv, &self.prev_state);
            let scored: Vec<Result<SampleScore>> = exec.map(&samples, |&s| {
                let fused = action_slice_to_dag(d, &fused_full[s])?;
                let bic = scorer.bic(&fused)?;
                if single {
                    return Ok(SampleScore { fused, spec: None, inv: None, r_spec: -bic, r_inv: -bic });
                }
                let spec = action_slice_to_dag(d, &spec_full[s])?;
                let inv = action_slice_to_dag(d, &inv_full[s])?;
                let cfg = &self.cfg.score;
                let ctx_s = RewardContext { own: &spec, other_prev: other_inv, prev_state };
                let ctx_i = RewardContext { own: &inv, other_prev: other_spec, prev_state };
                let r_spec = reward_from_bic(AgentKind::Specific, bic, &ctx_s, cfg)?.total;
                let r_inv = reward_from_bic(AgentKind::Invariant, bic, &ctx_i, cfg)?.total;
                Ok(SampleScore { fused, spec: Some(spec), inv: Some(inv), r_spec, r_inv })
            });
            let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;

            for (s, sc) in scored.iter().enumerate() {
                let total = 0.5 * (sc.r_spec + sc.r_inv);
                if best.as_ref().is_none_or(|b| total > b.total) {
                    best = Some(Best {
                        total,
                        fused: fused_full[s].clone(),
                        a_est: sc.fused.clone(),
                        a_spec: sc.spec.clone().unwrap_or_else(|| sc.fused.clone()),
                        a_inv: sc.inv.clone().unwrap_or_else(|| AdjacencyMatrix::zeros(d)),
                        mean_logits: mean_logits.clone(),
                    });
                }
            }

            // Broadcast the shared rewards; every worker trains on its own slice.
            let r_spec: Vec<f64> = scored.iter().map(|s| s.r_spec).collect();
            let r_inv: Vec<f64> = scored.iter().map(|s| s.r_inv).collect();
            let mut paired: Vec<(&mut Worker, WorkerRollout)> = self.workers.iter_mut().zip(rollouts).collect();
            let trained: Vec<Result<()>> = exec.map_mut(&mut paired, |(w, r)| {
                w.specific.train_step(&r.specific, &r_spec)?;
                if let (Some(inv), Some(ri)) = (w.invariant.as_mut(), r.invariant.as_ref()) {
                    inv.train_step(ri, &r_inv)?;
                }
                Ok(())
            });
            last_encodings = paired.into_iter().map(|(_, r)| r.specific.encoding).collect();
            trained.into_iter().collect::<Result<Vec<_>>>()?;
        }

        for (w, enc) in self.workers.iter_mut().zip(&last_encodings) {
            w.specific.commit_carry(enc);
        }
        best.ok_or(Error::Empty("no episodes were run"))
    }
}

struct SampleScore {
    fused: AdjacencyMatrix,
    spec: Option<AdjacencyMatrix>,
    inv: Option<AdjacencyMatrix>,
    r_spec: f64,
    r_inv: f64,
}

fn edge_scores(d: usize, action: &[f64], mean: &[f64]) -> Vec<Vec<f64>> {
    let order = &action[..d];
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i != j && order[i] > order[j] {
                        let z = mean[d + i * d + j];
                        1.0 / (1.0 + (-z).exp())
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[u8]]) -> AdjacencyMatrix {
        AdjacencyMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = m(&[&[0, 1, 0], &[0, 0, 1], &[0, 0, 0]]);
        let b = m(&[&[0, 0, 1], &[1, 0, 0], &[0, 1, 0]]);
        assert_eq!(graph_similarity(&a, &a).unwrap(), 1.0);
        let xi = graph_similarity(&a, &b).unwrap();
        assert!((xi - graph_similarity(&b, &a).unwrap()).abs() < 1e-15);
        assert!(xi > 0.0 && xi < 1.0);
        let opposed = crate::graph::complement(&a);
        assert!(graph_similarity(&a, &opposed).unwrap() < 0.02);
        assert!(graph_similarity(&a, &AdjacencyMatrix::zeros(4)).is_err());
    }

    #[test]
    fn partition_covers_range() {
        let parts = partition(30, 4);
        assert_eq!(parts, vec![0..7, 7..14, 14..21, 21..30]);
        assert_eq!(partition(6, 1), vec![0..6]);
    }

    #[test]
    fn config_validation() {
        let ok = OnlineConfig::default();
        assert!(ok.validate(3).is_ok());
        assert!(OnlineConfig { beta: 1.2, ..ok }.validate(3).is_err());
        assert!(OnlineConfig { xi_threshold: -0.1, ..ok }.validate(3).is_err());
        assert!(OnlineConfig { workers: 0, ..ok }.validate(3).is_err());
        assert!(OnlineConfig { workers: 2, ..ok }.validate(3).is_err());
        assert!(OnlineConfig { mode: Mode::MarlinM, workers: 13, ..ok }.validate(3).is_err());
        assert!(OnlineConfig { mode: Mode::MarlinM, workers: 12, ..ok }.validate(3).is_ok());
        assert!(OnlineConfig { episodes_per_batch: 0, ..ok }.validate(3).is_err());
    }

    #[test]
    fn mode_names_roundtrip() {
        for mode in [Mode::Marlin, Mode::MarlinS, Mode::MarlinM] {
            assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
            assert_eq!(serde_json::to_string(&mode).unwrap(), format!("\"{}\"", mode.as_str()));
        }
        assert!("marlin-x".parse::<Mode>().is_err());
    }
}
