//! The state-specific and state-invariant actor-critic agents.
//!
//! Both agents share the decoder / critic layout and differ in the encoder:
//!
//! * specific: per-column batch statistics -> dense -> LSTM (carry across
//!   batches) -> GCN over the previous batch's DAG;
//! * invariant: previous-state column summary -> dense, concatenated with the
//!   specific agent's node embeddings -> GCN over the previous batch's DAG.
//!
//! The decoder flattens the node embeddings and emits the mean and log standard
//! deviation of a diagonal Gaussian over the agent's slice of the action
//! vector. The critic reads the mean-pooled embedding (detached from the
//! encoder) and predicts the reward offset relative to the baseline.

use std::ops::Range;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::neural::{
    normalized_adjacency, Activation, AdamConfig, Checkpoint, Dense, DenseCache, GaussianPolicy, Gcn, GcnCache, Grads,
    LstmCache, LstmCell, NamedTensor, ParamStore, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::scoring::AgentKind;
use crate::seed;

/// Number of per-column statistics fed to the specific encoder.
pub const BATCH_FEATURES: usize = 4;
/// Number of per-column statistics kept for a finished state.
pub const STATE_FEATURES: usize = 2;

const SEED_INIT: u64 = 1;
const SEED_SAMPLE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub embed: usize,
    pub lstm_hidden: usize,
    pub gcn_hidden: usize,
    pub decoder_hidden: usize,
    pub critic_hidden: usize,
    pub actor: AdamConfig,
    pub critic: AdamConfig,
    /// Baseline smoothing factor.
    pub gamma: f64,
    /// Added to the decoder's raw log-std output before clamping.
    pub init_log_std: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            embed: 64,
            lstm_hidden: 64,
            gcn_hidden: 64,
            decoder_hidden: 64,
            critic_hidden: 64,
            actor: AdamConfig { lr: 5e-4, ..Default::default() },
            critic: AdamConfig { lr: 5e-4, ..Default::default() },
            gamma: 0.5,
            init_log_std: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.embed, self.lstm_hidden, self.gcn_hidden, self.decoder_hidden, self.critic_hidden];
        if widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        for lr in [self.actor.lr, self.critic.lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidConfig("learning rates must be positive".into()));
            }
        }
        Ok(())
    }
}

fn slog(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

/// Per-column mean, standard deviation, skewness and excess kurtosis of a
/// batch, each squashed with a signed `ln(1+|v|)`. Shape `d x 4`.
pub fn column_summary(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let n = n.max(1) as f64;
    let mut out = DMatrix::zeros(d, BATCH_FEATURES);
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / n;
        let (m2, m3, m4) = col.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &v| {
            let e = v - mean;
            (a + e * e, b + e * e * e, c + e * e * e * e)
        });
        let var = m2 / n;
        let std = var.sqrt();
        let (skew, kurt) = if var > 0.0 { (m3 / n / (var * std), m4 / n / (var * var) - 3.0) } else { (0.0, 0.0) };
        for (k, v) in [mean, std, skew, kurt].into_iter().enumerate() {
            out[(j, k)] = slog(v);
        }
    }
    out
}

/// Running per-column mean and variance over the batches of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ColumnStats {
    pub fn new(d: usize) -> Self {
        Self { count: 0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push_rows(&mut self, x: &DMatrix<f64>) {
        for row in x.row_iter() {
            self.count += 1;
            let n = self.count as f64;
            for (j, &v) in row.iter().enumerate() {
                let delta = v - self.mean[j];
                self.mean[j] += delta / n;
                self.m2[j] += delta * (v - self.mean[j]);
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|m| (m / n).sqrt()).collect()
    }

    /// `d x 2` encoder input. All zeros before any rows were seen.
    pub fn summary(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        let std = self.std();
        DMatrix::from_fn(d, STATE_FEATURES, |j, k| if k == 0 { slog(self.mean[j]) } else { slog(std[j]) })
    }
}

/// `β·ã + (1−β)·ā`.
pub fn fuse_actions(specific: &[f64], invariant: &[f64], beta: f64) -> Result<Vec<f64>> {
    if specific.len() != invariant.len() {
        return Err(Error::DimensionMismatch(format!(
            "cannot fuse actions of length {} and {}",
            specific.len(),
            invariant.len()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidConfig(format!("fusion weight must lie in [0, 1], got {beta}")));
    }
    Ok(specific.iter().zip(invariant).map(|(s, i)| beta * s + (1.0 - beta) * i).collect())
}

/// `γ·B + (1−γ)·R̄`.
pub fn update_baseline(baseline: f64, gamma: f64, mean_reward: f64) -> f64 {
    gamma * baseline + (1.0 - gamma) * mean_reward
}

/// LSTM carry, one row per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Carry {
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl Carry {
    pub fn zeros(d: usize, hidden: usize) -> Self {
        Self { h: DMatrix::zeros(d, hidden), c: DMatrix::zeros(d, hidden) }
    }
}

#[derive(Debug, Clone, Copy)]
enum Encoder {
    Specific { proj: Dense, lstm: LstmCell, gcn: Gcn },
    Invariant { proj: Dense, gcn: Gcn },
}

#[derive(Debug, Clone, Copy)]
struct Net {
    encoder: Encoder,
    dec1: Dense,
    dec2: Dense,
    crit1: Dense,
    crit2: Dense,
}

#[derive(Debug, Clone)]
enum EncoderCache {
    Specific { proj: DenseCache, lstm: LstmCache, gcn: GcnCache },
    Invariant { proj: DenseCache, gcn: GcnCache },
}

/// Inputs of one encoder forward pass.
#[derive(Debug, Clone, Copy)]
pub enum EncoderInput<'a> {
    Specific {
        x: &'a DMatrix<f64>,
        prev_dag: &'a AdjacencyMatrix,
    },
    Invariant {
        prev_summary: &'a DMatrix<f64>,
        specific_embedding: &'a DMatrix<f64>,
        prev_dag: &'a AdjacencyMatrix,
    },
}

/// Node embeddings plus everything needed to backpropagate through them.
#[derive(Debug, Clone)]
pub struct Encoding {
    z: DMatrix<f64>,
    cache: EncoderCache,
    next_carry: Option<Carry>,
}

impl Encoding {
    /// `d x width` node embedding matrix.
    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Row-major flattening (node-major), length `d x width`.
    pub fn flattened(&self) -> Vec<f64> {
        flatten_rows(&self.z)
    }
}

fn flatten_rows(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionProposal {
    /// The agent's slice of the action vector.
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// Critic output `R̂`; the advantage is `R − (B + R̂)`.
    pub predicted_reward: f64,
}

/// One policy evaluation and the proposals drawn from it.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub encoding: Encoding,
    pub policy: GaussianPolicy,
    pub predicted_reward: f64,
    pub proposals: Vec<ActionProposal>,
    dec1: DenseCache,
    dec2: DenseCache,
    crit1: DenseCache,
    crit2: DenseCache,
    clamped: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_reward: f64,
    pub mean_advantage: f64,
    pub baseline: f64,
}

/// Actor-critic agent: parameters, optimiser moments, LSTM carry, baseline.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    d: usize,
    range: Range<usize>,
    cfg: AgentConfig,
    actor: ParamStore,
    critic: ParamStore,
    net: Net,
    carry: Option<Carry>,
    baseline: f64,
    rng: ChaCha8Rng,
    seed: u64,
}

pub type AgentState = Agent;

impl Agent {
    /// New agent owning `range` of the `d(d+1)` action vector.
    pub fn new(kind: AgentKind, d: usize, range: Range<usize>, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let full = d * (d + 1);
        if range.start >= range.end || range.end > full {
            return Err(Error::InvalidConfig(format!("action range {range:?} is not a non-empty sub-range of 0..{full}")));
        }
        let (actor, critic, net) = build(kind, d, range.len(), &cfg, seed);
        let carry = (kind == AgentKind::Specific).then(|| Carry::zeros(d, cfg.lstm_hidden));
        Ok(Self {
            kind,
            d,
            range,
            cfg,
            actor,
            critic,
            net,
            carry,
            baseline: 0.0,
            rng: seed::rng(seed, &[SEED_SAMPLE]),
            seed,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn action_range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn carry(&self) -> Option<&Carry> {
        self.carry.as_ref()
    }

    pub fn actor_params(&self) -> &ParamStore {
        &self.actor
    }

    pub fn actor_params_mut(&mut self) -> &mut ParamStore {
        &mut self.actor
    }

    pub fn critic_params(&self) -> &ParamStore {
        &self.critic
    }

    pub fn critic_params_mut(&mut self) -> &mut ParamStore {
        &mut self.critic
    }

    /// Width of one node embedding.
    pub fn embedding_width(&self) -> usize {
        self.cfg.gcn_hidden
    }

    pub fn encode(&self, input: EncoderInput<'_>) -> Result<Encoding> {
        match (self.net.encoder, input) {
            (Encoder::Specific { proj, lstm, gcn }, EncoderInput::Specific { x, prev_dag }) => {
                self.check_graph(prev_dag)?;
                if x.ncols() != self.d {
                    return Err(Error::DimensionMismatch(format!(
                        "batch has {} columns, agent expects {}",
                        x.ncols(),
                        self.d
                    )));
                }
                let carry = self.carry.as_ref().expect("specific agent always has a carry");
                let (p, proj_cache) = proj.forward(&self.actor, &column_summary(x))?;
                let (h, c, lstm_cache) = lstm.forward(&self.actor, &p, &carry.h, &carry.c)?;
                let (z, gcn_cache) = gcn.forward(&self.actor, &h, &normalized_adjacency(prev_dag))?;
                Ok(Encoding {
                    z,
                    cache: EncoderCache::Specific { proj: proj_cache, lstm: lstm_cache, gcn: gcn_cache },
                    next_carry: Some(Carry { h, c }),
                })
            }
            (Encoder::Invariant { proj, gcn }, EncoderInput::Invariant { prev_summary, specific_embedding, prev_dag }) => {
                self.check_graph(prev_dag)?;
                if prev_summary.nrows() != self.d || specific_embedding.nrows() != self.d {
                    return Err(Error::DimensionMismatch("invariant encoder inputs must have d rows".into()));
                }
                let (q, proj_cache) = proj.forward(&self.actor, prev_summary)?;
                let mut joined = DMatrix::zeros(self.d, q.ncols() + specific_embedding.ncols());
                joined.columns_mut(0, q.ncols()).copy_from(&q);
                joined.columns_mut(q.ncols(), specific_embedding.ncols()).copy_from(specific_embedding);
                let (z, gcn_cache) = gcn.forward(&self.actor, &joined, &normalized_adjacency(prev_dag))?;
                Ok(Encoding { z, cache: EncoderCache::Invariant { proj: proj_cache, gcn: gcn_cache }, next_carry: None })
            }
            _ => Err(Error::WrongAgent("encoder input does not match agent kind")),
        }
    }

    pub fn encode_specific(&self, x: &DMatrix<f64>, prev_dag: &AdjacencyMatrix) -> Result<Encoding> {
        if self.kind != AgentKind::Specific {
            return Err(Error::WrongAgent("encode_specific on an invariant agent"));
        }
        self.encode(EncoderInput::Specific { x, prev_dag })
    }

    pub fn encode_invariant(
        &self,
        prev_summary: &DMatrix<f64>,
        specific_embedding: &DMatrix<f64>,
        prev_dag: &AdjacencyMatrix,
    ) -> Result<Encoding> {
        if self.kind != AgentKind::Invariant {
            return Err(Error::WrongAgent("encode_invariant on a specific agent"));
        }
        self.encode(EncoderInput::Invariant { prev_summary, specific_embedding, prev_dag })
    }

    fn check_graph(&self, a: &AdjacencyMatrix) -> Result<()> {
        if a.d() != self.d {
            return Err(Error::DimensionMismatch(format!("graph has {} nodes, agent expects {}", a.d(), self.d)));
        }
        Ok(())
    }

    fn heads(&self, enc: &Encoding) -> Result<(GaussianPolicy, Vec<bool>, f64, [DenseCache; 4])> {
        let n = self.range.len();
        let flat = DMatrix::from_row_slice(1, enc.z.len(), &enc.flattened());
        let (h1, dec1) = self.net.dec1.forward(&self.actor, &flat)?;
        let (raw, dec2) = self.net.dec2.forward(&self.actor, &h1)?;
        let mean: Vec<f64> = (0..n).map(|k| raw[(0, k)]).collect();
        let shifted: Vec<f64> = (0..n).map(|k| raw[(0, n + k)] + self.cfg.init_log_std).collect();
        let clamped = shifted.iter().map(|&v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v)).collect();
        let policy = GaussianPolicy::new(mean, shifted);

        let pooled = DMatrix::from_fn(1, enc.z.ncols(), |_, c| enc.z.column(c).mean());
        let (c1, crit1) = self.net.crit1.forward(&self.critic, &pooled)?;
        let (r, crit2) = self.net.crit2.forward(&self.critic, &c1)?;
        Ok((policy, clamped, r[(0, 0)], [dec1, dec2, crit1, crit2]))
    }

    /// Policy distribution for an encoding, without sampling.
    pub fn policy(&self, enc: &Encoding) -> Result<GaussianPolicy> {
        Ok(self.heads(enc)?.0)
    }

    pub fn predict_reward(&self, enc: &Encoding) -> Result<f64> {
        Ok(self.heads(enc)?.2)
    }

    /// Evaluates the heads once and draws `samples` actions from the policy.
    pub fn rollout(&mut self, encoding: Encoding, samples: usize) -> Result<Rollout> {
        let (policy, clamped, predicted_reward, [dec1, dec2, crit1, crit2]) = self.heads(&encoding)?;
        let proposals = (0..samples)
            .map(|_| {
                let (action, log_prob) = policy.sample(&mut self.rng);
                ActionProposal { action, log_prob, predicted_reward }
            })
            .collect();
        Ok(Rollout { encoding, policy, predicted_reward, proposals, dec1, dec2, crit1, crit2, clamped })
    }

    /// Single-sample [`Agent::rollout`].
    pub fn propose(&mut self, encoding: Encoding) -> Result<(ActionProposal, Rollout)> {
        let r = self.rollout(encoding, 1)?;
        Ok((r.proposals[0].clone(), r))
    }

    /// `R − (B + R̂)` for each reward.
    pub fn advantages(&self, rollout: &Rollout, rewards: &[f64]) -> Vec<f64> {
        rewards.iter().map(|r| r - (self.baseline + rollout.predicted_reward)).collect()
    }

    /// Gradient of `−mean_k(log π(a_k) · adv_k)` w.r.t. the actor parameters,
    /// with the advantages held constant.
    pub fn policy_gradient(&self, rollout: &Rollout, advantages: &[f64]) -> Result<Grads> {
        let n = self.range.len();
        let k = rollout.proposals.len();
        if k == 0 || advantages.len() != k {
            return Err(Error::DimensionMismatch(format!("{k} proposals but {} advantages", advantages.len())));
        }
        let mut d_raw = DMatrix::zeros(1, 2 * n);
        for (p, &adv) in rollout.proposals.iter().zip(advantages) {
            let (dm, ds) = rollout.policy.grad_log_prob(&p.action);
            for j in 0..n {
                d_raw[(0, j)] -= adv * dm[j] / k as f64;
                if !rollout.clamped[j] {
                    d_raw[(0, n + j)] -= adv * ds[j] / k as f64;
                }
            }
        }
        let mut grads = self.actor.zero_grads();
        let d_h1 = self.net.dec2.backward(&self.actor, &rollout.dec2, &d_raw, &mut grads);
        let d_flat = self.net.dec1.backward(&self.actor, &rollout.dec1, &d_h1, &mut grads);
        let (rows, cols) = rollout.encoding.z.shape();
        let dz = DMatrix::from_row_slice(rows, cols, d_flat.as_slice());
        match (&self.net.encoder, &rollout.encoding.cache) {
            (Encoder::Specific { proj, lstm, gcn }, EncoderCache::Specific { proj: pc, lstm: lc, gcn: gc }) => {
                let dh = gcn.backward(&self.actor, gc, &dz, &mut grads);
                let (dp, _, _) = lstm.backward(&self.actor, lc, &dh, None, &mut grads);
                proj.backward(&self.actor, pc, &dp, &mut grads);
            }
            (Encoder::Invariant { proj, gcn }, EncoderCache::Invariant { proj: pc, gcn: gc }) => {
                let dj = gcn.backward(&self.actor, gc, &dz, &mut grads);
                let dq = dj.columns(0, proj.output_dim()).into_owned();
                proj.backward(&self.actor, pc, &dq, &mut grads);
            }
            _ => unreachable!("encoding produced by a different agent kind"),
        }
        Ok(grads)
    }

    /// Gradient of `mean_k (R_k − (B + R̂))²` w.r.t. the critic parameters.
    pub fn critic_gradient(&self, rollout: &Rollout, rewards: &[f64]) -> Grads {
        let k = rewards.len().max(1) as f64;
        let d_pred: f64 = rewards
            .iter()
            .map(|r| -2.0 * (r - self.baseline - rollout.predicted_reward) / k)
            .sum();
        let mut grads = self.critic.zero_grads();
        let d_out = DMatrix::from_element(1, 1, d_pred);
        let d_c1 = self.net.crit2.backward(&self.critic, &rollout.crit2, &d_out, &mut grads);
        self.net.crit1.backward(&self.critic, &rollout.crit1, &d_c1, &mut grads);
        grads
    }

    /// `−mean_k(log π(a_k) · adv_k)` under the current policy of `rollout`.
    pub fn surrogate(policy: &GaussianPolicy, actions: &[Vec<f64>], advantages: &[f64]) -> f64 {
        let k = actions.len() as f64;
        -actions.iter().zip(advantages).map(|(a, adv)| policy.log_prob(a) * adv).sum::<f64>() / k
    }

    /// One Adam step for actor and critic, then the baseline update.
    pub fn train_step(&mut self, rollout: &Rollout, rewards: &[f64]) -> Result<TrainStats> {
        if rollout.proposals.is_empty() {
            return Err(Error::Empty("train_step needs at least one proposal"));
        }
        if rewards.len() != rollout.proposals.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} proposals but {} rewards",
                rollout.proposals.len(),
                rewards.len()
            )));
        }
        let adv = self.advantages(rollout, rewards);
        let k = rewards.len() as f64;
        let actions: Vec<Vec<f64>> = rollout.proposals.iter().map(|p| p.action.clone()).collect();
        let actor_loss = Self::surrogate(&rollout.policy, &actions, &adv);
        let critic_loss = adv.iter().map(|a| a * a).sum::<f64>() / k;
        let actor_grads = self.policy_gradient(rollout, &adv)?;
        let critic_grads = self.critic_gradient(rollout, rewards);
        self.actor.adam_step(&actor_grads, &self.cfg.actor)?;
        self.critic.adam_step(&critic_grads, &self.cfg.critic)?;
        let mean_reward = rewards.iter().sum::<f64>() / k;
        self.baseline = update_baseline(self.baseline, self.cfg.gamma, mean_reward);
        Ok(TrainStats {
            actor_loss,
            critic_loss,
            mean_reward,
            mean_advantage: adv.iter().sum::<f64>() / k,
            baseline: self.baseline,
        })
    }

    /// Adopts the LSTM state produced by `enc` as the carry for the next batch.
    pub fn commit_carry(&mut self, enc: &Encoding) {
        if let (Some(slot), Some(next)) = (self.carry.as_mut(), enc.next_carry.as_ref()) {
            *slot = next.clone();
        }
    }

    /// Fresh parameters from `seed`, zero carry, zero baseline.
    pub fn reinit_specific(&mut self, seed: u64) -> Result<()> {
        if self.kind != AgentKind::Specific {
            return Err(Error::WrongAgent("only the state-specific agent is re-initialised"));
        }
        *self = Agent::new(self.kind, self.d, self.range.clone(), self.cfg, seed)?;
        Ok(())
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        let tensor = |name: &str, m: &DMatrix<f64>| NamedTensor {
            name: name.into(),
            shape: [m.nrows(), m.ncols()],
            values: flatten_rows(m),
        };
        AgentCheckpoint {
            kind: self.kind,
            d: self.d,
            range: [self.range.start, self.range.end],
            seed: self.seed,
            baseline: self.baseline,
            actor: self.actor.to_checkpoint(),
            critic: self.critic.to_checkpoint(),
            carry: self.carry.as_ref().map(|c| [tensor("carry.h", &c.h), tensor("carry.c", &c.c)]),
        }
    }

    /// Rebuilds an agent from a checkpoint. The sampling stream restarts from
    /// the recorded seed.
    pub fn from_checkpoint(ck: &AgentCheckpoint, cfg: AgentConfig) -> Result<Self> {
        let mut agent = Agent::new(ck.kind, ck.d, ck.range[0]..ck.range[1], cfg, ck.seed)?;
        agent.actor.load_checkpoint(&ck.actor)?;
        agent.critic.load_checkpoint(&ck.critic)?;
        agent.baseline = ck.baseline;
        match (agent.carry.as_mut(), &ck.carry) {
            (Some(slot), Some([h, c])) => {
                if h.shape != [slot.h.nrows(), slot.h.ncols()] || c.shape != h.shape {
                    return Err(Error::DimensionMismatch("carry shape in checkpoint".into()));
                }
                slot.h = DMatrix::from_row_slice(h.shape[0], h.shape[1], &h.values);
                slot.c = DMatrix::from_row_slice(c.shape[0], c.shape[1], &c.values);
            }
            (None, None) => {}
            _ => return Err(Error::DimensionMismatch("carry presence does not match agent kind".into())),
        }
        Ok(agent)
    }
}

fn build(kind: AgentKind, d: usize, out: usize, cfg: &AgentConfig, seed: u64) -> (ParamStore, ParamStore, Net) {
    let mut rng = seed::rng(seed, &[SEED_INIT]);
    let mut actor = ParamStore::new();
    let encoder = match kind {
        AgentKind::Specific => {
            let proj = Dense::new(&mut actor, "encoder.proj", BATCH_FEATURES, cfg.embed, Activation::Tanh, &mut rng);
            let lstm = LstmCell::new(&mut actor, "encoder.lstm", cfg.embed, cfg.lstm_hidden, &mut rng);
            let gcn = Gcn::new(&mut actor, "encoder.gcn", cfg.lstm_hidden, cfg.gcn_hidden, Activation::Tanh, &mut rng);
            Encoder::Specific { proj, lstm, gcn }
        }
        AgentKind::Invariant => {
            let proj = Dense::new(&mut actor, "encoder.proj", STATE_FEATURES, cfg.embed, Activation::Tanh, &mut rng);
            let gcn = Gcn::new(&mut actor, "encoder.gcn", cfg.embed + cfg.gcn_hidden, cfg.gcn_hidden, Activation::Tanh, &mut rng);
            Encoder::Invariant { proj, gcn }
        }
    };
    let dec1 = Dense::new(&mut actor, "decoder.hidden", d * cfg.gcn_hidden, cfg.decoder_hidden, Activation::Tanh, &mut rng);
    let dec2 = Dense::new(&mut actor, "decoder.out", cfg.decoder_hidden, 2 * out, Activation::Identity, &mut rng);
    let mut critic = ParamStore::new();
    let crit1 = Dense::new(&mut critic, "critic.hidden", cfg.gcn_hidden, cfg.critic_hidden, Activation::Tanh, &mut rng);
    let crit2 = Dense::new(&mut critic, "critic.out", cfg.critic_hidden, 1, Activation::Identity, &mut rng);
    (actor, critic, Net { encoder, dec1, dec2, crit1, crit2 })
}

/// Serialisable agent snapshot: the neural checkpoint plus an agent header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub kind: AgentKind,
    pub d: usize,
    pub range: [usize; 2],
    pub seed: u64,
    pub baseline: f64,
    pub actor: Checkpoint,
    pub critic: Checkpoint,
    pub carry: Option<[NamedTensor; 2]>,
}
