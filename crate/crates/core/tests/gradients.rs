mod common;

use marlin::agents::{Agent, AgentConfig, ColumnStats};
use marlin::neural::{normalized_adjacency, Activation, Dense, GaussianPolicy, Gcn, LstmCell, ParamStore};
use marlin::scoring::AgentKind;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5)
}

fn jitter(ps: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let flat: Vec<f64> = ps.flat().iter().map(|v| v + rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
    ps.set_flat(&flat).unwrap();
}

fn weighted(m: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    m.component_mul(w).sum()
}

#[test]
fn lstm_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (rows, input, hidden) in [(1, 3, 2), (4, 5, 3), (3, 2, 6)] {
        let mut ps = ParamStore::new();
        let cell = LstmCell::new(&mut ps, "lstm", input, hidden, &mut rng);
        jitter(&mut ps, &mut rng);
        let x = gaussian(rows, input, &mut rng);
        let h = gaussian(rows, hidden, &mut rng);
        let c = gaussian(rows, hidden, &mut rng);
        let wh = gaussian(rows, hidden, &mut rng);
        let wc = gaussian(rows, hidden, &mut rng);
        let loss = |ps: &ParamStore, x: &DMatrix<f64>, h: &DMatrix<f64>, c: &DMatrix<f64>| {
            let (h2, c2, _) = cell.forward(ps, x, h, c).unwrap();
            weighted(&h2, &wh) + weighted(&c2, &wc)
        };

        let (_, _, cache) = cell.forward(&ps, &x, &h, &c).unwrap();
        let mut grads = ps.zero_grads();
        let (dx, dh, dc) = cell.backward(&ps, &cache, &wh, Some(&wc), &mut grads);

        let theta = ps.flat();
        let mut probe = ps.clone();
        let num = common::numeric_grad(&theta, H, |t| {
            probe.set_flat(t).unwrap();
            loss(&probe, &x, &h, &c)
        });
        assert!(common::rel_err(&grads.flat(), &num) < TOL);

        let wrt = |m: &DMatrix<f64>, f: &dyn Fn(&DMatrix<f64>) -> f64| {
            common::numeric_grad(m.as_slice(), H, |t| f(&DMatrix::from_column_slice(m.nrows(), m.ncols(), t)))
        };
        assert!(common::rel_err(dx.as_slice(), &wrt(&x, &|v| loss(&ps, v, &h, &c))) < TOL);
        assert!(common::rel_err(dh.as_slice(), &wrt(&h, &|v| loss(&ps, &x, v, &c))) < TOL);
        assert!(common::rel_err(dc.as_slice(), &wrt(&c, &|v| loss(&ps, &x, &h, v))) < TOL);
    }
}

#[test]
fn gcn_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (d, input, output, act) in [(3, 2, 4, Activation::Tanh), (5, 4, 3, Activation::Identity), (6, 3, 3, Activation::Tanh)] {
        let mut ps = ParamStore::new();
        let gcn = Gcn::new(&mut ps, "gcn", input, output, act, &mut rng);
        jitter(&mut ps, &mut rng);
        let adj = normalized_adjacency(&common::random_dag(d, 0.5, &mut rng));
        let feats = gaussian(d, input, &mut rng);
        let w = gaussian(d, output, &mut rng);
        let loss = |ps: &ParamStore, f: &DMatrix<f64>| weighted(&gcn.forward(ps, f, &adj).unwrap().0, &w);

        let (_, cache) = gcn.forward(&ps, &feats, &adj).unwrap();
        let mut grads = ps.zero_grads();
        let dfeats = gcn.backward(&ps, &cache, &w, &mut grads);

        let mut probe = ps.clone();
        let num = common::numeric_grad(&ps.flat(), H, |t| {
            probe.set_flat(t).unwrap();
            loss(&probe, &feats)
        });
        assert!(common::rel_err(&grads.flat(), &num) < TOL);
        let num_x = common::numeric_grad(feats.as_slice(), H, |t| loss(&ps, &DMatrix::from_column_slice(d, input, t)));
        assert!(common::rel_err(dfeats.as_slice(), &num_x) < TOL);
    }
}

#[test]
fn dense_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamStore::new();
    let layer = Dense::new(&mut ps, "dense", 4, 3, Activation::Tanh, &mut rng);
    jitter(&mut ps, &mut rng);
    let x = gaussian(2, 4, &mut rng);
    let w = gaussian(2, 3, &mut rng);
    let (_, cache) = layer.forward(&ps, &x).unwrap();
    let mut grads = ps.zero_grads();
    let dx = layer.backward(&ps, &cache, &w, &mut grads);
    let mut probe = ps.clone();
    let num = common::numeric_grad(&ps.flat(), H, |t| {
        probe.set_flat(t).unwrap();
        weighted(&layer.forward(&probe, &x).unwrap().0, &w)
    });
    assert!(common::rel_err(&grads.flat(), &num) < TOL);
    let num_x = common::numeric_grad(x.as_slice(), H, |t| weighted(&layer.forward(&ps, &DMatrix::from_column_slice(2, 4, t)).unwrap().0, &w));
    assert!(common::rel_err(dx.as_slice(), &num_x) < TOL);
}

#[test]
fn gaussian_log_prob() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 7;
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let log_std: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.5)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (dm, ds) = GaussianPolicy::new(mean.clone(), log_std.clone()).grad_log_prob(&a);
    let num_m = common::numeric_grad(&mean, H, |m| GaussianPolicy::new(m.to_vec(), log_std.clone()).log_prob(&a));
    let num_s = common::numeric_grad(&log_std, H, |s| GaussianPolicy::new(mean.clone(), s.to_vec()).log_prob(&a));
    assert!(common::rel_err(&dm, &num_m) < TOL);
    assert!(common::rel_err(&ds, &num_s) < TOL);
}

fn small_config() -> AgentConfig {
    AgentConfig { embed: 5, lstm_hidden: 4, gcn_hidden: 3, decoder_hidden: 6, critic_hidden: 4, ..Default::default() }
}

struct Setup {
    agent: Agent,
    x: DMatrix<f64>,
    summary: DMatrix<f64>,
    spec_embedding: DMatrix<f64>,
    prev: marlin::AdjacencyMatrix,
}

fn setup(kind: AgentKind, d: usize, range: std::ops::Range<usize>, seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config();
    let mut agent = Agent::new(kind, d, range, cfg, seed).unwrap();
    jitter(agent.actor_params_mut(), &mut rng);
    jitter(agent.critic_params_mut(), &mut rng);
    let x = gaussian(12, d, &mut rng);
    let mut stats = ColumnStats::new(d);
    stats.push_rows(&x);
    let spec_embedding = gaussian(d, cfg.gcn_hidden, &mut rng);
    let prev = common::random_dag(d, 0.5, &mut rng);
    Setup { agent, x, summary: stats.summary(), spec_embedding, prev }
}

impl Setup {
    fn encode(&self, agent: &Agent) -> marlin::agents::Encoding {
        match agent.kind() {
            AgentKind::Specific => agent.encode_specific(&self.x, &self.prev).unwrap(),
            AgentKind::Invariant => agent.encode_invariant(&self.summary, &self.spec_embedding, &self.prev).unwrap(),
        }
    }
}

fn check_policy_gradient(kind: AgentKind, d: usize, range: std::ops::Range<usize>, seed: u64) {
    let mut s = setup(kind, d, range, seed);
    let enc = s.encode(&s.agent);
    let rollout = s.agent.rollout(enc, 5).unwrap();
    let actions: Vec<Vec<f64>> = rollout.proposals.iter().map(|p| p.action.clone()).collect();
    let adv = [1.3, -0.4, 0.7, -2.0, 0.2];
    let analytic = s.agent.policy_gradient(&rollout, &adv).unwrap();

    let theta = s.agent.actor_params().flat();
    let mut probe = s.agent.clone();
    let num = common::numeric_grad(&theta, H, |t| {
        probe.actor_params_mut().set_flat(t).unwrap();
        let policy = probe.policy(&s.encode(&probe)).unwrap();
        Agent::surrogate(&policy, &actions, &adv)
    });
    let err = common::rel_err(&analytic.flat(), &num);
    assert!(err < TOL, "{kind:?}: relative error {err}");
}

fn check_critic_gradient(kind: AgentKind, d: usize, seed: u64) {
    let mut s = setup(kind, d, 0..d * (d + 1), seed);
    let enc = s.encode(&s.agent);
    let rollout = s.agent.rollout(enc, 4).unwrap();
    let rewards = [-3.0, 1.5, 0.25, 4.0];
    let analytic = s.agent.critic_gradient(&rollout, &rewards);
    let baseline = s.agent.baseline();

    let mut probe = s.agent.clone();
    let num = common::numeric_grad(&s.agent.critic_params().flat(), H, |t| {
        probe.critic_params_mut().set_flat(t).unwrap();
        let pred = probe.predict_reward(&s.encode(&probe)).unwrap();
        rewards.iter().map(|r| (r - baseline - pred).powi(2)).sum::<f64>() / rewards.len() as f64
    });
    let err = common::rel_err(&analytic.flat(), &num);
    assert!(err < TOL, "{kind:?}: relative error {err}");
}

#[test]
fn specific_policy_gradient() {
    check_policy_gradient(AgentKind::Specific, 3, 0..12, 5);
    check_policy_gradient(AgentKind::Specific, 4, 5..13, 6);
}

#[test]
fn invariant_policy_gradient() {
    check_policy_gradient(AgentKind::Invariant, 3, 0..12, 7);
    check_policy_gradient(AgentKind::Invariant, 4, 0..7, 8);
}

#[test]
fn critic_gradients() {
    check_critic_gradient(AgentKind::Specific, 3, 9);
    check_critic_gradient(AgentKind::Invariant, 4, 10);
}
