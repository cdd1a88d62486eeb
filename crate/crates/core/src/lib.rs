//! Online causal discovery over non-stationary multivariate streams.
//!
//! Each incoming batch is explained by a directed acyclic graph sampled from a
//! continuous action vector. Two cooperating actor-critic agents (one
//! re-initialised per system state, one persisting across states) propose
//! actions whose convex fusion is decoded into the batch estimate and scored
//! with BIC.
//!
//! Crate layout:
//!
//! * [`graph`]: adjacency matrices, the vector-to-DAG mapping, decomposition.
//! * [`scoring`]: BIC and the per-agent rewards.
//! * [`neural`]: dense / LSTM / GCN layers with hand-written gradients, Adam.
//! * [`agents`]: the state-specific and state-invariant agents.
//! * [`orchestrator`]: the online loop and its single-agent / factored variants.
//! * [`synth`]: synthetic non-stationary streams with ground truth.
//! * [`metrics`]: structure-recovery and ranking metrics.
//! * [`rca`]: root-cause ranking by random walk with restarts.
//! * [`stream`]: JSON-Lines / CSV stream formats and result persistence.

pub mod agents;
pub mod error;
pub mod exec;
pub mod graph;
pub mod metrics;
pub mod neural;
pub mod orchestrator;
pub mod rca;
pub mod scoring;
pub mod stream;
pub mod synth;

pub(crate) mod seed;

pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::{action_to_dag, complement, dag_decompose, is_acyclic, ActionVector, AdjacencyMatrix, DagDecomposition};
pub use orchestrator::{Engine, EpisodeRecord, Mode, OnlineConfig};
pub use scoring::{Backend, ScoreConfig, Variance};
pub use stream::StreamBatch;
