//! A small differentiable substrate with hand-written backward passes.
//!
//! Matrices are row-batched: a layer input of shape `N x in` produces `N x out`.
//! Every layer's `forward` returns a cache that its `backward` consumes; there
//! is no general tape.

mod layers;
mod params;
mod policy;

pub use layers::{normalized_adjacency, Activation, Dense, DenseCache, Gcn, GcnCache, LstmCache, LstmCell};
pub use params::{AdamConfig, Checkpoint, Grads, NamedTensor, ParamId, ParamStore};
pub use policy::{GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
