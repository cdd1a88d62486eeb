use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::ActionVector;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian over a real action (or action slice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    /// `log_std` is clamped into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean and log_std lengths differ");
        let log_std = log_std.into_iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Self { mean, log_std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn std(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_std.iter().map(|v| v.exp())
    }

    pub fn log_prob(&self, a: &[f64]) -> f64 {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        a.iter()
            .zip(&self.mean)
            .zip(&self.log_std)
            .map(|((&x, &m), &ls)| {
                let z = (x - m) * (-ls).exp();
                -0.5 * z * z - ls - half_log_2pi
            })
            .sum()
    }

    /// Gradient of `log_prob(a)` w.r.t. `(mean, log_std)`.
    pub fn grad_log_prob(&self, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dm = Vec::with_capacity(a.len());
        let mut ds = Vec::with_capacity(a.len());
        for ((&x, &m), &ls) in a.iter().zip(&self.mean).zip(&self.log_std) {
            let inv_var = (-2.0 * ls).exp();
            let diff = x - m;
            dm.push(diff * inv_var);
            ds.push(diff * diff * inv_var - 1.0);
        }
        (dm, ds)
    }

    /// Reparameterised draw `mean + std ⊙ ε`; returns the draw and its log density.
    pub fn sample(&self, rng: &mut impl Rng) -> (Vec<f64>, f64) {
        let a: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect();
        let lp = self.log_prob(&a);
        (a, lp)
    }

    /// Draws a full action vector. The policy must cover all `d(d+1)` entries.
    pub fn sample_action(&self, d: usize, rng: &mut impl Rng) -> Result<(ActionVector, f64)> {
        let (a, lp) = self.sample(rng);
        Ok((ActionVector::new(d, a)?, lp))
    }
}
