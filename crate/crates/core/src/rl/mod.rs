//! PPO and the ensemble best-response trainer on the colored-keys gridworld.

mod eval;
mod ppo;
mod rollout;
mod train;

pub use eval::{evaluate, evaluate_with, EvalResult};
pub use ppo::{ppo_update, UpdateStats};
pub use rollout::{collect_rollout, compute_gae, EnvPool, RolloutBuffer};
pub use train::{train_ipo, train_ppo, ProgressRecord, TrainRun};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Color, Observation};
use crate::nn::{mean_scores, ActorCriticNet, CategoricalDist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub n_steps: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub batch: usize,
    pub entropy_coef: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub total_steps: usize,
    pub max_grad_norm: f64,
    /// Parallel environments per rollout: the pooled envs for PPO, per domain for IPO.
    pub n_envs: usize,
    /// Best-response rounds over all domains per outer iteration (IPO only).
    pub inner_rounds: usize,
}

impl PpoConfig {
    pub fn ppo() -> Self {
        Self {
            n_steps: 128,
            epochs: 4,
            gamma: 0.99,
            gae_lambda: 0.95,
            batch: 256,
            entropy_coef: 0.01,
            clip: 0.2,
            value_coef: 0.5,
            lr: 0.001,
            total_steps: 120_000,
            max_grad_norm: 0.5,
            n_envs: 16,
            inner_rounds: 1,
        }
    }

    pub fn ipo() -> Self {
        Self {
            lr: 0.0005,
            n_envs: 8,
            ..Self::ppo()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("ppo config: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.n_steps == 0 || self.epochs == 0 || self.batch == 0 || self.n_envs == 0 {
            return bad("n_steps, epochs, batch and n_envs must be positive");
        }
        if self.inner_rounds == 0 {
            return bad("inner_rounds must be positive");
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("lr and max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// A single net, or an ensemble acting through the mean of its score vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedPolicy {
    Single(ActorCriticNet),
    Ensemble(Vec<ActorCriticNet>),
}

impl TrainedPolicy {
    pub fn nets(&self) -> &[ActorCriticNet] {
        match self {
            TrainedPolicy::Single(n) => std::slice::from_ref(n),
            TrainedPolicy::Ensemble(ns) => ns,
        }
    }

    pub fn into_nets(self) -> Vec<ActorCriticNet> {
        match self {
            TrainedPolicy::Single(n) => vec![n],
            TrainedPolicy::Ensemble(ns) => ns,
        }
    }

    pub fn distribution(&self, obs: &Observation) -> CategoricalDist {
        policy_distribution(self.nets(), obs)
    }
}

pub(crate) fn policy_distribution(nets: &[ActorCriticNet], obs: &Observation) -> CategoricalDist {
    if let [net] = nets {
        return CategoricalDist::from_scores(&net.forward(obs).0);
    }
    let scores: Vec<Vec<f64>> = nets.iter().map(|n| n.forward(obs).0).collect();
    CategoricalDist::from_scores(&mean_scores(&scores).expect("non-empty ensemble"))
}

/// Layout seeds of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainPool {
    pub color: Color,
    pub seeds: Vec<u64>,
}
