use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gridworld::{encode_observation, generate_env, Action, Color, GridEnv, Observation};
use crate::nn::{mean_scores, ActorCriticNet, CategoricalDist};
use crate::rng::{derive_seed, rng_from_seed, Rng};

use rand::Rng as _;

#[derive(Debug, Clone)]
struct Slot {
    env: GridEnv,
    obs: Observation,
    rng: Rng,
    episode_return: f64,
}

/// Parallel environments drawing layouts from a fixed list of
/// `(color, layout seed)` pairs. Finished episodes restart on a layout
/// resampled with the slot's own generator, which also samples its actions,
/// so results do not depend on how slots are spread over threads.
#[derive(Debug, Clone)]
pub struct EnvPool {
    layouts: Vec<(Color, u64)>,
    slots: Vec<Slot>,
}

impl EnvPool {
    pub fn new(layouts: Vec<(Color, u64)>, n_envs: usize, seed: u64) -> Result<Self> {
        if layouts.is_empty() || n_envs == 0 {
            return Err(Error::InvalidArgument("an env pool needs layouts and at least one env".into()));
        }
        let slots = (0..n_envs)
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(seed, "env-slot", i as u64));
                let (color, layout) = layouts[rng.random_range(0..layouts.len())];
                let env = generate_env(color, layout);
                Slot {
                    obs: encode_observation(&env),
                    env,
                    rng,
                    episode_return: 0.0,
                }
            })
            .collect();
        Ok(Self { layouts, slots })
    }

    pub fn n_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn envs(&self) -> impl Iterator<Item = &GridEnv> {
        self.slots.iter().map(|s| &s.env)
    }
}

/// Step-major storage: row `t * n_envs + e` is env `e` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    /// Behavior log-probabilities.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// True when the episode ended with this step.
    pub dones: Vec<bool>,
    /// Value of each env's observation after the last step.
    pub bootstrap: Vec<f64>,
    /// Returns of episodes that finished during the rollout, and their domains.
    pub completed_returns: Vec<f64>,
    pub completed_colors: Vec<Color>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_envs * self.n_steps;
        let lens = [
            self.observations.len(),
            self.actions.len(),
            self.log_probs.len(),
            self.rewards.len(),
            self.values.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|&l| l != n) || self.bootstrap.len() != self.n_envs {
            return Err(Error::Shape(format!("rollout buffer lengths {lens:?} for {n} rows")));
        }
        if self.log_probs.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("non-finite behavior log-probability".into()));
        }
        Ok(())
    }
}

fn act(nets: &[ActorCriticNet], value_net: usize, obs: &Observation) -> (CategoricalDist, f64) {
    let outs: Vec<(Vec<f64>, f64)> = nets.iter().map(|n| n.forward(obs)).collect();
    let value = outs[value_net].1;
    let dist = if outs.len() == 1 {
        CategoricalDist::from_scores(&outs[0].0)
    } else {
        let scores: Vec<Vec<f64>> = outs.into_iter().map(|o| o.0).collect();
        CategoricalDist::from_scores(&mean_scores(&scores).expect("non-empty ensemble"))
    };
    (dist, value)
}

struct StepRow {
    obs: Observation,
    action: usize,
    log_prob: f64,
    reward: f64,
    value: f64,
    done: bool,
    finished: Option<(Color, f64)>,
}

/// Runs `n_steps` steps in every env, acting with the mean-score policy of
/// `nets` and recording values from `nets[value_net]`.
pub fn collect_rollout(
    pool: &mut EnvPool,
    nets: &[ActorCriticNet],
    value_net: usize,
    n_steps: usize,
) -> Result<RolloutBuffer> {
    if nets.is_empty() || value_net >= nets.len() {
        return Err(Error::InvalidArgument("value net index out of range".into()));
    }
    let n_envs = pool.n_envs();
    let mut buf = RolloutBuffer {
        n_envs,
        n_steps,
        observations: Vec::with_capacity(n_envs * n_steps),
        actions: Vec::with_capacity(n_envs * n_steps),
        log_probs: Vec::with_capacity(n_envs * n_steps),
        rewards: Vec::with_capacity(n_envs * n_steps),
        values: Vec::with_capacity(n_envs * n_steps),
        dones: Vec::with_capacity(n_envs * n_steps),
        bootstrap: Vec::with_capacity(n_envs),
        completed_returns: Vec::new(),
        completed_colors: Vec::new(),
    };
    let layouts = &pool.layouts;
    for _ in 0..n_steps {
        let rows: Vec<Result<StepRow>> = pool
            .slots
            .par_iter_mut()
            .map(|slot| {
                let (dist, value) = act(nets, value_net, &slot.obs);
                let action = dist.sample(&mut slot.rng);
                let out = slot.env.step(Action::from_code(action)?)?;
                let obs = slot.obs;
                slot.episode_return += out.reward;
                let mut finished = None;
                if out.done {
                    finished = Some((slot.env.domain_color(), slot.episode_return));
                    slot.episode_return = 0.0;
                    let (color, layout) = layouts[slot.rng.random_range(0..layouts.len())];
                    slot.env = generate_env(color, layout);
                    slot.obs = encode_observation(&slot.env);
                } else {
                    slot.obs = out.observation;
                }
                Ok(StepRow {
                    obs,
                    action,
                    log_prob: dist.log_prob(action),
                    reward: out.reward,
                    value,
                    done: out.done,
                    finished,
                })
            })
            .collect();
        for row in rows {
            let row = row?;
            buf.observations.push(row.obs);
            buf.actions.push(row.action);
            buf.log_probs.push(row.log_prob);
            buf.rewards.push(row.reward);
            buf.values.push(row.value);
            buf.dones.push(row.done);
            if let Some((color, ret)) = row.finished {
                buf.completed_colors.push(color);
                buf.completed_returns.push(ret);
            }
        }
    }
    buf.bootstrap = pool
        .slots
        .par_iter()
        .map(|s| nets[value_net].forward(&s.obs).1)
        .collect();
    Ok(buf)
}

/// Generalized advantage estimates and value targets, unnormalized.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buf.n_envs;
    let mut adv = vec![0.0; buf.len()];
    for e in 0..n {
        let mut next_value = buf.bootstrap[e];
        let mut next_adv = 0.0;
        for t in (0..buf.n_steps).rev() {
            let i = t * n + e;
            let live = if buf.dones[i] { 0.0 } else { 1.0 };
            let delta = buf.rewards[i] + gamma * next_value * live - buf.values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = buf.values[i];
        }
    }
    let returns = adv.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
