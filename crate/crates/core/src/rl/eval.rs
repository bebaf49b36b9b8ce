use serde::{Deserialize, Serialize};

use super::TrainedPolicy;
use crate::error::{Error, Result};
use crate::gridworld::{encode_observation, generate_env, Action, Color, GridEnv, Observation};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub color: Color,
    pub mean_reward: f64,
    pub episode_rewards: Vec<f64>,
}

/// Runs `n_episodes` episodes, episode `i` on layout `layouts[i % len]`, and
/// averages their returns. `actor` picks each action.
pub fn evaluate_with(
    color: Color,
    layouts: &[u64],
    n_episodes: usize,
    eval_seed: u64,
    mut actor: impl FnMut(&GridEnv, &Observation, &mut Rng) -> Action,
) -> Result<EvalResult> {
    if layouts.is_empty() || n_episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs layouts and episodes".into()));
    }
    let mut rng = rng_from_seed(derive_seed(eval_seed, "eval", 0));
    let mut rewards = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let mut env = generate_env(color, layouts[i % layouts.len()]);
        let mut obs = encode_observation(&env);
        let mut total = 0.0;
        loop {
            let out = env.step(actor(&env, &obs, &mut rng))?;
            total += out.reward;
            obs = out.observation;
            if out.done {
                break;
            }
        }
        rewards.push(total);
    }
    Ok(EvalResult {
        color,
        mean_reward: rewards.iter().sum::<f64>() / n_episodes as f64,
        episode_rewards: rewards,
    })
}

/// Mean episode reward with actions sampled from the policy.
pub fn evaluate(
    policy: &TrainedPolicy,
    color: Color,
    layouts: &[u64],
    n_episodes: usize,
    eval_seed: u64,
) -> Result<EvalResult> {
    evaluate_with(color, layouts, n_episodes, eval_seed, |_, obs, rng| {
        let code = policy.distribution(obs).sample(rng);
        Action::ALL[code]
    })
}
