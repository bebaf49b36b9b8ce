use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rollout::RolloutBuffer;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::nn::{embed_observation, Adam, ActorCriticNet, CategoricalDist};
use crate::rng::Rng;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    pub minibatches: usize,
    /// Largest `|ratio - 1|` in the first minibatch.
    pub first_ratio_deviation: f64,
    /// Clipped surrogate loss of the first minibatch and the mean of its
    /// normalized advantages.
    pub first_policy_loss: f64,
    pub first_advantage_mean: f64,
}

fn normalize(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

/// Clipped-surrogate PPO on `nets[learner]`. The policy being optimized is the
/// mean-score ensemble of all `nets`; every other net is held fixed, so with a
/// single net this is plain PPO.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    nets: &mut [ActorCriticNet],
    learner: usize,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut Rng,
    update: usize,
) -> Result<UpdateStats> {
    buf.check()?;
    if learner >= nets.len() || advantages.len() != buf.len() || returns.len() != buf.len() {
        return Err(Error::Shape("advantages, returns or learner index do not match the buffer".into()));
    }
    let n_nets = nets.len() as f64;
    let inputs: Vec<Vec<f64>> = buf.observations.iter().map(embed_observation).collect();
    // Fixed members contribute a constant to the mean scores.
    let others: Vec<Vec<f64>> = buf
        .observations
        .iter()
        .map(|obs| {
            let mut sum = vec![0.0; nets[learner].architecture().actions];
            for (j, net) in nets.iter().enumerate() {
                if j != learner {
                    let scores = net.forward(obs).0;
                    sum.iter_mut().zip(&scores).for_each(|(s, v)| *s += v);
                }
            }
            sum
        })
        .collect();
    let net = &mut nets[learner];

    let mut order: Vec<usize> = (0..buf.len()).collect();
    let mut stats = UpdateStats::default();
    let mut kl_count = 0usize;
    let mut grad = vec![0.0; net.num_params()];
    let mut step = vec![0.0; net.num_params()];

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (mb, chunk) in order.chunks(cfg.batch).enumerate() {
            let m = chunk.len() as f64;
            let mut adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
            normalize(&mut adv);
            net.zero_grad();
            let (mut pl, mut vl, mut ent, mut clipped, mut max_dev) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
            for (k, &i) in chunk.iter().enumerate() {
                let cache = net.forward_cached(inputs[i].clone());
                let mean: Vec<f64> = cache
                    .scores
                    .iter()
                    .zip(&others[i])
                    .map(|(s, o)| (s + o) / n_nets)
                    .collect();
                let dist = CategoricalDist::from_scores(&mean);
                let a = buf.actions[i];
                let logp = dist.log_prob(a);
                let ratio = (logp - buf.log_probs[i]).exp();
                max_dev = max_dev.max((ratio - 1.0).abs());
                let surr1 = ratio * adv[k];
                let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv[k];
                pl -= surr1.min(surr2);
                if (ratio - 1.0).abs() > cfg.clip {
                    clipped += 1.0;
                }
                stats.approx_kl += buf.log_probs[i] - logp;
                kl_count += 1;
                let h = dist.entropy();
                ent += h;
                let err = cache.value - returns[i];
                vl += err * err;

                // d loss / d log p
                let dlogp = if surr1 <= surr2 { -adv[k] * ratio } else { 0.0 };
                let glp = dist.grad_log_prob(a);
                let gh = dist.grad_entropy();
                let dscores: Vec<f64> = glp
                    .iter()
                    .zip(&gh)
                    .map(|(g, e)| (dlogp * g - cfg.entropy_coef * e) / (m * n_nets))
                    .collect();
                let dvalue = 2.0 * cfg.value_coef * err / m;
                net.backward(&cache, &dscores, dvalue);
            }
            let (pl, vl, ent) = (pl / m, vl / m, ent / m);
            let loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent;
            grad.copy_from_slice(net.grads());
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    update,
                    detail: format!(
                        "epoch {epoch} minibatch {mb}: policy {pl} value {vl} entropy {ent} grad norm {norm}"
                    ),
                });
            }
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / (norm + 1e-6);
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            adam.direction_into(&grad, &mut step);
            for (p, s) in net.params_mut().iter_mut().zip(&step) {
                *p -= s;
            }

            if stats.minibatches == 0 {
                stats.first_ratio_deviation = max_dev;
                stats.first_policy_loss = pl;
                stats.first_advantage_mean = adv.iter().sum::<f64>() / m;
            }
            stats.minibatches += 1;
            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.clip_fraction += clipped / m;
            stats.grad_norm += norm;
        }
    }
    let n = stats.minibatches.max(1) as f64;
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.clip_fraction /= n;
    stats.grad_norm /= n;
    stats.approx_kl /= kl_count.max(1) as f64;
    Ok(stats)
}
