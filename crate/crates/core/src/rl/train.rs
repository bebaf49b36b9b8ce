use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ppo::{ppo_update, UpdateStats};
use super::rollout::{collect_rollout, compute_gae, EnvPool};
use super::{DomainPool, PpoConfig, TrainedPolicy};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, ActorCriticNet, Architecture};
use crate::rng::{derive_seed, rng_from_seed};

/// One line of the training progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub step: usize,
    pub update: usize,
    /// Color of the domain whose net was updated, or `pooled`.
    pub domain: String,
    /// Mean return of episodes that finished during the rollout.
    pub mean_episode_reward: Option<f64>,
    pub episodes: usize,
    /// Mean return of finished episodes per key color.
    pub domain_rewards: BTreeMap<String, f64>,
    pub losses: UpdateStats,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub policy: TrainedPolicy,
    pub progress: Vec<ProgressRecord>,
    pub steps: usize,
}

fn check_pools(pools: &[DomainPool]) -> Result<()> {
    if pools.is_empty() || pools.iter().any(|p| p.seeds.is_empty()) {
        return Err(Error::InvalidArgument("every domain needs at least one layout seed".into()));
    }
    Ok(())
}

fn layouts(pool: &DomainPool) -> Vec<(crate::gridworld::Color, u64)> {
    pool.seeds.iter().map(|&s| (pool.color, s)).collect()
}

/// Single learner state shared by both trainers. Member `d` draws its init,
/// env slots and minibatch order from seeds indexed by `d`, so a one-domain
/// ensemble replays the pooled baseline exactly.
struct Member {
    envs: EnvPool,
    adam: Adam,
    shuffle: crate::rng::Rng,
    label: String,
}

impl Member {
    fn new(envs: EnvPool, params: usize, cfg: &PpoConfig, seed: u64, d: usize, label: String) -> Self {
        Self {
            envs,
            adam: Adam::new(params, AdamConfig::with_lr(cfg.lr)),
            shuffle: rng_from_seed(derive_seed(seed, "shuffle", d as u64)),
            label,
        }
    }
}

fn update_member(
    nets: &mut [ActorCriticNet],
    d: usize,
    member: &mut Member,
    cfg: &PpoConfig,
    update: usize,
    steps: &mut usize,
) -> Result<ProgressRecord> {
    let buf = collect_rollout(&mut member.envs, nets, d, cfg.n_steps)?;
    *steps += buf.len();
    let (adv, ret) = compute_gae(&buf, cfg.gamma, cfg.gae_lambda);
    let stats = ppo_update(nets, d, &mut member.adam, &buf, &adv, &ret, cfg, &mut member.shuffle, update)?;
    let episodes = buf.completed_returns.len();
    let mut per: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (c, r) in buf.completed_colors.iter().zip(&buf.completed_returns) {
        let e = per.entry(c.to_string()).or_default();
        e.0 += r;
        e.1 += 1;
    }
    Ok(ProgressRecord {
        step: *steps,
        update,
        domain: member.label.clone(),
        mean_episode_reward: (episodes > 0)
            .then(|| buf.completed_returns.iter().sum::<f64>() / episodes as f64),
        episodes,
        domain_rewards: per.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect(),
        entropy: stats.entropy,
        losses: stats,
    })
}

/// PPO on all domains' layouts pooled into one set of environments.
pub fn train_ppo(
    pools: &[DomainPool],
    cfg: &PpoConfig,
    arch: Architecture,
    seed: u64,
    mut on_progress: impl FnMut(&ProgressRecord),
) -> Result<TrainRun> {
    cfg.validate()?;
    check_pools(pools)?;
    let all: Vec<_> = pools.iter().flat_map(layouts).collect();
    let mut nets = vec![ActorCriticNet::new(arch, derive_seed(seed, "net", 0))?];
    let envs = EnvPool::new(all, cfg.n_envs, derive_seed(seed, "envs", 0))?;
    let mut member = Member::new(envs, nets[0].num_params(), cfg, seed, 0, "pooled".into());
    let mut steps = 0;
    let mut progress = Vec::new();
    while steps < cfg.total_steps {
        let rec = update_member(&mut nets, 0, &mut member, cfg, progress.len(), &mut steps)?;
        on_progress(&rec);
        progress.push(rec);
    }
    let net = nets.pop().expect("one net");
    Ok(TrainRun {
        policy: TrainedPolicy::Single(net),
        progress,
        steps,
    })
}

/// Best-response training of one net per domain. Each turn collects a rollout
/// in domain `d` with the averaged policy (values from net `d`) and updates
/// net `d` with every other net fixed.
pub fn train_ipo(
    pools: &[DomainPool],
    cfg: &PpoConfig,
    arch: Architecture,
    seed: u64,
    mut on_progress: impl FnMut(&ProgressRecord),
) -> Result<TrainRun> {
    cfg.validate()?;
    check_pools(pools)?;
    let mut nets = (0..pools.len())
        .map(|d| ActorCriticNet::new(arch, derive_seed(seed, "net", d as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut members = pools
        .iter()
        .enumerate()
        .map(|(d, p)| {
            let envs = EnvPool::new(layouts(p), cfg.n_envs, derive_seed(seed, "envs", d as u64))?;
            Ok(Member::new(envs, nets[d].num_params(), cfg, seed, d, p.color.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut steps = 0;
    let mut progress = Vec::new();
    'outer: while steps < cfg.total_steps {
        for _ in 0..cfg.inner_rounds {
            for (d, member) in members.iter_mut().enumerate() {
                if steps >= cfg.total_steps {
                    break 'outer;
                }
                let rec = update_member(&mut nets, d, member, cfg, progress.len(), &mut steps)?;
                on_progress(&rec);
                progress.push(rec);
            }
        }
    }
    Ok(TrainRun {
        policy: TrainedPolicy::Ensemble(nets),
        progress,
        steps,
    })
}
