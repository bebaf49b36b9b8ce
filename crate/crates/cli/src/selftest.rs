//! Quick numerical checks against independent oracles. Each returns a
//! measured error next to its tolerance.

use std::collections::{HashSet, VecDeque};

use anyhow::Result;
use ipo_core::gridworld::{generate_env, Action, Color, GridEnv, HORIZON};
use ipo_core::lqr;
use ipo_core::nn::{embed_observation, ActorCriticNet, Architecture, CategoricalDist};
use ipo_core::numlin::{self, Mat};
use ipo_core::rl::{compute_gae, evaluate_with, RolloutBuffer};
use ipo_core::rng::rng_from_seed;
use rand::Rng as _;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn golden() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// With `A` orthogonal and `B = Q = R = I` the Riccati solution is `φ I`.
fn dare_oracle() -> Result<Check> {
    let p = lqr::make_problem(20, 20, 0)?;
    let cost = lqr::oracle_cost(&p)?;
    Ok(Check {
        name: "riccati cost of the 20-dim orthogonal problem equals 20·φ",
        error: (cost - 20.0 * golden()).abs(),
        tolerance: 1e-6,
    })
}

fn scalar_dare() -> Result<Check> {
    let one = Mat::identity(1, 1);
    let (p, _) = numlin::solve_dare(&one, &one, &one, &one)?;
    Ok(Check {
        name: "scalar riccati solution equals φ",
        error: (p[(0, 0)] - golden()).abs(),
        tolerance: 1e-9,
    })
}

fn lqr_gradient() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..16u64 {
        let n_s = 2 + (seed as usize % 5);
        let n_y = n_s + 2;
        let problem = lqr::make_problem(n_s, n_s, seed)?;
        let domain = lqr::make_domain(&problem, n_y, 500 + seed)?;
        let mut rng = rng_from_seed(seed);
        let noise = Mat::from_fn(n_s, n_s + n_y, |_, _| rng.random::<f64>() - 0.5);
        let k = lqr::init_stabilizing(&problem, n_y) + noise * 0.1;
        if lqr::cost(&problem, &domain, &k).is_err() {
            continue;
        }
        let analytic = lqr::cost_gradient(&problem, &domain, &k)?;
        let mut numeric = Mat::zeros(k.nrows(), k.ncols());
        let mut probe = k.clone();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                let h = 1e-5;
                probe[(i, j)] = k[(i, j)] + h;
                let up = lqr::cost(&problem, &domain, &probe)?;
                probe[(i, j)] = k[(i, j)] - h;
                let down = lqr::cost(&problem, &domain, &probe)?;
                probe[(i, j)] = k[(i, j)];
                numeric[(i, j)] = (up - down) / (2.0 * h);
            }
        }
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm().max(1e-12));
        checked += 1;
        if checked == 10 {
            break;
        }
    }
    Ok(Check {
        name: "LQR gradient matches central differences at 10 stabilizing points",
        error: if checked == 10 { worst } else { f64::INFINITY },
        tolerance: 1e-5,
    })
}

fn nn_gradient() -> Result<Check> {
    let arch = Architecture {
        channels: [3, 4, 5],
        ..Architecture::default()
    };
    let mut net = ActorCriticNet::new(arch, 1)?;
    let mut rng = rng_from_seed(2);
    let input: Vec<f64> = embed_observation(&ipo_core::gridworld::encode_observation(&generate_env(Color::Red, 3)))
        .into_iter()
        .map(|v| v + 1e-2 * rng.random::<f64>())
        .collect();
    let loss = |net: &ActorCriticNet| {
        let c = net.forward_cached(input.clone());
        let d = CategoricalDist::from_scores(&c.scores);
        (-d.log_prob(1) + 0.5 * (c.value - 0.3).powi(2), d, c)
    };
    let (_, d, cache) = loss(&net);
    let dscores: Vec<f64> = d.grad_log_prob(1).iter().map(|g| -g).collect();
    net.zero_grad();
    net.backward(&cache, &dscores, cache.value - 0.3);
    let analytic = net.grads().to_vec();
    let (mut diff, mut norm) = (0.0, 0.0);
    for (i, a) in analytic.iter().enumerate() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + 1e-4;
        let up = loss(&net).0;
        net.params_mut()[i] = orig - 1e-4;
        let down = loss(&net).0;
        net.params_mut()[i] = orig;
        let n = (up - down) / 2e-4;
        diff += (a - n) * (a - n);
        norm += n * n;
    }
    Ok(Check {
        name: "network backward pass matches central differences",
        error: diff.sqrt() / f64::sqrt(norm).max(1e-12),
        tolerance: 1e-4,
    })
}

fn gae_hand_example() -> Check {
    let obs = ipo_core::gridworld::encode_observation(&generate_env(Color::Red, 0));
    let buf = RolloutBuffer {
        n_envs: 1,
        n_steps: 3,
        observations: vec![obs; 3],
        actions: vec![0; 3],
        log_probs: vec![0.0; 3],
        rewards: vec![0.0, 0.0, 1.0],
        values: vec![0.0; 3],
        dones: vec![false, false, true],
        bootstrap: vec![0.0],
        completed_returns: vec![],
        completed_colors: vec![],
    };
    let (adv, _) = compute_gae(&buf, 0.99, 0.95);
    let want = [0.9405 * 0.9405, 0.9405, 1.0];
    Check {
        name: "advantages of a three-step episode follow the hand recursion",
        error: adv.iter().zip(want).map(|(a, w)| (a - w).abs()).fold(0.0, f64::max),
        tolerance: 1e-12,
    }
}

fn state_key(env: &GridEnv) -> String {
    let d = env.dump();
    serde_json::to_string(&(d.agent, d.carrying, d.cells)).expect("dump serializes")
}

/// First action and length of a shortest path to the goal.
fn plan(start: &GridEnv) -> Option<(Action, u32)> {
    let mut seen = HashSet::from([state_key(start)]);
    let mut queue = VecDeque::from([(start.clone(), None::<Action>, 0u32)]);
    while let Some((env, first, depth)) = queue.pop_front() {
        for a in Action::ALL {
            let mut next = env.clone();
            let out = next.step(a).ok()?;
            let first = first.or(Some(a));
            if out.reward > 0.0 {
                return first.map(|f| (f, depth + 1));
            }
            if !out.done && seen.insert(state_key(&next)) {
                queue.push_back((next, first, depth + 1));
            }
        }
    }
    None
}

fn scripted_policy() -> Result<Check> {
    let seeds: Vec<u64> = (0..8).collect();
    let res = evaluate_with(Color::Grey, &seeds, seeds.len(), 0, |env, _, _| {
        plan(env).map_or(Action::Done, |p| p.0)
    })?;
    let mut worst: f64 = 0.0;
    for (s, r) in seeds.iter().zip(&res.episode_rewards) {
        let t = plan(&generate_env(Color::Grey, *s)).map_or(f64::INFINITY, |p| p.1 as f64);
        worst = worst.max((r - (1.0 - 0.9 * t / HORIZON as f64)).abs());
    }
    Ok(Check {
        name: "shortest-path policy earns 1 - 0.9 t*/T",
        error: worst,
        tolerance: 1e-12,
    })
}

pub fn run_all() -> Vec<(&'static str, Result<Check>)> {
    vec![
        ("dare", dare_oracle()),
        ("dare-scalar", scalar_dare()),
        ("lqr-gradient", lqr_gradient()),
        ("nn-gradient", nn_gradient()),
        ("gae", Ok(gae_hand_example())),
        ("gridworld-bfs", scripted_policy()),
    ]
}
