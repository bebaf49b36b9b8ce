use ipo_core::lqr::{self, LqrDomain, LqrPolicy, OptConfig};
use ipo_core::numlin::{self, max_abs, Mat};
use ipo_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn total_cost(problem: &lqr::LqrProblem, domains: &[LqrDomain], k: &Mat) -> f64 {
    domains
        .iter()
        .map(|d| lqr::cost(problem, d, k).unwrap())
        .sum()
}

fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Central differences of `f` over every entry of `x`.
fn numeric_gradient(x: &Mat, step: f64, mut f: impl FnMut(&Mat) -> f64) -> Mat {
    let mut g = Mat::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + step;
            let up = f(&probe);
            probe[(i, j)] = orig - step;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * step);
        }
    }
    g
}

#[test]
fn gradient_matches_central_differences() {
    let mut checked = 0;
    for seed in 0..12u64 {
        let n_s = 2 + (seed as usize % 5);
        let n_y = n_s + 2;
        let problem = lqr::make_problem(n_s, n_s, seed).unwrap();
        let domain = lqr::make_domain(&problem, n_y, 1000 + seed).unwrap();
        let k = lqr::init_stabilizing(&problem, n_y) + gaussian(n_s, n_s + n_y, seed) * 0.05;
        if lqr::cost(&problem, &domain, &k).is_err() {
            continue;
        }
        let analytic = lqr::cost_gradient(&problem, &domain, &k).unwrap();
        let numeric = numeric_gradient(&k, 1e-5, |kk| lqr::cost(&problem, &domain, kk).unwrap());
        let err = rel_err(&analytic, &numeric);
        assert!(err <= 1e-5, "seed {seed}: relative error {err:e}");
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} stabilizing points");
}

#[test]
fn factored_gradient_matches_central_differences() {
    let problem = lqr::make_problem(3, 3, 7).unwrap();
    let domains: Vec<_> = (0..2)
        .map(|i| lqr::make_domain(&problem, 5, 70 + i).unwrap())
        .collect();
    let h = lqr::hidden_width(&problem);
    let g = numlin::sample_semi_orthogonal(h, 3, 11).unwrap();
    let k0 = lqr::init_stabilizing(&problem, 5);
    let k1 = g.transpose() + gaussian(3, h, 12) * 0.02;
    let k2 = &g * &k0 + gaussian(h, 8, 13) * 0.02;
    let (g1, g2) = lqr::factored_gradient(&problem, &domains, &k1, &k2).unwrap();
    let n1 = numeric_gradient(&k1, 1e-5, |m| total_cost(&problem, &domains, &(m * &k2)));
    let n2 = numeric_gradient(&k2, 1e-5, |m| total_cost(&problem, &domains, &(&k1 * m)));
    assert!(rel_err(&g1, &n1) <= 1e-5, "K1: {:e}", rel_err(&g1, &n1));
    assert!(rel_err(&g2, &n2) <= 1e-5, "K2: {:e}", rel_err(&g2, &n2));
}

#[test]
fn gradient_vanishes_at_riccati_gain() {
    for seed in 0..4u64 {
        let problem = lqr::make_problem(6, 6, seed).unwrap();
        let full = LqrDomain::full_state(6);
        let kstar = lqr::oracle_gain(&problem).unwrap();
        // F = Kc Wc must equal the Riccati gain.
        let k = &kstar * problem.wc.transpose();
        let grad = lqr::cost_gradient(&problem, &full, &k).unwrap();
        assert!(max_abs(&grad) <= 1e-6, "seed {seed}: {:e}", max_abs(&grad));
        let c = lqr::cost(&problem, &full, &k).unwrap();
        assert!((c - lqr::oracle_cost(&problem).unwrap()).abs() < 1e-8);
    }
}

/// `Σ_{k<300} (Aᵀ)^k Q A^k`.
fn lyapunov_series(acl: &Mat, q: &Mat) -> Mat {
    let mut p = Mat::zeros(q.nrows(), q.ncols());
    let mut term = q.clone();
    for _ in 0..300 {
        p += &term;
        term = acl.transpose() * &term * acl;
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_agrees_with_truncated_series(n in 1usize..=6, seed in any::<u64>(), rho in 0.05f64..0.9) {
        let m = gaussian(n, n, seed);
        let r = numlin::spectral_radius(&m).unwrap();
        prop_assume!(r > 1e-6);
        let acl = m * (rho / r);
        let c = gaussian(n, n, seed ^ 0x5eed);
        let q = c.transpose() * &c;
        let p = numlin::solve_discrete_lyapunov(&acl, &q).unwrap();
        let series = lyapunov_series(&acl, &q);
        let err = max_abs(&(&p - &series)) / max_abs(&series).max(1.0);
        prop_assert!(err <= 1e-8, "relative error {:e}", err);
    }
}

/// Average of `Σ_t s_tᵀ Qeff s_t` over rollouts whose initial states are the
/// scaled columns of random orthogonal bases, so their second moment is exactly `I`.
fn rollout_cost(acl: &Mat, qeff: &Mat, rollouts: usize, steps: usize, seed: u64) -> f64 {
    let n = acl.nrows();
    let mut total = 0.0;
    let mut done = 0;
    let mut basis_seed = seed;
    while done < rollouts {
        let basis = numlin::sample_orthogonal(n, basis_seed).unwrap() * (n as f64).sqrt();
        basis_seed += 1;
        for col in basis.column_iter() {
            if done == rollouts {
                break;
            }
            let mut s = col.clone_owned();
            for _ in 0..steps {
                total += (s.transpose() * qeff * &s)[(0, 0)];
                s = acl * s;
            }
            done += 1;
        }
    }
    total / rollouts as f64
}

#[test]
fn lyapunov_cost_matches_rollouts() {
    let problem = lqr::make_problem(20, 20, 3).unwrap();
    let domain = lqr::make_domain(&problem, 40, 4).unwrap();
    for (i, scale) in [0.0, 0.03, 0.06].into_iter().enumerate() {
        let k = lqr::init_stabilizing(&problem, 40) + gaussian(20, 60, 90 + i as u64) * scale;
        let f = lqr::feedback(&problem, &domain, &k);
        let ev = lqr::eval_feedback(&problem, f.clone()).unwrap();
        assert!(ev.radius <= 0.9, "radius {}", ev.radius);
        let qeff = &problem.q + f.transpose() * &problem.r * &f;
        // 100 rollouts is five full bases in 20 dimensions.
        let sim = rollout_cost(&ev.acl, &qeff, 100, 500, 17);
        let rel = (sim - ev.cost).abs() / ev.cost;
        assert!(rel <= 0.02, "scale {scale}: simulated {sim} vs {}", ev.cost);
    }
}

#[test]
fn single_full_state_domain_reaches_the_oracle() {
    let problem = lqr::make_problem(20, 20, 0).unwrap();
    let domains = vec![LqrDomain::full_state(20)];
    let out = lqr::train_gd(&problem, &domains, &OptConfig::gradient_descent()).unwrap();
    let oracle = lqr::oracle_cost(&problem).unwrap();
    let final_cost = out.curve.last().unwrap().mean_cost;
    assert!((final_cost - oracle).abs() <= 0.005 * oracle, "{final_cost} vs {oracle}");
    assert!(final_cost >= oracle - 1e-9);
}

#[test]
fn transfer_to_a_training_domain_reproduces_its_training_cost() {
    let problem = lqr::make_problem(6, 6, 1).unwrap();
    let domains: Vec<_> = (0..3)
        .map(|i| lqr::make_domain(&problem, 12, 10 + i).unwrap())
        .collect();
    let opts = OptConfig {
        max_iters: 200,
        distractor_init_scale: 0.05,
        init_seed: 4,
        ..OptConfig::gradient_descent()
    };
    let gd = lqr::train_gd(&problem, &domains, &opts).unwrap();
    let last = gd.curve.last().unwrap();
    for (d, want) in domains.iter().zip(&last.per_domain) {
        let got = lqr::evaluate_transfer(&gd.policy, &problem, d).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs());
    }
    let ipo = lqr::train_ipo_lqr(&problem, &domains, false, &OptConfig { max_iters: 50, ..OptConfig::ipo() })
        .unwrap();
    let last = ipo.curve.last().unwrap();
    let k = ipo.policy.effective_gain();
    for (d, want) in domains.iter().zip(&last.per_domain) {
        let got = lqr::cost(&problem, d, &k).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs());
    }
}

#[test]
fn oracle_bounds_every_trained_policy() {
    let problem = lqr::make_problem(6, 6, 2).unwrap();
    let domains: Vec<_> = (0..2)
        .map(|i| lqr::make_domain(&problem, 20, 30 + i).unwrap())
        .collect();
    let test = lqr::make_domain(&problem, 20, 99).unwrap();
    let oracle = lqr::oracle_cost(&problem).unwrap();
    let opts = OptConfig {
        max_iters: 300,
        distractor_init_scale: 0.1,
        init_seed: 5,
        ..OptConfig::gradient_descent()
    };
    let gd = lqr::train_gd(&problem, &domains, &opts).unwrap();
    let over = lqr::train_overparam(&problem, &domains, &opts).unwrap();
    let ipo = lqr::train_ipo_lqr(&problem, &domains, true, &OptConfig { lr: 0.0005, ..opts.clone() }).unwrap();
    for d in domains.iter().chain(std::iter::once(&test)) {
        assert!(lqr::evaluate_transfer(&gd.policy, &problem, d).unwrap() >= oracle - 1e-9);
        assert!(lqr::evaluate_transfer(&over.policy, &problem, d).unwrap() >= oracle - 1e-9);
        assert!(lqr::evaluate_transfer(&ipo.policy, &problem, d).unwrap() >= oracle - 1e-9);
    }
}

#[test]
fn ipo_averages_away_more_distractor_weight_than_gd() {
    let problem = lqr::make_problem(6, 6, 8).unwrap();
    let domains: Vec<_> = (0..3)
        .map(|i| lqr::make_domain(&problem, 60, 80 + i).unwrap())
        .collect();
    let base = OptConfig {
        max_iters: 400,
        distractor_init_scale: 0.1,
        init_seed: 9,
        ..OptConfig::gradient_descent()
    };
    let gd = lqr::train_gd(&problem, &domains, &base).unwrap();
    let ipo = lqr::train_ipo_lqr(&problem, &domains, true, &OptConfig { lr: 0.0005, ..base }).unwrap();
    let gd_norm = lqr::distractor_norm(&problem, &gd.policy.effective_gain());
    let ipo_norm = lqr::distractor_norm(&problem, &ipo.policy.effective_gain());
    assert!(ipo_norm < gd_norm, "{ipo_norm} vs {gd_norm}");
}
