//! Trainers for the LQR benchmark: plain gradient descent on `K`, the
//! two-layer overparameterized baseline, and IPO best-response dynamics.
//!
//! All trainers use Adam and only accept a step when every training domain
//! stays stable and the objective of the moving player does not increase.
//! Rejected steps are halved and retried.

use serde::{Deserialize, Serialize};

use super::{
    eval_feedback, feedback, feedback_gradient, init_stabilizing, lift_gradient, FactoredPolicy,
    FeedbackEval, IpoLqrPolicy, LinearPolicy, LqrDomain, LqrProblem,
};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::numlin::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Stop once the objective moved by less than `rel_tol` (relative) over `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
    pub max_backtracks: usize,
    /// Require the moving player's objective not to increase on an accepted step.
    pub monotone: bool,
    /// Standard deviation of i.i.d. Gaussian entries added to the distractor
    /// block of the initial gain. Zero keeps the deterministic stabilizing init.
    pub distractor_init_scale: f64,
    pub init_seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            max_iters: 5000,
            rel_tol: 1e-7,
            window: 50,
            max_backtracks: 20,
            monotone: true,
            distractor_init_scale: 0.0,
            init_seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Learning rate used for both baselines.
    pub fn gradient_descent() -> Self {
        Self::with_lr(0.001)
    }

    pub fn ipo() -> Self {
        Self::with_lr(0.0005)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub per_domain: Vec<f64>,
    pub mean_cost: f64,
}

impl CurvePoint {
    fn new(iteration: usize, evals: &[FeedbackEval]) -> Self {
        let per_domain: Vec<f64> = evals.iter().map(|e| e.cost).collect();
        let mean_cost = per_domain.iter().sum::<f64>() / per_domain.len() as f64;
        Self {
            iteration,
            per_domain,
            mean_cost,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput<P> {
    pub policy: P,
    pub curve: Vec<CurvePoint>,
    pub iterations: usize,
    pub converged: bool,
    /// Steps skipped because no halving reduced the objective.
    pub skipped_steps: usize,
}

fn total(evals: &[FeedbackEval]) -> f64 {
    evals.iter().map(|e| e.cost).sum()
}

fn check_domains(problem: &LqrProblem, domains: &[LqrDomain]) -> Result<usize> {
    let first = domains
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one training domain is required".into()))?;
    let n_y = first.n_y();
    for d in domains {
        if d.n_y() != n_y || d.wd.ncols() != problem.n_s {
            return Err(Error::Shape(format!(
                "domain {} has a {}x{} distractor map, expected {n_y}x{}",
                d.id,
                d.wd.nrows(),
                d.wd.ncols(),
                problem.n_s
            )));
        }
    }
    Ok(n_y)
}

fn eval_gain(problem: &LqrProblem, domains: &[LqrDomain], k: &Mat) -> Result<Vec<FeedbackEval>> {
    domains
        .iter()
        .map(|d| eval_feedback(problem, feedback(problem, d, k)))
        .collect()
}

fn eval_feedbacks(problem: &LqrProblem, fs: Vec<Mat>) -> Result<Vec<FeedbackEval>> {
    fs.into_iter().map(|f| eval_feedback(problem, f)).collect()
}

/// `Σ_d G_F,d W_dᵀ`, summed in domain order.
fn summed_gradient(
    problem: &LqrProblem,
    domains: &[LqrDomain],
    evals: &[FeedbackEval],
) -> Result<Mat> {
    let mut acc = Mat::zeros(problem.n_a, problem.n_s + domains[0].n_y());
    for (d, ev) in domains.iter().zip(evals) {
        let gf = feedback_gradient(problem, ev)?;
        acc += lift_gradient(problem, d, &gf);
    }
    Ok(acc)
}

fn adam_direction(adam: &mut Adam, grad: &Mat) -> Mat {
    let delta = adam.direction(grad.as_slice());
    Mat::from_column_slice(grad.nrows(), grad.ncols(), &delta)
}

enum Trial<T> {
    Accept(T),
    /// Stable but the objective went up.
    Worse,
}

/// Tries `scale = 1, 1/2, 1/4, ...`. Returns `None` when every trial was
/// stable but worse; fails with `StabilityLost` when the last trial was unstable.
fn backtrack<T>(
    max_backtracks: usize,
    iteration: usize,
    mut trial: impl FnMut(f64) -> Result<Trial<T>>,
) -> Result<Option<T>> {
    let mut scale = 1.0;
    let mut last_unstable = false;
    for _ in 0..=max_backtracks {
        match trial(scale) {
            Ok(Trial::Accept(t)) => return Ok(Some(t)),
            Ok(Trial::Worse) => last_unstable = false,
            Err(Error::Unstable { .. }) | Err(Error::NonConvergent { .. }) => last_unstable = true,
            Err(e) => return Err(e),
        }
        scale *= 0.5;
    }
    if last_unstable {
        Err(Error::StabilityLost {
            iteration,
            retries: max_backtracks,
        })
    } else {
        Ok(None)
    }
}

/// Builds the initial iterate, redrawing the distractor noise while any
/// training domain is unstable. After `max_backtracks` failed draws it falls
/// back to the noiseless stabilizing gain.
fn stable_start<T>(opts: &OptConfig, mut build: impl FnMut(Option<u64>) -> Result<T>) -> Result<T> {
    for draw in 0..opts.max_backtracks as u64 {
        match build(Some(draw)) {
            Err(Error::Unstable { .. }) | Err(Error::NonConvergent { .. }) => {}
            other => return other,
        }
    }
    build(None)
}

fn has_converged(history: &[f64], opts: &OptConfig) -> bool {
    let n = history.len();
    if n <= opts.window {
        return false;
    }
    let now = history[n - 1];
    let then = history[n - 1 - opts.window];
    (then - now).abs() < opts.rel_tol * now.abs()
}

/// Gaussian entries of scale `opts.distractor_init_scale` in columns
/// `n_s..`, zeros elsewhere. Player `index` of IPO and the single gain of GD
/// with `index = 0` draw the same matrix on each draw. `draw = None` gives
/// the noiseless gain.
fn distractor_noise(
    rows: usize,
    cols: usize,
    n_s: usize,
    opts: &OptConfig,
    index: u64,
    draw: Option<u64>,
) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    let scale = opts.distractor_init_scale;
    if let (Some(draw), true) = (draw, scale > 0.0 && cols > n_s) {
        let base = crate::rng::derive_seed(opts.init_seed, "lqr/init", index);
        let seed = crate::rng::derive_seed(base, "draw", draw);
        let noise = numlin::gaussian_matrix(rows, cols - n_s, seed) * scale;
        m.columns_mut(n_s, cols - n_s).copy_from(&noise);
    }
    m
}

/// Adam on `Σ_d cost(d, K)` starting from the stabilizing initialization.
pub fn train_gd(
    problem: &LqrProblem,
    domains: &[LqrDomain],
    opts: &OptConfig,
) -> Result<TrainOutput<LinearPolicy>> {
    let n_y = check_domains(problem, domains)?;
    let k0 = init_stabilizing(problem, n_y);
    let (mut k, mut evals) = stable_start(opts, |draw| {
        let k = &k0 + distractor_noise(k0.nrows(), k0.ncols(), problem.n_s, opts, 0, draw);
        let evals = eval_gain(problem, domains, &k)?;
        Ok((k, evals))
    })?;
    let mut adam = Adam::new(k.len(), opts.adam());
    let mut curve = vec![CurvePoint::new(0, &evals)];
    let mut history = vec![total(&evals)];
    let mut skipped = 0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let grad = summed_gradient(problem, domains, &evals)?;
        let delta = adam_direction(&mut adam, &grad);
        let current = total(&evals);
        let step = backtrack(opts.max_backtracks, it, |scale| {
            let cand = &k - &delta * scale;
            let ev = eval_gain(problem, domains, &cand)?;
            Ok(if !opts.monotone || total(&ev) <= current {
                Trial::Accept((cand, ev))
            } else {
                Trial::Worse
            })
        })?;
        match step {
            Some((cand, ev)) => {
                k = cand;
                evals = ev;
            }
            None => skipped += 1,
        }
        curve.push(CurvePoint::new(it, &evals));
        history.push(total(&evals));
        if has_converged(&history, opts) {
            converged = true;
            break;
        }
    }

    Ok(TrainOutput {
        policy: LinearPolicy { k },
        curve,
        iterations,
        converged,
        skipped_steps: skipped,
    })
}

/// Hidden width of the overparameterized and variable-representation models.
pub fn hidden_width(problem: &LqrProblem) -> usize {
    10 * problem.n_a
}

fn split_gradient(grad: &Mat, k1: &Mat, k2: &Mat) -> (Mat, Mat) {
    (grad * k2.transpose(), k1.transpose() * grad)
}

/// Gradients of `Σ_d cost(d, K1 K2)` with respect to `K1` and `K2`.
pub fn factored_gradient(
    problem: &LqrProblem,
    domains: &[LqrDomain],
    k1: &Mat,
    k2: &Mat,
) -> Result<(Mat, Mat)> {
    check_domains(problem, domains)?;
    let evals = eval_gain(problem, domains, &(k1 * k2))?;
    let grad = summed_gradient(problem, domains, &evals)?;
    Ok(split_gradient(&grad, k1, k2))
}

/// Gradient descent over `K = K1 K2`.
///
/// Initialization: `K1 = Gᵀ`, `K2 = G K0` with `G` a random `h x n_a`
/// semi-orthogonal matrix, so `K1 K2 = K0` and every hidden unit receives
/// gradient from the first step.
pub fn train_overparam(
    problem: &LqrProblem,
    domains: &[LqrDomain],
    opts: &OptConfig,
) -> Result<TrainOutput<FactoredPolicy>> {
    let n_y = check_domains(problem, domains)?;
    let h = hidden_width(problem);
    let g = numlin::sample_semi_orthogonal(
        h,
        problem.n_a,
        crate::rng::derive_seed(opts.init_seed, "lqr/lift", 0),
    )?;
    let k0 = init_stabilizing(problem, n_y);
    let mut k1 = g.transpose();
    let lifted = &g * &k0;
    let (mut k2, mut evals) = stable_start(opts, |draw| {
        let k2 = &lifted + distractor_noise(h, k0.ncols(), problem.n_s, opts, 0, draw);
        let evals = eval_gain(problem, domains, &(&k1 * &k2))?;
        Ok((k2, evals))
    })?;
    let (len1, len2) = (k1.len(), k2.len());
    let mut adam = Adam::new(len1 + len2, opts.adam());
    let mut curve = vec![CurvePoint::new(0, &evals)];
    let mut history = vec![total(&evals)];
    let mut skipped = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut flat = vec![0.0; len1 + len2];
    let mut dir = vec![0.0; len1 + len2];

    for it in 1..=opts.max_iters {
        iterations = it;
        let grad = summed_gradient(problem, domains, &evals)?;
        let (g1, g2) = split_gradient(&grad, &k1, &k2);
        flat[..len1].copy_from_slice(g1.as_slice());
        flat[len1..].copy_from_slice(g2.as_slice());
        adam.direction_into(&flat, &mut dir);
        let d1 = Mat::from_column_slice(k1.nrows(), k1.ncols(), &dir[..len1]);
        let d2 = Mat::from_column_slice(k2.nrows(), k2.ncols(), &dir[len1..]);
        let current = total(&evals);
        let step = backtrack(opts.max_backtracks, it, |scale| {
            let c1 = &k1 - &d1 * scale;
            let c2 = &k2 - &d2 * scale;
            let ev = eval_gain(problem, domains, &(&c1 * &c2))?;
            Ok(if !opts.monotone || total(&ev) <= current {
                Trial::Accept((c1, c2, ev))
            } else {
                Trial::Worse
            })
        })?;
        match step {
            Some((c1, c2, ev)) => {
                k1 = c1;
                k2 = c2;
                evals = ev;
            }
            None => skipped += 1,
        }
        curve.push(CurvePoint::new(it, &evals));
        history.push(total(&evals));
        if has_converged(&history, opts) {
            converged = true;
            break;
        }
    }

    Ok(TrainOutput {
        policy: FactoredPolicy { k1, k2 },
        curve,
        iterations,
        converged,
        skipped_steps: skipped,
    })
}

/// Mean of `ks` with entry `d` replaced by `cand`, accumulated in index order.
fn mean_with(ks: &[Mat], d: usize, cand: &Mat) -> Mat {
    let pick = |i: usize| if i == d { cand } else { &ks[i] };
    let mut acc = pick(0).clone();
    for i in 1..ks.len() {
        acc += pick(i);
    }
    acc * (1.0 / ks.len() as f64)
}

/// Shared representation `Φ` together with its composition `M_d = Φ W_d`
/// for every training domain.
struct Representation {
    phi: Mat,
    composed: Vec<Mat>,
}

impl Representation {
    fn new(problem: &LqrProblem, domains: &[LqrDomain], phi: Mat) -> Self {
        let composed = domains.iter().map(|d| feedback(problem, d, &phi)).collect();
        Self { phi, composed }
    }

    fn feedbacks(&self, k_av: &Mat) -> Vec<Mat> {
        self.composed.iter().map(|m| k_av * m).collect()
    }
}

/// Player gains, their average and the per-domain evaluation of the average.
struct Players<'a> {
    problem: &'a LqrProblem,
    domains: &'a [LqrDomain],
    ks: Vec<Mat>,
    k_av: Mat,
    evals: Vec<FeedbackEval>,
}

impl Players<'_> {
    fn feedbacks(&self, rep: Option<&Representation>, k_av: &Mat) -> Vec<Mat> {
        match rep {
            None => self
                .domains
                .iter()
                .map(|d| feedback(self.problem, d, k_av))
                .collect(),
            Some(rep) => rep.feedbacks(k_av),
        }
    }

    fn evaluate(&self, rep: Option<&Representation>, k_av: &Mat) -> Result<Vec<FeedbackEval>> {
        eval_feedbacks(self.problem, self.feedbacks(rep, k_av))
    }

    /// `∂ cost_d(K_av ∘ Φ) / ∂ K^d`.
    fn player_gradient(&self, rep: Option<&Representation>, d: usize) -> Result<Mat> {
        let gf = feedback_gradient(self.problem, &self.evals[d])?;
        let lifted = match rep {
            None => lift_gradient(self.problem, &self.domains[d], &gf),
            Some(rep) => gf * rep.composed[d].transpose(),
        };
        Ok(lifted * (1.0 / self.ks.len() as f64))
    }
}

/// IPO best-response dynamics on the LQR benchmark.
///
/// Each outer iteration optionally takes one Adam step on `Φ` against the
/// summed cost of the averaged policy, then lets every domain in order take
/// one Adam step on its own gain against its own cost of the averaged
/// policy, holding the other gains fixed.
pub fn train_ipo_lqr(
    problem: &LqrProblem,
    domains: &[LqrDomain],
    fixed_phi: bool,
    opts: &OptConfig,
) -> Result<TrainOutput<IpoLqrPolicy>> {
    let n_y = check_domains(problem, domains)?;
    let n_d = domains.len();
    let obs_dim = problem.n_s + n_y;
    let k0 = init_stabilizing(problem, n_y);

    let (mut rep, player_k0) = if fixed_phi {
        (None, k0)
    } else {
        let h = hidden_width(problem);
        if h.min(obs_dim) < problem.n_s {
            return Err(Error::InvalidArgument(
                "representation too narrow to hold the stabilizing gain".into(),
            ));
        }
        let mut phi = Mat::zeros(h, obs_dim);
        for i in 0..h.min(obs_dim) {
            phi[(i, i)] = 1.0;
        }
        let mut kd = Mat::zeros(problem.n_a, h);
        kd.columns_mut(0, problem.n_s)
            .copy_from(&k0.columns(0, problem.n_s));
        (Some(Representation::new(problem, domains, phi)), kd)
    };

    let mut players = stable_start(opts, |draw| {
        let ks: Vec<Mat> = (0..n_d)
            .map(|d| {
                let (rows, cols) = player_k0.shape();
                &player_k0 + distractor_noise(rows, cols, problem.n_s, opts, d as u64, draw)
            })
            .collect();
        let k_av = super::mean_of(&ks);
        let mut players = Players {
            problem,
            domains,
            evals: Vec::new(),
            ks,
            k_av,
        };
        players.evals = players.evaluate(rep.as_ref(), &players.k_av)?;
        Ok(players)
    })?;

    let mut adams: Vec<Adam> = (0..n_d)
        .map(|_| Adam::new(players.k_av.len(), opts.adam()))
        .collect();
    let mut phi_adam = rep.as_ref().map(|r| Adam::new(r.phi.len(), opts.adam()));

    let mut curve = vec![CurvePoint::new(0, &players.evals)];
    let mut history = vec![total(&players.evals)];
    let mut skipped = 0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;

        if let (Some(r), Some(adam)) = (rep.as_mut(), phi_adam.as_mut()) {
            // ∇_Φ Σ_d cost_d(K_av Φ) = K_avᵀ Σ_d G_F,d W_dᵀ
            let grad = players.k_av.transpose() * summed_gradient(problem, domains, &players.evals)?;
            let delta = adam_direction(adam, &grad);
            // F_d(Φ - sΔ) = F_d(Φ) - s (K_av Δ) W_d
            let shift: Vec<Mat> = {
                let kd = &players.k_av * &delta;
                domains.iter().map(|d| feedback(problem, d, &kd)).collect()
            };
            let current = total(&players.evals);
            let step = backtrack(opts.max_backtracks, it, |scale| {
                let fs = players
                    .evals
                    .iter()
                    .zip(&shift)
                    .map(|(ev, s)| &ev.f - s * scale)
                    .collect();
                let ev = eval_feedbacks(problem, fs)?;
                Ok(if !opts.monotone || total(&ev) <= current {
                    Trial::Accept((scale, ev))
                } else {
                    Trial::Worse
                })
            })?;
            match step {
                Some((scale, ev)) => {
                    let phi = &r.phi - &delta * scale;
                    *r = Representation::new(problem, domains, phi);
                    players.evals = ev;
                }
                None => skipped += 1,
            }
        }

        for d in 0..n_d {
            let grad = players.player_gradient(rep.as_ref(), d)?;
            let delta = adam_direction(&mut adams[d], &grad);
            let current = players.evals[d].cost;
            let step = backtrack(opts.max_backtracks, it, |scale| {
                let cand = &players.ks[d] - &delta * scale;
                let k_av = mean_with(&players.ks, d, &cand);
                let ev = players.evaluate(rep.as_ref(), &k_av)?;
                Ok(if !opts.monotone || ev[d].cost <= current {
                    Trial::Accept((cand, k_av, ev))
                } else {
                    Trial::Worse
                })
            })?;
            match step {
                Some((cand, k_av, ev)) => {
                    players.ks[d] = cand;
                    players.k_av = k_av;
                    players.evals = ev;
                }
                None => skipped += 1,
            }
        }

        curve.push(CurvePoint::new(it, &players.evals));
        history.push(total(&players.evals));
        if has_converged(&history, opts) {
            converged = true;
            break;
        }
    }

    Ok(TrainOutput {
        policy: IpoLqrPolicy {
            phi: rep.map(|r| r.phi),
            per_domain: players.ks,
        },
        curve,
        iterations,
        converged,
        skipped_steps: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{cost, make_domain, make_problem, LqrPolicy};
    use super::*;

    fn small_setup(n_d: usize, n_y: usize) -> (LqrProblem, Vec<LqrDomain>) {
        let p = make_problem(4, 4, 21).unwrap();
        let ds = (0..n_d)
            .map(|i| make_domain(&p, n_y, 100 + i as u64).unwrap())
            .collect();
        (p, ds)
    }

    fn short(lr: f64) -> OptConfig {
        OptConfig {
            max_iters: 200,
            ..OptConfig::with_lr(lr)
        }
    }

    #[test]
    fn gd_curve_is_monotone() {
        let (p, ds) = small_setup(3, 8);
        let out = train_gd(&p, &ds, &short(0.01)).unwrap();
        for w in out.curve.windows(2) {
            assert!(w[1].mean_cost <= w[0].mean_cost);
        }
        assert!(out.curve.last().unwrap().mean_cost < out.curve[0].mean_cost);
    }

    #[test]
    fn overparam_starts_at_k0() {
        let (p, ds) = small_setup(2, 8);
        let opts = OptConfig {
            max_iters: 0,
            ..OptConfig::gradient_descent()
        };
        let out = train_overparam(&p, &ds, &opts).unwrap();
        let k0 = init_stabilizing(&p, 8);
        assert!(numlin::max_abs(&(out.policy.effective_gain() - k0)) < 1e-12);
        assert_eq!(out.policy.k1.ncols(), 40);
    }

    #[test]
    fn overparam_curve_is_monotone() {
        let (p, ds) = small_setup(2, 8);
        let out = train_overparam(&p, &ds, &short(0.01)).unwrap();
        for w in out.curve.windows(2) {
            assert!(w[1].mean_cost <= w[0].mean_cost);
        }
    }

    #[test]
    fn ipo_with_one_domain_reduces_to_gd() {
        let (p, ds) = small_setup(1, 8);
        let opts = short(0.0005);
        let gd = train_gd(&p, &ds, &opts).unwrap();
        let ipo = train_ipo_lqr(&p, &ds, true, &opts).unwrap();
        assert_eq!(gd.policy.k, ipo.policy.per_domain[0]);
        assert_eq!(gd.curve, ipo.curve);
    }

    #[test]
    fn identical_domains_see_identical_objectives() {
        let (p, mut ds) = small_setup(1, 8);
        ds.push(ds[0].clone());
        ds.push(ds[0].clone());
        let out = train_ipo_lqr(&p, &ds, true, &short(0.005)).unwrap();
        for point in &out.curve {
            for c in &point.per_domain[1..] {
                assert!((c - point.per_domain[0]).abs() <= 1e-9);
            }
        }
        // at the final average every player would take the same gradient
        let policy = &out.policy;
        let k_av = policy.average_gain();
        let players = Players {
            problem: &p,
            domains: &ds,
            evals: eval_gain(&p, &ds, &k_av).unwrap(),
            ks: policy.per_domain.clone(),
            k_av,
        };
        let g0 = players.player_gradient(None, 0).unwrap();
        for d in 1..ds.len() {
            assert_eq!(players.player_gradient(None, d).unwrap(), g0);
        }
    }

    #[test]
    fn variable_phi_runs_and_improves() {
        let (p, ds) = small_setup(2, 50);
        let out = train_ipo_lqr(&p, &ds, false, &short(0.005)).unwrap();
        let phi = out.policy.phi.as_ref().unwrap();
        assert_eq!(phi.shape(), (40, 54));
        assert!(out.curve.last().unwrap().mean_cost < out.curve[0].mean_cost);
        // the reported curve matches a fresh evaluation of the effective gain
        let k = out.policy.effective_gain();
        for (d, c) in ds.iter().zip(&out.curve.last().unwrap().per_domain) {
            let fresh = cost(&p, d, &k).unwrap();
            assert!((fresh - c).abs() <= 1e-9 * c.abs(), "{fresh} vs {c}");
        }
    }

    #[test]
    fn rejects_empty_domain_list() {
        let p = make_problem(4, 4, 1).unwrap();
        assert!(train_gd(&p, &[], &OptConfig::gradient_descent()).is_err());
    }
}
