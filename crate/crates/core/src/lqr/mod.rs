//! Output-feedback LQR with high-dimensional distractor observations.
//!
//! The plant `s' = A s + B a` is shared by every domain. A domain observes
//! `o = [Wc s; Wd s]` where `Wc` is shared and orthogonal and `Wd` is a
//! domain-specific semi-orthogonal "distractor" map. A linear policy
//! `a = K o` therefore acts on the state through the feedback matrix
//! `F = K W = Kc Wc + Kd Wd`, and its expected cost for `s0 ~ N(0, I)` is
//! `trace(P)` where `P = Q + FᵀRF + AclᵀP Acl` with `Acl = A + B F`.

mod train;

pub use train::{
    factored_gradient, hidden_width, train_gd, train_ipo_lqr, train_overparam, CurvePoint,
    OptConfig, TrainOutput,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub wc: Mat,
    pub n_s: usize,
    pub n_a: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrDomain {
    pub id: String,
    /// `n_y x n_s`, orthonormal columns. `n_y = 0` means the domain sees only `Wc s`.
    pub wd: Mat,
}

impl LqrDomain {
    pub fn n_y(&self) -> usize {
        self.wd.nrows()
    }

    /// A domain with no distractor block.
    pub fn full_state(n_s: usize) -> Self {
        Self {
            id: "full-state".into(),
            wd: Mat::zeros(0, n_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub k: Mat,
}

/// `K = K1 K2` with a wide hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredPolicy {
    pub k1: Mat,
    pub k2: Mat,
}

/// Per-domain gains averaged on top of a shared linear representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpoLqrPolicy {
    /// `None` is the identity representation.
    pub phi: Option<Mat>,
    pub per_domain: Vec<Mat>,
}

impl IpoLqrPolicy {
    pub fn average_gain(&self) -> Mat {
        mean_of(&self.per_domain)
    }
}

/// Anything that collapses to one linear observation-feedback gain.
pub trait LqrPolicy {
    fn effective_gain(&self) -> Mat;
}

impl LqrPolicy for LinearPolicy {
    fn effective_gain(&self) -> Mat {
        self.k.clone()
    }
}

impl LqrPolicy for FactoredPolicy {
    fn effective_gain(&self) -> Mat {
        &self.k1 * &self.k2
    }
}

impl LqrPolicy for IpoLqrPolicy {
    fn effective_gain(&self) -> Mat {
        let avg = self.average_gain();
        match &self.phi {
            Some(phi) => avg * phi,
            None => avg,
        }
    }
}

/// Arithmetic mean, accumulated left to right then scaled by `1/n`.
pub(crate) fn mean_of(mats: &[Mat]) -> Mat {
    assert!(!mats.is_empty(), "mean of no matrices");
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc += m;
    }
    acc * (1.0 / mats.len() as f64)
}

/// Shared dynamics with `A`, `Wc` Haar-orthogonal and `B = Q = R = I`.
pub fn make_problem(n_s: usize, n_a: usize, seed: u64) -> Result<LqrProblem> {
    if n_s != n_a {
        return Err(Error::InvalidArgument(format!(
            "B = I requires n_s == n_a, got {n_s} and {n_a}"
        )));
    }
    let a = numlin::sample_orthogonal(n_s, crate::rng::derive_seed(seed, "lqr/A", 0))?;
    let wc = numlin::sample_orthogonal(n_s, crate::rng::derive_seed(seed, "lqr/Wc", 0))?;
    Ok(LqrProblem {
        a,
        b: Mat::identity(n_s, n_a),
        q: Mat::identity(n_s, n_s),
        r: Mat::identity(n_a, n_a),
        wc,
        n_s,
        n_a,
    })
}

pub fn make_domain(problem: &LqrProblem, n_y: usize, seed: u64) -> Result<LqrDomain> {
    if n_y < problem.n_s {
        return Err(Error::InvalidArgument(format!(
            "distractor dimension {n_y} is below the state dimension {}",
            problem.n_s
        )));
    }
    let wd = numlin::sample_semi_orthogonal(n_y, problem.n_s, crate::rng::derive_seed(seed, "lqr/Wd", 0))?;
    Ok(LqrDomain {
        id: format!("wd-{seed}"),
        wd,
    })
}

/// `K0 = [-0.5 A Wcᵀ | 0]`, which gives `Acl = 0.5 A` on every domain when `B = I`.
pub fn init_stabilizing(problem: &LqrProblem, n_y: usize) -> Mat {
    let mut k = Mat::zeros(problem.n_a, problem.n_s + n_y);
    let kc = &problem.a * problem.wc.transpose() * -0.5;
    k.columns_mut(0, problem.n_s).copy_from(&kc);
    k
}

fn check_gain_shape(problem: &LqrProblem, domain: &LqrDomain, k: &Mat) -> Result<()> {
    let cols = problem.n_s + domain.n_y();
    if k.nrows() != problem.n_a || k.ncols() != cols {
        return Err(Error::Shape(format!(
            "gain must be {}x{cols}, got {}x{}",
            problem.n_a,
            k.nrows(),
            k.ncols()
        )));
    }
    if domain.wd.ncols() != problem.n_s {
        return Err(Error::Shape("distractor map has the wrong state dimension".into()));
    }
    Ok(())
}

/// `F = Kc Wc + Kd Wd`.
pub fn feedback(problem: &LqrProblem, domain: &LqrDomain, k: &Mat) -> Mat {
    let n_s = problem.n_s;
    let mut f = k.columns(0, n_s) * &problem.wc;
    if domain.n_y() > 0 {
        f.gemm(1.0, &k.columns(n_s, domain.n_y()), &domain.wd, 1.0);
    }
    f
}

/// Maps a gradient with respect to `F` back to the observation gain: `G_F Wᵀ`.
pub fn lift_gradient(problem: &LqrProblem, domain: &LqrDomain, grad_f: &Mat) -> Mat {
    let n_s = problem.n_s;
    let mut g = Mat::zeros(grad_f.nrows(), n_s + domain.n_y());
    g.columns_mut(0, n_s)
        .copy_from(&(grad_f * problem.wc.transpose()));
    if domain.n_y() > 0 {
        g.columns_mut(n_s, domain.n_y())
            .copy_from(&(grad_f * domain.wd.transpose()));
    }
    g
}

/// Closed-loop quantities for one state-feedback matrix.
#[derive(Debug, Clone)]
pub struct FeedbackEval {
    pub f: Mat,
    pub acl: Mat,
    pub p: Mat,
    pub cost: f64,
    pub radius: f64,
}

pub fn eval_feedback(problem: &LqrProblem, f: Mat) -> Result<FeedbackEval> {
    let acl = &problem.a + &problem.b * &f;
    let radius = numlin::spectral_radius(&acl)?;
    if radius >= 1.0 - numlin::TOLERANCES.stability_margin {
        return Err(Error::Unstable { radius });
    }
    let qeff = &problem.q + f.transpose() * &problem.r * &f;
    let p = numlin::lyapunov_doubling(&acl, &qeff, radius)?;
    let cost = p.trace();
    Ok(FeedbackEval {
        f,
        acl,
        p,
        cost,
        radius,
    })
}

/// `∇_F cost = 2 (R F + Bᵀ P Acl) Σ` with `Σ = I + Acl Σ Aclᵀ`.
pub fn feedback_gradient(problem: &LqrProblem, ev: &FeedbackEval) -> Result<Mat> {
    let n = problem.n_s;
    let acl_t = ev.acl.transpose();
    let sigma = numlin::lyapunov_doubling(&acl_t, &Mat::identity(n, n), ev.radius)?;
    let inner = &problem.r * &ev.f + problem.b.transpose() * &ev.p * &ev.acl;
    Ok(inner * sigma * 2.0)
}

/// Expected infinite-horizon cost of `a = K o` on `domain` with `s0 ~ N(0, I)`.
pub fn cost(problem: &LqrProblem, domain: &LqrDomain, k: &Mat) -> Result<f64> {
    check_gain_shape(problem, domain, k)?;
    Ok(eval_feedback(problem, feedback(problem, domain, k))?.cost)
}

/// Analytic gradient of [`cost`] with respect to `K`.
pub fn cost_gradient(problem: &LqrProblem, domain: &LqrDomain, k: &Mat) -> Result<Mat> {
    check_gain_shape(problem, domain, k)?;
    let ev = eval_feedback(problem, feedback(problem, domain, k))?;
    let gf = feedback_gradient(problem, &ev)?;
    Ok(lift_gradient(problem, domain, &gf))
}

/// Full-state optimal cost `trace(P)` from the DARE.
pub fn oracle_cost(problem: &LqrProblem) -> Result<f64> {
    let (p, _) = numlin::solve_dare(&problem.a, &problem.b, &problem.q, &problem.r)?;
    Ok(p.trace())
}

/// Full-state optimal gain `Kstar` (acts on `s`).
pub fn oracle_gain(problem: &LqrProblem) -> Result<Mat> {
    let (_, k) = numlin::solve_dare(&problem.a, &problem.b, &problem.q, &problem.r)?;
    Ok(k)
}

/// Cost of a policy on a held-out domain; `+inf` if it destabilizes it.
pub fn evaluate_transfer<P: LqrPolicy + ?Sized>(
    policy: &P,
    problem: &LqrProblem,
    test_domain: &LqrDomain,
) -> Result<f64> {
    match cost(problem, test_domain, &policy.effective_gain()) {
        Ok(c) => Ok(c),
        Err(Error::Unstable { .. }) | Err(Error::NonConvergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Frobenius norm of the distractor block `K[:, n_s..]`.
pub fn distractor_norm(problem: &LqrProblem, k: &Mat) -> f64 {
    k.columns(problem.n_s, k.ncols() - problem.n_s).norm()
}
