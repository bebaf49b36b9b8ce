use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::ActorCriticNet;
use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::rng::Rng;

/// Distribution over discrete actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDist {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl CategoricalDist {
    /// Softmax of `scores`, computed after subtracting the maximum.
    pub fn from_scores(scores: &[f64]) -> Self {
        assert!(!scores.is_empty(), "no scores");
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = scores.iter().map(|s| s - log_z).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { probs, log_probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 })
            .sum::<f64>()
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn mode(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > self.probs[best] { i } else { best })
    }

    /// `∂ log p(action) / ∂ scores`.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }

    /// `∂ entropy / ∂ scores`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| -p * (l + h))
            .collect()
    }
}

/// Elementwise mean of score vectors, accumulated in order.
pub fn mean_scores(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = scores
        .first()
        .ok_or_else(|| Error::InvalidArgument("no score vectors to average".into()))?;
    let mut acc = first.clone();
    for s in &scores[1..] {
        if s.len() != acc.len() {
            return Err(Error::Shape(format!(
                "score vectors of length {} and {}",
                acc.len(),
                s.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v;
        }
    }
    let inv = 1.0 / scores.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Softmax of the mean of the nets' score vectors.
pub fn average_scores(ensemble: &[ActorCriticNet], obs: &Observation) -> Result<CategoricalDist> {
    let scores: Vec<Vec<f64>> = ensemble.iter().map(|n| n.forward(obs).0).collect();
    Ok(CategoricalDist::from_scores(&mean_scores(&scores)?))
}

/// Diagonal Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDist {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("standard deviations must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn log_prob(&self, x: &[f64]) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| {
                let z = (x - m) / s;
                -0.5 * z * z - s.ln() - half_ln_2pi
            })
            .sum()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect()
    }
}

/// Mean of the means and mean of the standard deviations (not the variances).
pub fn average_gaussian(dists: &[GaussianDist]) -> Result<GaussianDist> {
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidArgument("no distributions to average".into()))?;
    let dim = first.mean.len();
    if let Some(d) = dists.iter().find(|d| d.mean.len() != dim) {
        return Err(Error::Shape(format!(
            "cannot average dimension {} with {dim}",
            d.mean.len()
        )));
    }
    let means: Vec<Vec<f64>> = dists.iter().map(|d| d.mean.clone()).collect();
    let stds: Vec<Vec<f64>> = dists.iter().map(|d| d.std.clone()).collect();
    GaussianDist::new(mean_scores(&means)?, mean_scores(&stds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn symmetric_scores_give_equal_probabilities() {
        let avg = mean_scores(&[
            vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let d = CategoricalDist::from_scores(&avg);
        assert!((d.probs()[0] - d.probs()[1]).abs() < 1e-15);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_score_vector_is_plain_softmax() {
        let s = vec![0.3, -1.2, 2.0];
        let avg = mean_scores(&[s.clone()]).unwrap();
        assert_eq!(CategoricalDist::from_scores(&avg), CategoricalDist::from_scores(&s));
    }

    #[test]
    fn uniform_scores_have_maximal_entropy() {
        let d = CategoricalDist::from_scores(&[0.0; 7]);
        assert!((d.entropy() - 7f64.ln()).abs() < 1e-12);
        assert!(d.probs().iter().all(|p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn sampling_matches_probabilities() {
        let d = CategoricalDist::from_scores(&[0.0, 1.0, 2.0]);
        let mut rng = rng_from_seed(4);
        let mut counts = [0usize; 3];
        for _ in 0..20000 {
            counts[d.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(d.probs()) {
            assert!((*c as f64 / 20000.0 - p).abs() < 0.015);
        }
        assert_eq!(d.mode(), 2);
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let s = vec![0.4, -0.3, 1.1, 0.0];
        let d = CategoricalDist::from_scores(&s);
        let (gl, ge) = (d.grad_log_prob(2), d.grad_entropy());
        for i in 0..s.len() {
            let mut up = s.clone();
            let mut dn = s.clone();
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let (u, v) = (CategoricalDist::from_scores(&up), CategoricalDist::from_scores(&dn));
            assert!(((u.log_prob(2) - v.log_prob(2)) / 2e-6 - gl[i]).abs() < 1e-8);
            assert!(((u.entropy() - v.entropy()) / 2e-6 - ge[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_averaging_is_arithmetic() {
        let a = GaussianDist::new(vec![1.0], vec![0.2]).unwrap();
        let b = GaussianDist::new(vec![3.0], vec![0.4]).unwrap();
        let avg = average_gaussian(&[a.clone(), b]).unwrap();
        assert_eq!(avg.mean(), &[2.0]);
        assert!((avg.std()[0] - 0.3).abs() < 1e-15);
        assert_eq!(average_gaussian(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn gaussian_rejects_bad_input() {
        assert!(GaussianDist::new(vec![0.0], vec![0.0]).is_err());
        assert!(GaussianDist::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let a = GaussianDist::new(vec![0.0], vec![1.0]).unwrap();
        let b = GaussianDist::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(average_gaussian(&[a, b]), Err(Error::Shape(_))));
        assert!(average_gaussian(&[]).is_err());
    }

    #[test]
    fn gaussian_log_prob_at_mean() {
        let g = GaussianDist::new(vec![0.5, -1.0], vec![1.0, 2.0]).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln() - 2f64.ln();
        assert!((g.log_prob(&[0.5, -1.0]) - want).abs() < 1e-12);
        let mut rng = rng_from_seed(1);
        assert_eq!(g.sample(&mut rng).len(), 2);
    }
}
