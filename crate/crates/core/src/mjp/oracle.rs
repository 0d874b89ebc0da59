//! Exact likelihoods for small test models, used to check the particle
//! filter and the LNA recursion.

use super::network::ImmigrationDeath;
use super::pf::StateSpaceModel;
use crate::error::Result;
use crate::rng::substream;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

/// Discrete-state HMM with a tabulated observation log-density per time and
/// state. Its likelihood is a forward sum.
#[derive(Debug, Clone)]
pub struct FiniteHmm {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub log_obs: Vec<Vec<f64>>,
}

impl FiniteHmm {
    /// Three states, two observations.
    pub fn example() -> Self {
        Self {
            initial: vec![0.5, 0.3, 0.2],
            transition: vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.25, 0.25, 0.5]],
            log_obs: vec![
                vec![0.9f64.ln(), 0.3f64.ln(), 0.05f64.ln()],
                vec![0.1f64.ln(), 0.6f64.ln(), 0.8f64.ln()],
            ],
        }
    }

    /// Forward algorithm.
    pub fn log_likelihood(&self) -> f64 {
        let k = self.initial.len();
        let mut alpha: Vec<f64> = (0..k).map(|i| self.initial[i] * self.log_obs[0][i].exp()).collect();
        for obs in &self.log_obs[1..] {
            alpha = (0..k)
                .map(|j| (0..k).map(|i| alpha[i] * self.transition[i][j]).sum::<f64>() * obs[j].exp())
                .collect();
        }
        alpha.iter().sum::<f64>().ln()
    }

    fn draw(probs: &[f64], rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

impl StateSpaceModel for FiniteHmm {
    type State = usize;
    fn n_obs(&self) -> usize {
        self.log_obs.len()
    }
    fn initial(&self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(Self::draw(&self.initial, rng))
    }
    fn propagate(&self, _t: usize, state: &mut usize, rng: &mut dyn RngCore) -> Result<()> {
        *state = Self::draw(&self.transition[*state], rng);
        Ok(())
    }
    fn log_obs(&self, t: usize, state: &usize) -> f64 {
        self.log_obs[t][*state]
    }
}

/// Scalar AR(1) state observed in Gaussian noise:
/// `x₀ ~ N(0, p0)`, `x_t = φ x_{t−1} + N(0, q)`, `y_t = x_t + N(0, r)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianSsm {
    pub phi: f64,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
    pub ys: Vec<f64>,
}

fn gauss(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

impl LinearGaussianSsm {
    /// `n` observations simulated from a fixed seed with φ = 0.8, q = 0.5,
    /// r = 1, p0 = 1.
    pub fn example(n: usize) -> Self {
        let (phi, q, r, p0): (f64, f64, f64, f64) = (0.8, 0.5, 1.0, 1.0);
        let mut rng = substream(0x5eed, 0);
        let mut x = p0.sqrt() * gauss(&mut rng);
        let mut ys = Vec::with_capacity(n);
        for t in 0..n {
            if t > 0 {
                x = phi * x + q.sqrt() * gauss(&mut rng);
            }
            ys.push(x + r.sqrt() * gauss(&mut rng));
        }
        Self { phi, q, r, p0, ys }
    }

    /// Exact log-likelihood by the Kalman filter.
    pub fn kalman_loglik(&self) -> f64 {
        let (mut mean, mut var) = (0.0, self.p0);
        let mut ll = 0.0;
        for (t, &y) in self.ys.iter().enumerate() {
            if t > 0 {
                mean *= self.phi;
                var = self.phi * self.phi * var + self.q;
            }
            let f = var + self.r;
            ll += log_normal_pdf(y, mean, f);
            let k = var / f;
            mean += k * (y - mean);
            var *= 1.0 - k;
        }
        ll
    }
}

impl StateSpaceModel for LinearGaussianSsm {
    type State = f64;
    fn n_obs(&self) -> usize {
        self.ys.len()
    }
    fn initial(&self, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.p0.sqrt() * gauss(rng))
    }
    fn propagate(&self, _t: usize, state: &mut f64, rng: &mut dyn RngCore) -> Result<()> {
        *state = self.phi * *state + self.q.sqrt() * gauss(rng);
        Ok(())
    }
    fn log_obs(&self, t: usize, state: &f64) -> f64 {
        log_normal_pdf(self.ys[t], *state, self.r)
    }
}

/// Kalman filter for the immigration–death system using the closed-form
/// mean and variance between observations. The first observation is of the
/// known state `u0`.
pub fn immigration_death_kalman(net: &ImmigrationDeath, u0: f64, ys: &[f64], obs_var: f64) -> f64 {
    let mut ll = log_normal_pdf(ys[0], u0, obs_var);
    let (mut a, mut c) = (u0, 0.0);
    for &y in &ys[1..] {
        let (z, v) = net.moments(a, c, 1.0);
        let f = v + obs_var;
        ll += log_normal_pdf(y, z, f);
        a = z + v / f * (y - z);
        c = v - v * v / f;
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::lna::lna_marginal_loglik;

    #[test]
    fn forward_sum_matches_brute_force() {
        let hmm = FiniteHmm::example();
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                total += hmm.initial[i] * hmm.transition[i][j] * (hmm.log_obs[0][i] + hmm.log_obs[1][j]).exp();
            }
        }
        assert!((hmm.log_likelihood() - total.ln()).abs() < 1e-14);
    }

    #[test]
    fn kalman_single_observation() {
        let ssm = LinearGaussianSsm { phi: 0.8, q: 0.5, r: 1.0, p0: 1.0, ys: vec![0.7] };
        assert!((ssm.kalman_loglik() - log_normal_pdf(0.7, 0.0, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn lna_recursion_matches_closed_form_kalman() {
        let net = ImmigrationDeath { c1: 20.0, c2: 0.5 };
        let ys = [12.0, 25.0, 31.0, 44.0, 38.0, 41.0, 35.0, 39.0];
        let exact = immigration_death_kalman(&net, 10.0, &ys, 4.0);
        let ys2: Vec<[f64; 1]> = ys.iter().map(|&y| [y]).collect();
        let lna = lna_marginal_loglik(&net, [10.0], &ys2, [4.0], 0.02).unwrap();
        assert!((lna - exact).abs() < 1e-6, "{lna} vs {exact}");
    }
}
