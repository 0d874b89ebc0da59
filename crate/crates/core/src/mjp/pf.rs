//! Bootstrap particle filter for generic state-space models.

use crate::error::{Error, Result};
use rand::{Rng, RngCore};

/// A hidden Markov model with observations at indices `0..n_obs()`.
pub trait StateSpaceModel: Sync {
    type State: Clone;
    fn n_obs(&self) -> usize;
    /// Draws the hidden state at the first observation.
    fn initial(&self, rng: &mut dyn RngCore) -> Result<Self::State>;
    /// Moves `state` from observation `t − 1` to observation `t`.
    fn propagate(&self, t: usize, state: &mut Self::State, rng: &mut dyn RngCore) -> Result<()>;
    /// Log observation density of observation `t` given the hidden state.
    fn log_obs(&self, t: usize, state: &Self::State) -> f64;
}

/// Systematic resampling with offset `u ∈ [0, 1)`. `weights` need not be
/// normalised. Writes `weights.len()` ancestor indices into `out`.
pub fn systematic_resample(weights: &[f64], u: f64, out: &mut Vec<usize>) {
    let m = weights.len();
    out.clear();
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..m {
        let point = (k as f64 + u) / m as f64 * total;
        while i + 1 < m && cum + weights[i] <= point {
            cum += weights[i];
            i += 1;
        }
        let mut pick = i;
        while weights[pick] <= 0.0 && pick > 0 {
            pick -= 1;
        }
        out.push(pick);
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log of the bootstrap filter's likelihood estimate with `m` particles.
/// Resamples systematically after every observation but the last.
///
/// A particle whose propagation fails with a simulation error gets weight
/// zero. Returns `-∞` once every weight is zero.
pub fn bootstrap_pf<M: StateSpaceModel + ?Sized>(model: &M, m: usize, rng: &mut dyn RngCore) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("particle filter needs at least one particle".into()));
    }
    let n = model.n_obs();
    let mut particles = Vec::with_capacity(m);
    for _ in 0..m {
        particles.push(model.initial(rng)?);
    }
    let mut alive = vec![true; m];
    let mut logw = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut ancestors = Vec::with_capacity(m);
    let mut total = 0.0;
    let log_m = (m as f64).ln();
    for t in 0..n {
        if t > 0 {
            for (p, a) in particles.iter_mut().zip(alive.iter_mut()) {
                match model.propagate(t, p, rng) {
                    Ok(()) => *a = true,
                    Err(Error::Simulation(msg)) => {
                        log::debug!("particle dropped: {msg}");
                        *a = false;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        for ((lw, p), &a) in logw.iter_mut().zip(&particles).zip(&alive) {
            let v = if a { model.log_obs(t, p) } else { f64::NEG_INFINITY };
            *lw = if v.is_nan() { f64::NEG_INFINITY } else { v };
        }
        let lse = log_sum_exp(&logw);
        if lse == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += lse - log_m;
        if t + 1 < n {
            for (wi, lw) in w.iter_mut().zip(&logw) {
                *wi = (lw - lse).exp();
            }
            systematic_resample(&w, rng.random::<f64>(), &mut ancestors);
            let next: Vec<M::State> = ancestors.iter().map(|&i| particles[i].clone()).collect();
            particles = next;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::oracle::{FiniteHmm, LinearGaussianSsm};
    use crate::rng::substream;

    #[test]
    fn systematic_counts_match_expectation_over_the_offset() {
        let w = [0.05, 0.4, 0.15, 0.3, 0.1];
        let m = w.len();
        let grid = 20_000;
        let mut counts = vec![0.0; m];
        let mut out = Vec::new();
        for k in 0..grid {
            systematic_resample(&w, (k as f64 + 0.5) / grid as f64, &mut out);
            assert_eq!(out.len(), m);
            for &i in &out {
                counts[i] += 1.0;
            }
        }
        for (c, wi) in counts.iter().zip(&w) {
            assert!((c / grid as f64 - m as f64 * wi).abs() < 1e-3);
        }
    }

    #[test]
    fn systematic_never_picks_zero_weight() {
        let w = [0.0, 1.0, 0.0, 0.0];
        let mut out = Vec::new();
        for u in [0.0, 0.3, 0.999_999] {
            systematic_resample(&w, u, &mut out);
            assert_eq!(out, vec![1; 4]);
        }
    }

    #[test]
    fn estimate_is_unbiased_on_enumerable_hmm() {
        let hmm = FiniteHmm::example();
        let exact = hmm.log_likelihood();
        let mut rng = substream(11, 0);
        let n = 10_000;
        let ratios: Vec<f64> = (0..n).map(|_| (bootstrap_pf(&hmm, 1, &mut rng).unwrap() - exact).exp()).collect();
        let mean = ratios.iter().sum::<f64>() / n as f64;
        let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / (n as f64).sqrt(), "mean ratio {mean}");
    }

    #[test]
    fn many_particles_approach_kalman_loglik() {
        let ssm = LinearGaussianSsm::example(12);
        let exact = ssm.kalman_loglik();
        let mut rng = substream(12, 0);
        let est = bootstrap_pf(&ssm, 20_000, &mut rng).unwrap();
        assert!((est - exact).abs() < 0.05, "{est} vs {exact}");
    }

    struct Impossible;
    impl StateSpaceModel for Impossible {
        type State = ();
        fn n_obs(&self) -> usize {
            3
        }
        fn initial(&self, _: &mut dyn RngCore) -> Result<()> {
            Ok(())
        }
        fn propagate(&self, _: usize, _: &mut (), _: &mut dyn RngCore) -> Result<()> {
            Err(Error::Simulation("runaway".into()))
        }
        fn log_obs(&self, _: usize, _: &()) -> f64 {
            0.0
        }
    }

    #[test]
    fn all_particles_lost_gives_negative_infinity() {
        let mut rng = substream(13, 0);
        assert_eq!(bootstrap_pf(&Impossible, 10, &mut rng).unwrap(), f64::NEG_INFINITY);
        assert!(bootstrap_pf(&Impossible, 0, &mut rng).is_err());
    }
}
