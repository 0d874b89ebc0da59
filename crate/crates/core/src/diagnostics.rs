//! Chain-output statistics: effective sample size by the initial monotone
//! sequence estimator, jumping distance, acceptance rates and relative
//! efficiency.

use crate::error::{domain, Result};
use crate::kernels::{ChainTrace, CostModel, Counters};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Effective sample size of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssResult {
    pub ess: f64,
    /// Integrated autocorrelation time, at least 1.
    pub iact: f64,
    /// Largest lag included in the sum.
    pub truncation_lag: usize,
    /// The series had zero variance; `ess` is then the series length.
    pub degenerate: bool,
}

/// Lags computed directly before switching to the FFT route.
const DIRECT_LAG_LIMIT: usize = 512;

/// Biased autocovariances `γ_0 … γ_max_lag` by direct summation.
pub fn autocovariance_direct(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag.min(n - 1))
        .map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Biased autocovariances at every lag via a zero-padded FFT.
pub fn autocovariance_fft(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|v| v.re / (size as f64 * n as f64)).collect()
}

fn geyer_from_autocov(n: usize, acov: &[f64]) -> Option<EssResult> {
    let g0 = acov[0];
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    let max_pairs = (n / 2) / 2;
    loop {
        if k >= max_pairs {
            break;
        }
        if 2 * k + 1 >= acov.len() {
            return None;
        }
        let pair = acov[2 * k] + acov[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let iact = (-1.0 + 2.0 * sum / g0).max(1.0);
    Some(EssResult {
        ess: n as f64 / iact,
        iact,
        truncation_lag: (2 * k).saturating_sub(1),
        degenerate: false,
    })
}

/// Effective sample size by Geyer's initial monotone sequence: pairs
/// `Γ_k = γ_{2k} + γ_{2k+1}` are summed up to the first non-positive pair,
/// after replacing each by the running minimum.
pub fn ess_geyer(series: &[f64]) -> Result<EssResult> {
    let n = series.len();
    if n < 10 {
        return Err(domain(format!("ESS needs at least 10 values, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(domain("ESS series contains non-finite values"));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Ok(EssResult { ess: n as f64, iact: 1.0, truncation_lag: 0, degenerate: true });
    }
    let direct = autocovariance_direct(series, DIRECT_LAG_LIMIT.min(n - 1));
    if direct[0] == 0.0 {
        return Ok(EssResult { ess: n as f64, iact: 1.0, truncation_lag: 0, degenerate: true });
    }
    if let Some(r) = geyer_from_autocov(n, &direct) {
        return Ok(r);
    }
    let full = autocovariance_fft(series);
    Ok(geyer_from_autocov(n, &full).expect("all lags available"))
}

/// Per-coordinate ESS of the recorded samples.
pub fn ess_per_coordinate(trace: &ChainTrace) -> Result<Vec<EssResult>> {
    (0..trace.dim).map(|j| ess_geyer(&trace.coordinate(j))).collect()
}

pub fn harmonic_mean(values: &[f64]) -> f64 {
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

pub fn minimum(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Mean squared jump per iteration.
pub fn esjd(trace: &ChainTrace) -> f64 {
    trace.counters.esjd()
}

/// Acceptance rates from run counters. Single-stage kernels have no
/// conditional Stage Two rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub alpha1: f64,
    pub alpha2given1: Option<f64>,
    pub alpha12: f64,
}

pub fn acceptance_summary(c: &Counters) -> AcceptanceSummary {
    let alpha1 = c.alpha1();
    if c.stage2_attempts > 0 || c.surrogate_evals > 0 {
        let a21 = if c.stage2_attempts > 0 { c.alpha2given1() } else { 0.0 };
        AcceptanceSummary { alpha1, alpha2given1: Some(a21), alpha12: alpha1 * a21 }
    } else {
        AcceptanceSummary { alpha1, alpha2given1: None, alpha12: alpha1 }
    }
}

/// `(ess_a / cost_a) / (ess_b / cost_b)`.
pub fn relative_efficiency(ess_a: f64, cost_a: f64, ess_b: f64, cost_b: f64) -> f64 {
    (ess_a / cost_a) / (ess_b / cost_b)
}

/// Scalar report for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub ess_harmonic: f64,
    pub ess_min: f64,
    pub esjd: f64,
    pub alpha1: f64,
    pub alpha2given1: Option<f64>,
    pub cost_model: CostModel,
    pub modeled_cost: f64,
    pub wall_seconds: f64,
}

pub fn summarize(trace: &ChainTrace, costs: CostModel) -> Result<RunSummary> {
    let ess: Vec<f64> = ess_per_coordinate(trace)?.iter().map(|e| e.ess).collect();
    let acc = acceptance_summary(&trace.counters);
    Ok(RunSummary {
        ess_harmonic: harmonic_mean(&ess),
        ess_min: minimum(&ess),
        esjd: esjd(trace),
        alpha1: acc.alpha1,
        alpha2given1: acc.alpha2given1,
        cost_model: costs,
        modeled_cost: trace.counters.modeled_cost(&costs),
        wall_seconds: trace.wall_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        let mut x = 0.0;
        let scale = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + scale * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn iid_series_has_full_ess() {
        let r = ess_geyer(&ar1(0.0, 100_000, 1)).unwrap();
        assert!((0.95..=1.05).contains(&(r.ess / 1e5)), "{r:?}");
    }

    #[test]
    fn ar1_matches_analytic_iact() {
        let r = ess_geyer(&ar1(0.5, 1_000_000, 2)).unwrap();
        let ratio = r.ess / 1e6;
        assert!((ratio - 1.0 / 3.0).abs() < 0.05 / 3.0, "{ratio}");
    }

    #[test]
    fn constant_series_is_flagged() {
        let r = ess_geyer(&[2.0; 50]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.ess, 50.0);
        assert!(ess_geyer(&[1.0; 5]).is_err());
        assert!(ess_geyer(&[1.0, f64::NAN, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn fft_and_direct_autocovariances_agree() {
        let x = ar1(0.9, 5000, 3);
        let a = autocovariance_direct(&x, 4999);
        let b = autocovariance_fft(&x);
        let worst = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn highly_correlated_series_uses_long_lags() {
        let x = ar1(0.995, 200_000, 4);
        let r = ess_geyer(&x).unwrap();
        let expect = 2e5 * 0.005 / 1.995;
        assert!(r.truncation_lag > DIRECT_LAG_LIMIT);
        assert!((r.ess / expect - 1.0).abs() < 0.3, "{} vs {expect}", r.ess);
    }

    #[test]
    fn relative_efficiency_of_identical_runs() {
        assert_eq!(relative_efficiency(10.0, 3.0, 10.0, 3.0), 1.0);
    }

    #[test]
    fn harmonic_mean_is_below_arithmetic_mean() {
        let v = [1.0, 4.0, 9.0];
        assert!(harmonic_mean(&v) <= v.iter().sum::<f64>() / 3.0);
        assert_eq!(minimum(&v), 1.0);
    }

    #[test]
    fn acceptance_summary_reconciles() {
        let c = Counters {
            iterations: 100,
            accepted: 12,
            stage1_attempts: 100,
            stage1_accepts: 30,
            stage2_attempts: 30,
            stage2_accepts: 12,
            expensive_evals: 30,
            surrogate_evals: 100,
            sum_squared_jump: 0.0,
        };
        let s = acceptance_summary(&c);
        assert!((s.alpha12 - 0.12).abs() < 1e-15);
        assert_eq!(s.alpha2given1, Some(0.4));
    }

    proptest! {
        #[test]
        fn ess_is_affine_invariant(seed in 0u64..1000, a in -5.0f64..5.0, b in 0.1f64..10.0) {
            let x = ar1(0.6, 2000, seed);
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let ex = ess_geyer(&x).unwrap();
            let ey = ess_geyer(&y).unwrap();
            prop_assert!((ex.ess - ey.ess).abs() < 1e-6 * ex.ess);
        }
    }
}
