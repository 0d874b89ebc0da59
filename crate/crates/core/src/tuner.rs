//! Three-step tuning of a delayed-acceptance pseudo-marginal sampler:
//! choose the particle count from the log-likelihood noise at a few
//! representative points, then the proposal scaling from short runs, then
//! refine the particle count at that scaling.
//!
//! The selection rules are generic over how noise and efficiency are
//! measured; [`tune_lv`] wires them to the Lotka–Volterra study.

use crate::error::{Error, Result};
use crate::mjp::lv::{ObservationSeries, PfLikelihood};
use crate::mjp::study::{estimate_sigma2, lna_pilot, reference_params, run_lv_cell, LvAlgorithm, LvCell, LvCosts};
use crate::rng::child_seed;
use crate::theory::{optimize_mu_at, ApproxQuality};
use serde::{Deserialize, Serialize};

/// Upper end of the preferred noise band.
pub const SIGMA2_UPPER: f64 = 3.3;
/// Lowest acceptable noise.
pub const SIGMA2_LOWER: f64 = 1.0;

/// Noise measured at one candidate particle count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub m: usize,
    pub sigma2: Vec<f64>,
}

impl NoiseRow {
    pub fn range(&self) -> (f64, f64) {
        let lo = self.sigma2.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.sigma2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step1Outcome {
    pub m_star: usize,
    pub sigma2_range: (f64, f64),
    /// The preferred rule could not be met and a fallback was used.
    pub flagged: bool,
    pub rows: Vec<NoiseRow>,
}

/// Picks the smallest `m` whose largest σ² over the points is at most 3.3
/// and whose smallest is at least 1. If no candidate meets both, the
/// smallest meeting the upper bound is returned; if none meets that, the
/// largest candidate. Both fallbacks are flagged.
///
/// `sigma2_at(m)` returns the noise variance at every representative point.
pub fn step1_pick_particles<F>(candidates: &[usize], mut sigma2_at: F) -> Result<Step1Outcome>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    let mut ms = candidates.to_vec();
    ms.sort_unstable();
    ms.dedup();
    if ms.is_empty() {
        return Err(Error::Config("no candidate particle counts".into()));
    }
    let mut rows = Vec::with_capacity(ms.len());
    for &m in &ms {
        let sigma2 = sigma2_at(m)?;
        if sigma2.len() < 2 {
            return Err(Error::Config("step 1 needs at least two representative points".into()));
        }
        rows.push(NoiseRow { m, sigma2 });
    }
    let pick = |pred: &dyn Fn(&NoiseRow) -> bool| rows.iter().position(pred);
    let (idx, flagged) = if let Some(i) = pick(&|r| r.range().1 <= SIGMA2_UPPER && r.range().0 >= SIGMA2_LOWER) {
        (i, false)
    } else if let Some(i) = pick(&|r| r.range().1 <= SIGMA2_UPPER) {
        (i, true)
    } else {
        (rows.len() - 1, true)
    };
    Ok(Step1Outcome { m_star: rows[idx].m, sigma2_range: rows[idx].range(), flagged, rows })
}

/// Index of the largest value; NaN counts as `-∞` and ties go to the
/// earlier entry.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Candidate values with their measured efficiencies and the winner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scan<T> {
    pub best: T,
    pub values: Vec<(T, f64)>,
}

fn scan<T, F>(candidates: &[T], mut efficiency: F) -> Result<Scan<T>>
where
    T: Copy + PartialOrd,
    F: FnMut(T) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::Config("empty candidate list".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut values = Vec::with_capacity(sorted.len());
    for &c in &sorted {
        values.push((c, efficiency(c)?));
    }
    let effs: Vec<f64> = values.iter().map(|v| v.1).collect();
    let i = argmax(&effs).expect("non-empty");
    Ok(Scan { best: values[i].0, values })
}

/// Scaling with the largest efficiency at fixed `m*`; ties go to the
/// smaller scaling.
pub fn step2_pick_scaling<F: FnMut(f64) -> Result<f64>>(gammas: &[f64], efficiency: F) -> Result<Scan<f64>> {
    scan(gammas, efficiency)
}

/// Particle count with the largest efficiency at fixed scaling; ties go to
/// the smaller count.
pub fn step3_pick_particles<F: FnMut(usize) -> Result<f64>>(ms: &[usize], efficiency: F) -> Result<Scan<usize>> {
    scan(ms, efficiency)
}

/// Efficiency summary used to rank short runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EssMetric {
    /// Minimum ESS over coordinates per modeled second.
    #[default]
    Min,
    /// Harmonic-mean ESS per modeled second.
    Harmonic,
}

impl EssMetric {
    pub fn of(&self, cell: &LvCell) -> f64 {
        match self {
            EssMetric::Min => cell.mess_per_s,
            EssMetric::Harmonic => cell.harmonic_ess_per_s(),
        }
    }
}

impl std::str::FromStr for EssMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Self::Min),
            "harmonic" => Ok(Self::Harmonic),
            _ => Err(Error::Config(format!("unknown ESS metric {s:?} (expected min or harmonic)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    pub step1_candidates: Vec<usize>,
    pub gammas: Vec<f64>,
    pub step3_candidates: Vec<usize>,
    /// Log-likelihood replicates per point in step 1.
    pub sigma2_reps: usize,
    /// Extra representative points besides the pilot median.
    pub n_points: usize,
    pub pilot_iter: usize,
    pub short_run_len: usize,
    /// Seeded runs per candidate in steps 2 and 3, averaged.
    pub replicates: usize,
    pub metric: EssMetric,
    pub seed: u64,
    pub costs: LvCosts,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            step1_candidates: vec![100, 150, 200, 250, 300, 400, 500],
            gammas: vec![1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5],
            step3_candidates: vec![100, 150, 200, 250, 300],
            sigma2_reps: 50,
            n_points: 4,
            pilot_iter: 20_000,
            short_run_len: 50_000,
            replicates: 1,
            metric: EssMetric::Min,
            seed: 1,
            costs: LvCosts::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    pub m_star: usize,
    pub sigma2_range_observed: (f64, f64),
    pub step1_flagged: bool,
    pub gamma_hat: f64,
    pub m_hat: usize,
    pub step1: Vec<NoiseRow>,
    pub step2: Vec<LvCell>,
    pub step3: Vec<LvCell>,
}

/// Runs all three steps on the Lotka–Volterra problem.
pub fn tune_lv(series: &ObservationSeries, cfg: &TunerConfig) -> Result<TuningReport> {
    if cfg.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let pilot = lna_pilot(series, &reference_params().x, cfg.pilot_iter, cfg.n_points, child_seed(cfg.seed, 0))?;
    let points = pilot.points();
    let s1 = step1_pick_particles(&cfg.step1_candidates, |m| {
        let v = estimate_sigma2(&PfLikelihood { series, m }, &points, cfg.sigma2_reps, child_seed(cfg.seed, 1 + m as u64))?;
        log::info!("step 1: m = {m}, sigma2 = {v:?}");
        Ok(v)
    })?;

    let mut runs: Vec<LvCell> = Vec::new();
    let run = |gamma: f64, m: usize, tag: u64, runs: &mut Vec<LvCell>| -> Result<f64> {
        let mut total = 0.0;
        for r in 0..cfg.replicates as u64 {
            let seed = child_seed(child_seed(cfg.seed, tag), r);
            let cell = run_lv_cell(series, &pilot, LvAlgorithm::Dapm, gamma, m, cfg.short_run_len, seed, cfg.costs)?;
            log::info!("gamma {gamma} m {m}: mESS/s {:.4}", cell.mess_per_s);
            total += cfg.metric.of(&cell);
            runs.push(cell);
        }
        Ok(total / cfg.replicates as f64)
    };
    let s2 = step2_pick_scaling(&cfg.gammas, |g| run(g, s1.m_star, 10_000 + (g * 1000.0) as u64, &mut runs))?;
    let step2 = std::mem::take(&mut runs);
    // the step-2 run at (γ̂, m*) is reused rather than repeated
    let reuse = s2.values.iter().find(|v| v.0 == s2.best).map(|v| v.1);
    let s3 = step3_pick_particles(&cfg.step3_candidates, |m| match reuse {
        Some(e) if m == s1.m_star => Ok(e),
        _ => run(s2.best, m, 20_000 + m as u64, &mut runs),
    })?;
    Ok(TuningReport {
        m_star: s1.m_star,
        sigma2_range_observed: s1.sigma2_range,
        step1_flagged: s1.flagged,
        gamma_hat: s2.best,
        m_hat: s3.best,
        step1: s1.rows,
        step2,
        step3: runs,
    })
}

/// Optimal `μ` at each noise level, with the surrogate quality and cost
/// held fixed. Returns `(σ², μ̂)` pairs.
pub fn optimal_mu_by_sigma2(q: ApproxQuality, eta: f64, sigma2s: &[f64]) -> Result<Vec<(f64, f64)>> {
    sigma2s.iter().map(|&s2| Ok((s2, optimize_mu_at(q, eta, s2)?.point.tuning.mu))).collect()
}
