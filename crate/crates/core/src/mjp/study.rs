//! Lotka–Volterra tuning study: LNA pilot run, log-likelihood noise
//! estimates, and delayed-acceptance / pseudo-marginal runs over a grid of
//! proposal scalings and particle counts.

use super::lv::{LnaPosterior, LvParams, LvPrior, ObservationSeries, PfLikelihood};
use crate::diagnostics::{acceptance_summary, ess_per_coordinate, harmonic_mean, minimum};
use crate::error::{Error, Result};
use crate::kernels::{run_chain, ChainConfig, CostModel, Kernel, LikelihoodEstimator, LogDensity, Proposal, ProposalSpec};
use crate::parallel::parallel_map;
use crate::rng::{child_seed, substream};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Scale factor in `V_prop = γ² (2.56² / d) Var(X)`.
pub const PM_SCALE: f64 = 2.56;

/// Sample variance of `n_reps` log-estimates at each point.
pub fn estimate_sigma2(estimator: &dyn LikelihoodEstimator, points: &[Vec<f64>], n_reps: usize, seed: u64) -> Result<Vec<f64>> {
    if n_reps < 10 {
        return Err(Error::Domain(format!("need at least 10 replicates, got {n_reps}")));
    }
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = substream(child_seed(seed, i as u64), 1);
            let v: Vec<f64> = (0..n_reps).map(|_| estimator.estimate_log(x, &mut rng)).collect();
            if v.iter().any(|e| !e.is_finite()) {
                return Ok(f64::INFINITY);
            }
            let shifted: Vec<f64> = v.iter().map(|e| e - v[0]).collect();
            let mean = shifted.iter().sum::<f64>() / n_reps as f64;
            Ok(shifted.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n_reps - 1) as f64)
        })
        .collect()
}

/// Seconds per LNA evaluation and per particle per filter run, used to
/// turn evaluation counts into a machine-independent cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvCosts {
    pub lna_seconds: f64,
    pub particle_seconds: f64,
}

impl Default for LvCosts {
    fn default() -> Self {
        Self { lna_seconds: 2.8e-4, particle_seconds: 5.0e-4 }
    }
}

impl LvCosts {
    /// Times both evaluations at `x` on this machine.
    pub fn calibrate(series: &ObservationSeries, x: &[f64], seed: u64) -> Self {
        let lna = LnaPosterior::new(series);
        let reps = 50;
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(lna.log_density(x));
        }
        let lna_seconds = t.elapsed().as_secs_f64() / reps as f64;
        let m = 100;
        let pf = PfLikelihood { series, m };
        let mut rng = substream(seed, 1);
        let t = Instant::now();
        for _ in 0..5 {
            std::hint::black_box(pf.estimate_log(x, &mut rng));
        }
        let particle_seconds = t.elapsed().as_secs_f64() / (5 * m) as f64;
        Self { lna_seconds, particle_seconds }
    }

    pub fn cost_model(&self, m: usize) -> CostModel {
        CostModel { surrogate: self.lna_seconds, expensive: self.particle_seconds * m as f64 }
    }
}

/// Posterior summaries from an RWM run on the LNA posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LvPilot {
    pub median: Vec<f64>,
    /// Row-major 5×5 covariance.
    pub covariance: Vec<f64>,
    /// Further representative draws, spread evenly through the run.
    pub draws: Vec<Vec<f64>>,
    pub acceptance: f64,
}

impl LvPilot {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(5, 5, &self.covariance)
    }

    /// `γ² (2.56² / 5) Var(X)`.
    pub fn proposal(&self, gamma: f64) -> Result<ProposalSpec> {
        ProposalSpec::from_covariance(self.covariance_matrix() * (gamma * gamma * PM_SCALE * PM_SCALE / 5.0))
    }

    /// The median followed by the extra draws.
    pub fn points(&self) -> Vec<Vec<f64>> {
        std::iter::once(self.median.clone()).chain(self.draws.iter().cloned()).collect()
    }
}

fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    cov
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// RWM on the LNA posterior from `x0`: scale adaptation in short rounds,
/// a covariance-learning run, then `n_iter` recorded iterations with the
/// learned covariance.
pub fn lna_pilot(series: &ObservationSeries, x0: &[f64], n_iter: usize, n_extra: usize, seed: u64) -> Result<LvPilot> {
    if n_iter < 10 * (n_extra + 1) {
        return Err(Error::Domain(format!("pilot of {n_iter} iterations is too short")));
    }
    let lna = LnaPosterior::new(series);
    let kernel = Kernel::Rwm { target: &lna };
    let mut x = x0.to_vec();
    let mut log_scale = (0.05f64).ln();
    for round in 0..20u64 {
        let prop = ProposalSpec::isotropic(log_scale.exp())?;
        let t = run_chain(&kernel, &prop, &x, &ChainConfig::new(500, child_seed(seed, round)))?;
        x = t.final_state.x.clone();
        log_scale += 1.5 * (t.counters.alpha12() - 0.25);
    }
    let prop = ProposalSpec::isotropic(log_scale.exp())?;
    let learn = run_chain(&kernel, &prop, &x, &ChainConfig::new(n_iter / 2, child_seed(seed, 100)))?;
    let learned: Vec<Vec<f64>> = (0..learn.len()).map(|i| learn.sample(i).to_vec()).collect();
    let cov = sample_covariance(&learned) * (2.38 * 2.38 / 5.0);
    let prop = ProposalSpec::from_covariance(cov)?;
    let main = run_chain(&kernel, &prop, &learn.final_state.x, &ChainConfig::new(n_iter, child_seed(seed, 101)))?;
    let samples: Vec<Vec<f64>> = (1..main.len()).map(|i| main.sample(i).to_vec()).collect();
    let med: Vec<f64> = (0..5).map(|j| median(samples.iter().map(|s| s[j]).collect())).collect();
    let cov = sample_covariance(&samples);
    let draws = (1..=n_extra).map(|k| samples[k * samples.len() / (n_extra + 1)].clone()).collect();
    Ok(LvPilot {
        median: med,
        covariance: cov.transpose().as_slice().to_vec(),
        draws,
        acceptance: main.counters.alpha12(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LvAlgorithm {
    /// Delayed-acceptance pseudo-marginal RWM with the LNA screen.
    Dapm,
    /// Pseudo-marginal RWM.
    Pm,
}

/// Result of one run at scaling `gamma` with `m` particles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LvCell {
    pub algorithm: LvAlgorithm,
    pub gamma: f64,
    pub m: usize,
    pub n_iter: usize,
    pub ess_min: f64,
    pub ess_harmonic: f64,
    pub modeled_seconds: f64,
    pub wall_seconds: f64,
    /// Minimum ESS per modeled second.
    pub mess_per_s: f64,
    pub alpha1: f64,
    pub alpha2given1: Option<f64>,
    pub alpha12: f64,
}

impl LvCell {
    pub fn harmonic_ess_per_s(&self) -> f64 {
        self.ess_harmonic / self.modeled_seconds
    }
}

/// Runs one chain from the pilot median.
#[allow(clippy::too_many_arguments)]
pub fn run_lv_cell(
    series: &ObservationSeries,
    pilot: &LvPilot,
    algorithm: LvAlgorithm,
    gamma: f64,
    m: usize,
    n_iter: usize,
    seed: u64,
    costs: LvCosts,
) -> Result<LvCell> {
    let lna = LnaPosterior::new(series);
    let pf = PfLikelihood { series, m };
    let prior = LvPrior;
    let kernel = match algorithm {
        LvAlgorithm::Dapm => Kernel::Dapm { prior: Some(&prior), surrogate: &lna, estimator: &pf },
        LvAlgorithm::Pm => Kernel::Pm { prior: Some(&prior), estimator: &pf },
    };
    let prop = pilot.proposal(gamma)?;
    let trace = run_chain(&kernel, &prop, &pilot.median, &ChainConfig::new(n_iter, seed))?;
    let ess: Vec<f64> = ess_per_coordinate(&trace)?.iter().map(|e| e.ess).collect();
    let modeled_seconds = trace.counters.modeled_cost(&costs.cost_model(m));
    let acc = acceptance_summary(&trace.counters);
    let ess_min = minimum(&ess);
    Ok(LvCell {
        algorithm,
        gamma,
        m,
        n_iter,
        ess_min,
        ess_harmonic: harmonic_mean(&ess),
        modeled_seconds,
        wall_seconds: trace.wall_seconds,
        mess_per_s: ess_min / modeled_seconds,
        alpha1: acc.alpha1,
        alpha2given1: acc.alpha2given1,
        alpha12: acc.alpha12,
    })
}

/// Stage-One acceptance rate at scaling `gamma`, averaged over `n` moves
/// from points drawn from the Gaussian fitted by the pilot.
pub fn stage_one_rate(series: &ObservationSeries, pilot: &LvPilot, gamma: f64, n: usize, seed: u64) -> Result<f64> {
    let lna = LnaPosterior::new(series);
    let spread = ProposalSpec::from_covariance(pilot.covariance_matrix())?;
    let step = pilot.proposal(gamma)?;
    let mut rng = substream(seed, 0);
    let (mut x, mut y) = (vec![0.0; 5], vec![0.0; 5]);
    let mut total = 0.0;
    for _ in 0..n {
        spread.propose(&pilot.median, &mut x, &mut rng);
        step.propose(&x, &mut y, &mut rng);
        let lx = lna.log_density(&x) + LvPrior.log_density(&x);
        let ly = lna.log_density(&y) + LvPrior.log_density(&y);
        total += if lx.is_finite() { crate::special::mh_accept(ly - lx) } else { 0.0 };
    }
    Ok(total / n as f64)
}

/// Iterations that fit `seconds` of modeled cost, given the Stage-One rate
/// (ignored for PM). At least 100.
pub fn iterations_for_budget(algorithm: LvAlgorithm, alpha1: f64, m: usize, seconds: f64, costs: LvCosts) -> usize {
    let pf = m as f64 * costs.particle_seconds;
    let per_iter = match algorithm {
        LvAlgorithm::Dapm => costs.lna_seconds + alpha1 * pf,
        LvAlgorithm::Pm => pf,
    };
    ((seconds / per_iter).round() as usize).max(100)
}

/// Grid study settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LvStudyConfig {
    pub gammas: Vec<f64>,
    pub ms: Vec<usize>,
    pub n_iter: usize,
    pub pilot_iter: usize,
    pub sigma2_reps: usize,
    /// When set, each cell runs for this many modeled seconds instead of
    /// `n_iter` iterations.
    #[serde(default)]
    pub budget_seconds: Option<f64>,
    pub seed: u64,
    pub jobs: usize,
    pub costs: LvCosts,
}

impl Default for LvStudyConfig {
    fn default() -> Self {
        Self {
            gammas: vec![1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5],
            ms: vec![100, 150, 200, 250, 300],
            n_iter: 50_000,
            pilot_iter: 20_000,
            sigma2_reps: 100,
            budget_seconds: None,
            seed: 1,
            jobs: 1,
            costs: LvCosts::default(),
        }
    }
}

/// One row of the study table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LvStudyRow {
    pub gamma: f64,
    pub m: usize,
    pub sigma2_at_median: f64,
    pub mess_per_s: f64,
    pub alpha1: f64,
    pub alpha2given1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LvStudyOutput {
    pub pilot: LvPilot,
    pub sigma2_at_median: Vec<(usize, f64)>,
    pub cells: Vec<LvCell>,
}

impl LvStudyOutput {
    pub fn rows(&self) -> Vec<LvStudyRow> {
        self.cells
            .iter()
            .map(|c| LvStudyRow {
                gamma: c.gamma,
                m: c.m,
                sigma2_at_median: self.sigma2_at_median.iter().find(|(m, _)| *m == c.m).map_or(f64::NAN, |p| p.1),
                mess_per_s: c.mess_per_s,
                alpha1: c.alpha1,
                alpha2given1: c.alpha2given1.unwrap_or(f64::NAN),
            })
            .collect()
    }

    /// The cell with the largest minimum ESS per modeled second.
    pub fn best(&self) -> Option<&LvCell> {
        self.cells.iter().max_by(|a, b| a.mess_per_s.total_cmp(&b.mess_per_s))
    }
}

/// The default starting point for pilots: the data-generating parameters.
pub fn reference_params() -> LvParams {
    LvParams::from_natural([1.0, 0.005, 0.6], [8.0, 8.0])
}

/// Pilot, σ² at the median for every `m`, then a DAPM run for every
/// `(γ, m)` cell.
pub fn run_lv_study(series: &ObservationSeries, cfg: &LvStudyConfig) -> Result<LvStudyOutput> {
    if cfg.gammas.is_empty() || cfg.ms.is_empty() {
        return Err(Error::Config("study needs at least one scaling and one particle count".into()));
    }
    let pilot = lna_pilot(series, &reference_params().x, cfg.pilot_iter, 4, child_seed(cfg.seed, 0))?;
    let sigma2 = parallel_map(&cfg.ms, cfg.jobs, |&m| {
        estimate_sigma2(&PfLikelihood { series, m }, &[pilot.median.clone()], cfg.sigma2_reps, child_seed(cfg.seed, 1)).map(|v| (m, v[0]))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let grid: Vec<(usize, f64, usize)> = cfg
        .gammas
        .iter()
        .flat_map(|&g| cfg.ms.iter().map(move |&m| (g, m)))
        .enumerate()
        .map(|(i, (g, m))| (i, g, m))
        .collect();
    let cells = parallel_map(&grid, cfg.jobs, |&(i, g, m)| {
        let n_iter = match cfg.budget_seconds {
            Some(b) => {
                let a1 = stage_one_rate(series, &pilot, g, 400, child_seed(cfg.seed, 500 + i as u64))?;
                iterations_for_budget(LvAlgorithm::Dapm, a1, m, b, cfg.costs)
            }
            None => cfg.n_iter,
        };
        let cell = run_lv_cell(series, &pilot, LvAlgorithm::Dapm, g, m, n_iter, child_seed(cfg.seed, 1000 + i as u64), cfg.costs);
        if let Ok(c) = &cell {
            log::info!("gamma {g} m {m}: mESS/s {:.4} alpha1 {:.4}", c.mess_per_s, c.alpha1);
        }
        cell
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(LvStudyOutput { pilot, sigma2_at_median: sigma2, cells })
}
