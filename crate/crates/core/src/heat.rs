//! Bayesian recovery of an initial temperature field on `[0, 1]` from noisy
//! point observations at time `τ`, with an exact spectral forward map and a
//! coarse backward-Euler finite-difference surrogate.
//!
//! The field is `T(x, 0) = Σ_k c_k sin(kπx)` with prior `c_k ~ N(0, κ_k)`,
//! and evolves by `∂_t T = ½ ∂_xx T` with zero boundary values.

use crate::error::{config, domain, Result};
use crate::kernels::{run_chain, ChainConfig, Kernel, LogDensity, ProposalSpec};
use crate::rng::substream;
use crate::special::std_normal_quantile;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Finite-difference resolution: `n_x` equispaced nodes including both
/// boundaries, `n_t` implicit time steps up to `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdGrid {
    pub n_x: usize,
    pub n_t: usize,
}

impl Default for FdGrid {
    fn default() -> Self {
        Self { n_x: 50, n_t: 10 }
    }
}

impl FdGrid {
    pub fn new(n_x: usize, n_t: usize) -> Result<Self> {
        if n_x < 3 || n_t < 1 {
            return Err(config(format!("grid needs n_x >= 3 and n_t >= 1, got ({n_x}, {n_t})")));
        }
        Ok(Self { n_x, n_t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Forward {
    Exact,
    Fd,
}

/// Settings for a synthetic dataset. The default noise level keeps the
/// likelihood weak relative to the prior in most modes, which is the regime
/// where (Q, S) is close to bivariate Gaussian at K = 40.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatConfig {
    pub k_modes: usize,
    pub tau: f64,
    pub sigma2_noise: f64,
    pub n_obs: usize,
    pub grid: FdGrid,
    pub seed: u64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self { k_modes: 40, tau: 0.02, sigma2_noise: 2.0, n_obs: 30, grid: FdGrid::default(), seed: 2024 }
    }
}

/// Observation design, data and both forward maps (as `N × K` matrices,
/// since both maps are linear in the coefficients).
#[derive(Debug, Clone)]
pub struct HeatProblem {
    pub kappa: Vec<f64>,
    pub tau: f64,
    pub sigma2_noise: f64,
    pub locations: Vec<f64>,
    pub data: Vec<f64>,
    pub grid: FdGrid,
    exact_map: DMatrix<f64>,
    fd_map: DMatrix<f64>,
}

/// `Σ c_k e^{−(kπ)²τ/2} sin(kπx)`.
pub fn exact_forward(c: &[f64], x: f64, tau: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(i, ck)| {
            let kpi = (i + 1) as f64 * PI;
            ck * (-kpi * kpi * tau / 2.0).exp() * (kpi * x).sin()
        })
        .sum()
}

/// Solves a tridiagonal system in place: `sub[i] x[i-1] + diag[i] x[i] +
/// sup[i] x[i+1] = rhs[i]`.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i];
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i + 1] * next;
    }
}

/// Backward-Euler temperatures at `locations` after time `tau`, with linear
/// interpolation between nodes.
pub fn fd_forward(c: &[f64], locations: &[f64], tau: f64, grid: FdGrid) -> Vec<f64> {
    let nx = grid.n_x;
    let dx = 1.0 / (nx - 1) as f64;
    let dt = tau / grid.n_t as f64;
    let r = dt / (2.0 * dx * dx);
    let m = nx - 2;
    let mut u: Vec<f64> = (1..=m).map(|i| exact_forward(c, i as f64 * dx, 0.0)).collect();
    let sub = vec![-r; m];
    let diag = vec![1.0 + 2.0 * r; m];
    let sup = vec![-r; m];
    for _ in 0..grid.n_t {
        thomas_solve(&sub, &diag, &sup, &mut u);
    }
    let node = |i: usize| if i == 0 || i == nx - 1 { 0.0 } else { u[i - 1] };
    locations
        .iter()
        .map(|&x| {
            let pos = (x / dx).clamp(0.0, (nx - 1) as f64);
            let i = (pos.floor() as usize).min(nx - 2);
            let w = pos - i as f64;
            (1.0 - w) * node(i) + w * node(i + 1)
        })
        .collect()
}

fn map_matrix(k: usize, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, k);
    let mut e = vec![0.0; k];
    for j in 0..k {
        e[j] = 1.0;
        let col = f(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

impl HeatProblem {
    /// Builds the problem for given data, with `κ_k = 1/k`.
    pub fn new(k_modes: usize, tau: f64, sigma2_noise: f64, locations: Vec<f64>, data: Vec<f64>, grid: FdGrid) -> Result<Self> {
        if k_modes == 0 || !(tau > 0.0) || !(sigma2_noise > 0.0) {
            return Err(config("heat problem needs K >= 1, tau > 0 and sigma2_noise > 0"));
        }
        if locations.len() != data.len() || locations.is_empty() {
            return Err(config("need one datum per observation location"));
        }
        if locations.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(domain("observation locations must lie strictly inside (0, 1)"));
        }
        let grid = FdGrid::new(grid.n_x, grid.n_t)?;
        let n = locations.len();
        let exact_map = map_matrix(k_modes, n, |c| locations.iter().map(|&x| exact_forward(c, x, tau)).collect());
        let fd_map = map_matrix(k_modes, n, |c| fd_forward(c, &locations, tau, grid));
        Ok(Self {
            kappa: (1..=k_modes).map(|k| 1.0 / k as f64).collect(),
            tau,
            sigma2_noise,
            locations,
            data,
            grid,
            exact_map,
            fd_map,
        })
    }

    /// Equispaced interior locations `i/(N+1)`, truth drawn from the prior,
    /// data from the exact map plus Gaussian noise.
    pub fn synthetic(cfg: &HeatConfig) -> Result<Self> {
        if cfg.n_obs == 0 {
            return Err(config("need at least one observation"));
        }
        let locations: Vec<f64> = (1..=cfg.n_obs).map(|i| i as f64 / (cfg.n_obs + 1) as f64).collect();
        let mut rng = substream(cfg.seed, 0);
        let truth: Vec<f64> = (1..=cfg.k_modes)
            .map(|k| (1.0 / k as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let sd = cfg.sigma2_noise.sqrt();
        let data = locations
            .iter()
            .map(|&x| exact_forward(&truth, x, cfg.tau) + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(cfg.k_modes, cfg.tau, cfg.sigma2_noise, locations, data, cfg.grid)
    }

    pub fn k_modes(&self) -> usize {
        self.kappa.len()
    }

    pub fn forward(&self, c: &[f64], which: Forward) -> Vec<f64> {
        let m = match which {
            Forward::Exact => &self.exact_map,
            Forward::Fd => &self.fd_map,
        };
        (m * DVector::from_column_slice(c)).as_slice().to_vec()
    }

    pub fn log_prior(&self, c: &[f64]) -> f64 {
        -0.5 * c.iter().zip(&self.kappa).map(|(ck, kk)| ck * ck / kk).sum::<f64>()
    }

    /// Log-posterior up to a constant, using the chosen forward map.
    pub fn log_posterior(&self, c: &[f64], which: Forward) -> f64 {
        let pred = self.forward(c, which);
        let misfit: f64 = pred.iter().zip(&self.data).map(|(p, y)| (y - p) * (y - p)).sum();
        self.log_prior(c) - 0.5 * misfit / self.sigma2_noise
    }

    /// Gradient of the exact log-posterior.
    pub fn grad_log_posterior(&self, c: &[f64]) -> Vec<f64> {
        let cv = DVector::from_column_slice(c);
        let resid = DVector::from_column_slice(&self.data) - &self.exact_map * &cv;
        let g = self.exact_map.transpose() * resid / self.sigma2_noise;
        g.iter().zip(c).zip(&self.kappa).map(|((gi, ci), ki)| gi - ci / ki).collect()
    }

    /// Log-error of the surrogate, `log πa(c) − log π(c)`.
    pub fn surrogate_error(&self, c: &[f64]) -> f64 {
        self.log_posterior(c, Forward::Fd) - self.log_posterior(c, Forward::Exact)
    }

    pub fn posterior(&self, which: Forward) -> HeatPosterior<'_> {
        HeatPosterior { problem: self, which }
    }
}

/// [`LogDensity`] view of the posterior under one forward map.
pub struct HeatPosterior<'a> {
    problem: &'a HeatProblem,
    which: Forward,
}

impl LogDensity for HeatPosterior<'_> {
    fn dim(&self) -> usize {
        self.problem.k_modes()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.problem.log_posterior(x, self.which)
    }
}

fn prior_proposal(problem: &HeatProblem, lambda: f64) -> Result<ProposalSpec> {
    let cov = DMatrix::from_diagonal(&DVector::from_iterator(problem.k_modes(), problem.kappa.iter().map(|k| lambda * lambda * k)));
    ProposalSpec::from_covariance(cov)
}

/// Outcome of the pilot run that locates a typical posterior point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pilot {
    pub lambda: f64,
    pub acceptance: f64,
    pub final_state: Vec<f64>,
}

/// Tunes `λ` (proposal covariance `λ² diag(κ)`) towards 25% acceptance in
/// short batches, then runs `n_iter` exact-posterior RWM iterations and
/// returns the final state.
pub fn pilot_run(problem: &HeatProblem, n_iter: usize, seed: u64) -> Result<Pilot> {
    let post = problem.posterior(Forward::Exact);
    let kernel = Kernel::Rwm { target: &post };
    let mut x = vec![0.0; problem.k_modes()];
    let mut log_lambda = (0.1f64).ln();
    for round in 0..30u64 {
        let prop = prior_proposal(problem, log_lambda.exp())?;
        let t = run_chain(&kernel, &prop, &x, &ChainConfig::new(2000, crate::rng::child_seed(seed, round)))?;
        x = t.final_state.x.clone();
        let acc = t.counters.alpha12();
        log_lambda += 1.5 * (acc - 0.25);
    }
    let lambda = log_lambda.exp();
    let prop = prior_proposal(problem, lambda)?;
    let mut cfg = ChainConfig::new(n_iter, seed);
    cfg.thin = n_iter;
    let t = run_chain(&kernel, &prop, &x, &cfg)?;
    Ok(Pilot { lambda, acceptance: t.counters.alpha12(), final_state: t.final_state.x })
}

/// Scaled moments of the log-target increment `Q` and log-error increment
/// `S` over random proposals from `c0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QsMoments {
    pub lambda: f64,
    pub mean_s_over_l2: f64,
    pub var_s_over_l2: f64,
    /// `None` when `S` has zero variance (exact surrogate).
    pub corr_qs: Option<f64>,
    /// Normal quantile correlation of the `Q` sample.
    pub quantile_corr_q: f64,
    /// Normal quantile correlation of the `S` sample; `None` when degenerate.
    pub quantile_corr_s: Option<f64>,
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

/// Correlation between the sorted sample and Blom normal scores.
pub fn normal_quantile_correlation(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let scores: Vec<f64> = (1..=n)
        .map(|i| std_normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    pearson(&v, &scores)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Draws `n_samples` proposals `c* = c0 + λ diag(√κ) z` and records
/// `Q = log π(c*) − log π(c0)` and `S = s(c*) − s(c0)`. The same `z`
/// sequence is used for every `λ` given the same seed.
pub fn qs_moments(problem: &HeatProblem, c0: &[f64], lambda: f64, n_samples: usize, seed: u64, surrogate: Forward) -> Result<QsMoments> {
    if n_samples < 10 {
        return Err(config("qs_moments needs at least 10 samples"));
    }
    if !(lambda > 0.0) {
        return Err(domain("lambda must be positive"));
    }
    let k = problem.k_modes();
    let lp0 = problem.log_posterior(c0, Forward::Exact);
    let la0 = problem.log_posterior(c0, surrogate);
    let mut rng = substream(seed, 0);
    let mut c = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        for j in 0..k {
            z[j] = if i % 2 == 0 { rng.sample(StandardNormal) } else { -z[j] };
            c[j] = c0[j] + lambda * problem.kappa[j].sqrt() * z[j];
        }
        let lp = problem.log_posterior(&c, Forward::Exact);
        let la = problem.log_posterior(&c, surrogate);
        let q = lp - lp0;
        let s = (la - lp) - (la0 - lp0);
        samples.push((q, s));
    }
    let n = n_samples as f64;
    let qs: Vec<f64> = samples.iter().map(|p| p.0).collect();
    let ss: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let mean_s = ss.iter().sum::<f64>() / n;
    let var_s = ss.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / (n - 1.0);
    let degenerate = var_s <= 1e-300;
    let l2 = lambda * lambda;
    Ok(QsMoments {
        lambda,
        mean_s_over_l2: mean_s / l2,
        var_s_over_l2: var_s / l2,
        corr_qs: if degenerate { None } else { pearson(&qs, &ss) },
        quantile_corr_q: normal_quantile_correlation(&qs).unwrap_or(f64::NAN),
        quantile_corr_s: if degenerate { None } else { normal_quantile_correlation(&ss) },
        samples,
    })
}
