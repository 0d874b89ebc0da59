//! Product standard-normal target with a product-logistic surrogate and
//! synthetic Gaussian log-likelihood noise, plus quadrature of the surrogate
//! quality coefficients `(β₁, β₂)` for one-dimensional log-errors.

use crate::diagnostics::{ess_per_coordinate, harmonic_mean};
use crate::error::{domain, Result};
use crate::kernels::{run_chain, ChainConfig, Kernel, LikelihoodEstimator, LogDensity, ProposalSpec};
use crate::quadrature::hermite_rule;
use crate::rng::{child_seed, substream};
use crate::theory::{self, ApproxQuality, Mode};
use crate::parallel::parallel_map;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Optimal random-walk scaling constant for the exact target.
pub const RWM_SCALE: f64 = 2.38;
/// Optimal random-walk scaling constant for the pseudo-marginal chain.
pub const PM_SCALE: f64 = 2.56;
/// Noise variance of the pseudo-marginal baseline.
pub const PM_BASELINE_SIGMA2: f64 = 2.0;

/// `N(0, I_d)` up to a constant.
#[derive(Debug, Clone, Copy)]
pub struct ProductNormal {
    pub dim: usize,
}

impl LogDensity for ProductNormal {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Logistic density with mode `phi1` and inverse scale `phi2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSurrogateParams {
    pub phi1: f64,
    pub phi2: f64,
}

impl LogisticSurrogateParams {
    pub fn new(phi1: f64, phi2: f64) -> Result<Self> {
        if !phi1.is_finite() || !phi2.is_finite() || phi2 <= 0.0 {
            return Err(domain(format!("logistic surrogate needs finite phi1 and phi2 > 0, got ({phi1}, {phi2})")));
        }
        Ok(Self { phi1, phi2 })
    }

    /// `log πa(x)` for one coordinate, up to a constant.
    pub fn log_density_1d(&self, x: f64) -> f64 {
        let u = self.phi2 * (x - self.phi1);
        -u.abs() - 2.0 * (-u.abs()).exp().ln_1p()
    }

    /// `s(x) = log πa(x) − log π(x)` for the standard normal target.
    pub fn error(&self, x: f64) -> f64 {
        self.log_density_1d(x) + 0.5 * x * x
    }
}

/// One-dimensional log-error `s = log πa − log π` with two derivatives.
pub trait SurrogateError {
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

impl SurrogateError for LogisticSurrogateParams {
    fn d1(&self, x: f64) -> f64 {
        let u = self.phi2 * (x - self.phi1);
        x - self.phi2 * (0.5 * u).tanh()
    }
    fn d2(&self, x: f64) -> f64 {
        let u = self.phi2 * (x - self.phi1);
        let sech = 1.0 / (0.5 * u).cosh();
        1.0 - 0.5 * self.phi2 * self.phi2 * sech * sech
    }
}

/// Derivatives of a plain function by central differences (step `1e-5` for
/// the first derivative, `1e-4` for the second to contain roundoff).
pub struct FiniteDifference<F>(pub F);

const FD_STEP: f64 = 1e-5;
const FD_STEP2: f64 = 1e-4;

impl<F: Fn(f64) -> f64> SurrogateError for FiniteDifference<F> {
    fn d1(&self, x: f64) -> f64 {
        ((self.0)(x + FD_STEP) - (self.0)(x - FD_STEP)) / (2.0 * FD_STEP)
    }
    fn d2(&self, x: f64) -> f64 {
        ((self.0)(x + FD_STEP2) - 2.0 * (self.0)(x) + (self.0)(x - FD_STEP2)) / (FD_STEP2 * FD_STEP2)
    }
}

const BETA_CLAMP_SLACK: f64 = 1e-6;

/// `β₁ = E[s'']/I²` and `β₂ = E[s'²]^{1/2}/I` under the one-dimensional
/// target with log-density `target_log` (up to a constant).
///
/// Expectations use 128- and 256-node Gauss–Hermite rules, reweighted from
/// the standard normal to the target; they must agree to `1e-8`.
pub fn betas_by_quadrature(err: &dyn SurrogateError, target_log: &dyn Fn(f64) -> f64, i_const: f64) -> Result<ApproxQuality> {
    if !(i_const > 0.0) || !i_const.is_finite() {
        return Err(domain(format!("roughness constant {i_const} must be positive")));
    }
    let moments = |n: usize| -> (f64, f64) {
        let rule = hermite_rule(n);
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let r = w * (target_log(x) - target_log(0.0) + 0.5 * x * x).exp();
            if r == 0.0 {
                continue;
            }
            let d1 = err.d1(x);
            z += r;
            m1 += r * err.d2(x);
            m2 += r * d1 * d1;
        }
        (m1 / z, m2 / z)
    };
    let (a1, a2) = moments(128);
    let (b1, b2) = moments(256);
    if !(b1.is_finite() && b2.is_finite()) || (a1 - b1).abs() > 1e-8 || (a2 - b2).abs() > 1e-8 * b2.max(1.0) {
        return Err(crate::error::Error::Numeric(format!(
            "surrogate-error moments did not settle: ({a1}, {a2}) vs ({b1}, {b2})"
        )));
    }
    let beta1 = b1 / (i_const * i_const);
    let mut beta2 = b2.max(0.0).sqrt() / i_const;
    if beta1.abs() > beta2 {
        if beta1.abs() - beta2 > BETA_CLAMP_SLACK {
            log::warn!("quadrature gave |beta1| = {} > beta2 = {beta2}; clamping", beta1.abs());
        }
        beta2 = beta1.abs();
    }
    ApproxQuality::new(beta1, beta2)
}

/// `(β₁, β₂)` of the logistic surrogate against the standard normal target.
pub fn logistic_betas(p: LogisticSurrogateParams) -> Result<ApproxQuality> {
    betas_by_quadrature(&p, &|x| -0.5 * x * x, 1.0)
}

/// Product of independent logistic densities.
#[derive(Debug, Clone, Copy)]
pub struct LogisticProduct {
    pub dim: usize,
    pub params: LogisticSurrogateParams,
}

impl LogDensity for LogisticProduct {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.params.log_density_1d(v)).sum()
    }
}

/// Exact log-density plus `W ~ N(−σ²/2, σ²)`, so that `E[e^W] = 1`.
#[derive(Debug, Clone)]
pub struct SyntheticEstimator<T> {
    pub target: T,
    pub sigma2: f64,
}

/// Builds a synthetic Gaussian-noise estimator around `target`.
pub fn synthetic_estimator<T: LogDensity>(target: T, sigma2: f64) -> Result<SyntheticEstimator<T>> {
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(domain(format!("sigma2 = {sigma2} must be finite and non-negative")));
    }
    Ok(SyntheticEstimator { target, sigma2 })
}

impl<T: LogDensity> SyntheticEstimator<T> {
    /// Modeled cost of one estimate, inversely proportional to `σ²`.
    pub fn cost(&self) -> f64 {
        1.0 / self.sigma2
    }
}

impl<T: LogDensity> LikelihoodEstimator for SyntheticEstimator<T> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn estimate_log(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let exact = self.target.log_density(x);
        if self.sigma2 == 0.0 {
            return exact;
        }
        let z: f64 = rng.sample(StandardNormal);
        exact - 0.5 * self.sigma2 + self.sigma2.sqrt() * z
    }
    fn nominal_sigma2(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}

/// The eight surrogate settings of the reference study.
pub const REFERENCE_SURROGATES: [(f64, f64); 8] =
    [(0.0, 0.6), (0.0, 1.2), (0.0, 1.8), (0.0, 2.3), (0.0, 2.7), (1.0, 1.2), (0.6, 1.8), (0.5, 2.3)];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub dim: usize,
    pub surrogates: Vec<(f64, f64)>,
    /// Multiples of the baseline scaling.
    pub scalings: Vec<f64>,
    /// Noise variances for the pseudo-marginal variant.
    pub sigma2s: Vec<f64>,
    pub etas: Vec<f64>,
    pub run_da: bool,
    pub run_dapm: bool,
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            surrogates: REFERENCE_SURROGATES.to_vec(),
            scalings: vec![1.0, 1.5, 2.0, 2.5],
            sigma2s: vec![1.0, 2.0, 3.0],
            etas: vec![0.01, 0.001, 0.0],
            run_da: true,
            run_dapm: true,
            n_iter: 1_000_000,
            burn_in: 0,
            seed: 1,
            jobs: 1,
        }
    }
}

/// One delayed-acceptance cell of the study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub algorithm: Mode,
    pub phi1: f64,
    pub phi2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub scaling: f64,
    /// `None` for delayed acceptance with the exact target.
    pub sigma2: Option<f64>,
    pub alpha1: f64,
    pub alpha2given1: f64,
    pub ess: f64,
    /// ESS relative to the matched non-DA baseline.
    pub ess_star: f64,
    /// `(η, ESS**_η)`: ESS per modeled cost relative to the baseline.
    pub ess_double_star: Vec<(f64, f64)>,
}

/// A non-DA reference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub algorithm: String,
    pub scale: f64,
    pub sigma2: Option<f64>,
    pub acceptance: f64,
    pub ess: f64,
    pub cost_per_iteration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutput {
    pub config: StudyConfig,
    pub rwm: Option<BaselineRow>,
    pub pm: Option<BaselineRow>,
    pub rows: Vec<StudyRow>,
}

#[derive(Debug, Clone)]
enum Cell {
    Rwm,
    Pm,
    Da { params: LogisticSurrogateParams, scaling: f64 },
    Dapm { params: LogisticSurrogateParams, scaling: f64, sigma2: f64 },
}

struct CellResult {
    acceptance: f64,
    alpha1: f64,
    alpha2given1: f64,
    ess: f64,
    expensive_per_iter: f64,
}

fn initial_point(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 7);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn run_cell(cell: &Cell, cfg: &StudyConfig, seed: u64) -> Result<CellResult> {
    let d = cfg.dim;
    let root_d = (d as f64).sqrt();
    let target = ProductNormal { dim: d };
    let mut chain = ChainConfig::new(cfg.n_iter, seed);
    chain.burn_in = cfg.burn_in;
    let x0 = initial_point(d, seed);
    let trace = match cell {
        Cell::Rwm => {
            let prop = ProposalSpec::isotropic(RWM_SCALE / root_d)?;
            run_chain(&Kernel::Rwm { target: &target }, &prop, &x0, &chain)?
        }
        Cell::Pm => {
            let est = synthetic_estimator(target, PM_BASELINE_SIGMA2)?;
            let prop = ProposalSpec::isotropic(PM_SCALE / root_d)?;
            run_chain(&Kernel::Pm { prior: None, estimator: &est }, &prop, &x0, &chain)?
        }
        Cell::Da { params, scaling } => {
            let sur = LogisticProduct { dim: d, params: *params };
            let prop = ProposalSpec::isotropic(scaling * RWM_SCALE / root_d)?;
            run_chain(&Kernel::Da { target: &target, surrogate: &sur }, &prop, &x0, &chain)?
        }
        Cell::Dapm { params, scaling, sigma2 } => {
            let sur = LogisticProduct { dim: d, params: *params };
            let est = synthetic_estimator(target, *sigma2)?;
            let prop = ProposalSpec::isotropic(scaling * PM_SCALE / root_d)?;
            run_chain(&Kernel::Dapm { prior: None, surrogate: &sur, estimator: &est }, &prop, &x0, &chain)?
        }
    };
    let ess: Vec<f64> = ess_per_coordinate(&trace)?.iter().map(|e| e.ess).collect();
    let c = &trace.counters;
    Ok(CellResult {
        acceptance: c.alpha12(),
        alpha1: c.alpha1(),
        alpha2given1: c.alpha2given1(),
        ess: harmonic_mean(&ess),
        expensive_per_iter: c.expensive_evals as f64 / c.iterations as f64,
    })
}

/// Runs every configured cell: the RWM and PM baselines, DA for each
/// (surrogate, scaling) and DAPM for each (surrogate, scaling, σ²).
///
/// Per-iteration modeled costs are `η + α̂₁` (DA, unit exact-target cost),
/// `η + α̂₁/σ²` (DAPM), `1` (RWM) and `1/σ²` (PM).
pub fn run_logistic_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    if cfg.dim == 0 || cfg.n_iter < 10 {
        return Err(crate::error::config("study needs dim >= 1 and n_iter >= 10"));
    }
    let mut cells = Vec::new();
    if cfg.run_da {
        cells.push(Cell::Rwm);
    }
    if cfg.run_dapm {
        cells.push(Cell::Pm);
    }
    for &(phi1, phi2) in &cfg.surrogates {
        let params = LogisticSurrogateParams::new(phi1, phi2)?;
        for &scaling in &cfg.scalings {
            if cfg.run_da {
                cells.push(Cell::Da { params, scaling });
            }
            if cfg.run_dapm {
                for &sigma2 in &cfg.sigma2s {
                    cells.push(Cell::Dapm { params, scaling, sigma2 });
                }
            }
        }
    }
    let indexed: Vec<(usize, Cell)> = cells.into_iter().enumerate().collect();
    let results = parallel_map(&indexed, cfg.jobs, |(i, cell)| run_cell(cell, cfg, child_seed(cfg.seed, *i as u64)));
    let mut rwm = None;
    let mut pm = None;
    let mut pending = Vec::new();
    for ((_, cell), res) in indexed.iter().zip(results) {
        let res = res?;
        match cell {
            Cell::Rwm => {
                rwm = Some(BaselineRow {
                    algorithm: "rwm".into(),
                    scale: RWM_SCALE,
                    sigma2: None,
                    acceptance: res.acceptance,
                    ess: res.ess,
                    cost_per_iteration: 1.0,
                })
            }
            Cell::Pm => {
                pm = Some(BaselineRow {
                    algorithm: "pm".into(),
                    scale: PM_SCALE,
                    sigma2: Some(PM_BASELINE_SIGMA2),
                    acceptance: res.acceptance,
                    ess: res.ess,
                    cost_per_iteration: 1.0 / PM_BASELINE_SIGMA2,
                })
            }
            _ => pending.push((cell.clone(), res)),
        }
    }
    let mut rows = Vec::new();
    for (cell, res) in pending {
        let (algorithm, params, scaling, sigma2, base) = match cell {
            Cell::Da { params, scaling } => (Mode::Da, params, scaling, None, rwm.as_ref()),
            Cell::Dapm { params, scaling, sigma2 } => (Mode::Dapm, params, scaling, Some(sigma2), pm.as_ref()),
            _ => unreachable!(),
        };
        let base = base.expect("baseline runs whenever its variant does");
        let q = logistic_betas(params)?;
        let expensive_cost = sigma2.map_or(1.0, |s| 1.0 / s);
        let ess_double_star = cfg
            .etas
            .iter()
            .map(|&eta| {
                let cost = eta + res.expensive_per_iter * expensive_cost;
                (eta, (res.ess / cost) / (base.ess / base.cost_per_iteration))
            })
            .collect();
        rows.push(StudyRow {
            algorithm,
            phi1: params.phi1,
            phi2: params.phi2,
            beta1: q.beta1,
            beta2: q.beta2,
            scaling,
            sigma2,
            alpha1: res.alpha1,
            alpha2given1: res.alpha2given1,
            ess: res.ess,
            ess_star: res.ess / base.ess,
            ess_double_star,
        });
    }
    Ok(StudyOutput { config: cfg.clone(), rwm, pm, rows })
}

/// Theory prediction next to the empirical value for one study row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub algorithm: Mode,
    pub phi1: f64,
    pub phi2: f64,
    pub scaling: f64,
    pub sigma2: Option<f64>,
    pub mu: f64,
    pub alpha1: (f64, f64),
    pub alpha2given1: (f64, f64),
    /// Relative efficiency at `η = 0`: (predicted, empirical).
    pub rel_eff: (f64, f64),
}

/// Predicted acceptance rates and zero-cost relative efficiencies at
/// `μ = scaling · 2.38` (DA) or `scaling · 2.56` (DAPM), paired with the
/// empirical values. Rows without an `η = 0` column are skipped.
pub fn predicted_vs_empirical(rows: &[StudyRow]) -> Result<Vec<Comparison>> {
    let eff_rwm_star = theory::eff_rwm(RWM_SCALE);
    let eff_pm_star = theory::eff_pm(PM_SCALE, PM_BASELINE_SIGMA2);
    let mut out = Vec::new();
    for r in rows {
        let Some(&(_, empirical)) = r.ess_double_star.iter().find(|(eta, _)| *eta == 0.0) else {
            continue;
        };
        let q = ApproxQuality::new(r.beta1, r.beta2)?;
        let (mu, s2) = match r.algorithm {
            Mode::Da => (r.scaling * RWM_SCALE, 0.0),
            Mode::Dapm => (r.scaling * PM_SCALE, r.sigma2.unwrap_or(0.0)),
        };
        let a1 = theory::alpha1(mu, q)?;
        let a21 = theory::alpha12(mu, s2, q)? / a1;
        let predicted = match r.algorithm {
            Mode::Da => mu * mu * a21 / eff_rwm_star,
            Mode::Dapm => s2 * mu * mu * a21 / eff_pm_star,
        };
        out.push(Comparison {
            algorithm: r.algorithm,
            phi1: r.phi1,
            phi2: r.phi2,
            scaling: r.scaling,
            sigma2: r.sigma2,
            mu,
            alpha1: (a1, r.alpha1),
            alpha2given1: (a21, r.alpha2given1),
            rel_eff: (predicted, empirical),
        });
    }
    Ok(out)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
