//! Limiting acceptance rates and efficiency functionals for the
//! delayed-acceptance and pseudo-marginal random-walk Metropolis family,
//! evaluated in the high-dimensional limit for product targets.
//!
//! A surrogate is summarised by [`ApproxQuality`] (`β₁`, `β₂`), a tuning
//! choice by [`TuningPoint`] (`μ`, `σ²`, `η`). The Stage Two factor and the
//! overall rate are one-dimensional Gaussian expectations evaluated with
//! [`crate::quadrature`].

use crate::error::{domain, Error, Result};
use crate::optim::nelder_mead;
use crate::quadrature::{normal_expectation, normal_expectation_piecewise};
use crate::special::{log_std_normal_cdf, mh_accept, std_normal_cdf};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Absolute quadrature tolerance for the overall acceptance rate.
pub const QUAD_TOL: f64 = 1e-8;

const BETA_SLACK: f64 = 1e-9;

/// Surrogate quality: `β₁` measures excess curvature of the log-error,
/// `β₂` its root-mean-square gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxQuality {
    pub beta1: f64,
    pub beta2: f64,
}

impl ApproxQuality {
    /// Validates `β₂ ≥ 0` and `|β₁| ≤ β₂`.
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !beta1.is_finite() || !beta2.is_finite() {
            return Err(domain(format!("non-finite surrogate quality ({beta1}, {beta2})")));
        }
        if beta2 < 0.0 {
            return Err(domain(format!("beta2 = {beta2} must be non-negative")));
        }
        if beta1.abs() > beta2 + BETA_SLACK {
            return Err(domain(format!("|beta1| = {} exceeds beta2 = {beta2}", beta1.abs())));
        }
        Ok(Self { beta1, beta2 })
    }

    /// A surrogate with no error.
    pub const fn exact() -> Self {
        Self { beta1: 0.0, beta2: 0.0 }
    }

    /// Correlation `-β₁/β₂` between the log-target and log-error increments;
    /// `None` for the exact surrogate.
    pub fn rho(&self) -> Option<f64> {
        (self.beta2 > 0.0).then(|| -self.beta1 / self.beta2)
    }

    fn is_exact(&self) -> bool {
        self.beta2 == 0.0
    }
}

/// Jump size `μ`, log-noise variance `σ²` and relative surrogate cost `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub mu: f64,
    pub sigma2: f64,
    pub eta: f64,
}

impl TuningPoint {
    pub fn new(mu: f64, sigma2: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("sigma2", sigma2), ("eta", eta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(domain(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(Self { mu, sigma2, eta })
    }
}

/// Which algorithm the efficiency refers to: delayed acceptance on top of a
/// pseudo-marginal estimate, or delayed acceptance with the exact target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dapm,
    Da,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dapm" => Ok(Mode::Dapm),
            "da" => Ok(Mode::Da),
            other => Err(crate::error::config(format!("unknown mode '{other}' (expected dapm or da)"))),
        }
    }
}

/// All limiting quantities at one tuning point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub tuning: TuningPoint,
    pub quality: ApproxQuality,
    pub alpha1: f64,
    pub alpha2given1: f64,
    pub alpha12: f64,
    pub eff: f64,
    pub eff_rel: f64,
}

fn g_raw(m: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return mh_accept(m);
    }
    let s = v.sqrt();
    // exp(m + v/2) Φ(-s - m/s) never exceeds one, so log space is safe even
    // when m + v/2 overflows.
    let tail = (m + 0.5 * v + log_std_normal_cdf(-s - m / s)).exp();
    (std_normal_cdf(m / s) + tail).min(1.0)
}

/// `E[min(1, e^Z)]` for `Z ~ N(m, v)`.
pub fn gauss_g(m: f64, v: f64) -> Result<f64> {
    if !m.is_finite() || !v.is_finite() || v < 0.0 {
        return Err(domain(format!("gauss_g requires finite m and v >= 0, got ({m}, {v})")));
    }
    Ok(g_raw(m, v))
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(domain(format!("mu = {mu} must be finite and non-negative")))
    }
}

/// Limiting Stage One acceptance rate.
pub fn alpha1(mu: f64, q: ApproxQuality) -> Result<f64> {
    check_mu(mu)?;
    let (b1, b2) = (q.beta1, q.beta2);
    let mu2 = mu * mu;
    Ok(g_raw(-0.5 * mu2 * (1.0 - b1), (mu2 * (1.0 + b2 * b2 - 2.0 * b1)).max(0.0)))
}

/// The Stage One factor conditional on the log-error increment, as a
/// function of the standardised increment `ξ`, plus the location of its kink
/// when the conditional variance vanishes.
fn stage_one_factor(mu: f64, q: ApproxQuality) -> (impl Fn(f64) -> f64, Option<f64>) {
    let (b1, b2) = (q.beta1, q.beta2);
    let mu2 = mu * mu;
    let ratio = b1 / b2;
    let base = -0.5 * (1.0 - b1) * mu2;
    let slope = mu * (b2 - ratio);
    let var = (mu2 * (1.0 - ratio * ratio)).max(0.0);
    let kink = (var <= 1e-12 * mu2.max(1.0) && slope != 0.0).then(|| -base / slope);
    (move |xi: f64| g_raw(base + slope * xi, var), kink)
}

fn overall_rate(mu: f64, sigma2: f64, q: ApproxQuality) -> Result<f64> {
    check_mu(mu)?;
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(domain(format!("sigma2 = {sigma2} must be finite and non-negative")));
    }
    if mu == 0.0 {
        return Ok(g_raw(-sigma2, 2.0 * sigma2));
    }
    if q.is_exact() {
        let mu2 = mu * mu;
        return Ok(g_raw(-0.5 * mu2, mu2) * g_raw(-sigma2, 2.0 * sigma2));
    }
    let (first, kink1) = stage_one_factor(mu, q);
    let (b1, b2) = (q.beta1, q.beta2);
    let base2 = -sigma2 - 0.5 * mu * mu * b1;
    let slope2 = -mu * b2;
    let var2 = 2.0 * sigma2;
    let integrand = |xi: f64| first(xi) * g_raw(base2 + slope2 * xi, var2);

    let mut breaks: Vec<f64> = kink1.into_iter().collect();
    if var2 == 0.0 {
        breaks.push(-base2 / slope2);
    }
    let value = if breaks.is_empty() {
        normal_expectation(integrand, 64, QUAD_TOL)?.value
    } else {
        normal_expectation_piecewise(integrand, &breaks, QUAD_TOL)?.value
    };
    let a1 = alpha1(mu, q)?;
    Ok(value.clamp(0.0, a1))
}

/// Limiting overall acceptance rate of the delayed-acceptance
/// pseudo-marginal chain with log-noise variance `sigma2`.
pub fn alpha12(mu: f64, sigma2: f64, q: ApproxQuality) -> Result<f64> {
    overall_rate(mu, sigma2, q)
}

/// Limiting overall acceptance rate of delayed acceptance with the exact
/// target in Stage Two (the `σ² → 0` limit of [`alpha12`]).
pub fn alpha12_da(mu: f64, q: ApproxQuality) -> Result<f64> {
    overall_rate(mu, 0.0, q)
}

/// Efficiency of the delayed-acceptance pseudo-marginal chain: squared jump
/// per unit of modeled cost, with one estimate at noise `σ²` costing `1/σ²`.
pub fn eff_dapm(t: TuningPoint, q: ApproxQuality) -> Result<f64> {
    if t.mu == 0.0 || t.sigma2 == 0.0 {
        return Ok(0.0);
    }
    let a1 = alpha1(t.mu, q)?;
    let a12 = alpha12(t.mu, t.sigma2, q)?;
    Ok(t.mu * t.mu * t.sigma2 * a12 / (t.eta * t.sigma2 + a1))
}

/// Efficiency of delayed acceptance with an exact Stage Two target of unit cost.
pub fn eff_da(mu: f64, q: ApproxQuality, eta: f64) -> Result<f64> {
    if mu == 0.0 {
        return Ok(0.0);
    }
    let a1 = alpha1(mu, q)?;
    let a12 = alpha12_da(mu, q)?;
    Ok(mu * mu * a12 / (eta + a1))
}

/// Efficiency of the plain pseudo-marginal random-walk chain.
pub fn eff_pm(mu: f64, sigma2: f64) -> f64 {
    2.0 * mu * mu * sigma2 * std_normal_cdf(-0.5 * (mu * mu + 2.0 * sigma2).sqrt())
}

/// Efficiency of random-walk Metropolis on the exact target.
pub fn eff_rwm(mu: f64) -> f64 {
    2.0 * mu * mu * std_normal_cdf(-0.5 * mu)
}

/// Maximisers of the baseline efficiencies, found with the same grid scan and
/// simplex refinement used by [`optimize`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Baselines {
    pub rwm_mu: f64,
    pub rwm_eff: f64,
    pub pm_mu: f64,
    pub pm_sigma2: f64,
    pub pm_eff: f64,
}

pub fn baselines() -> &'static Baselines {
    static CELL: OnceLock<Baselines> = OnceLock::new();
    CELL.get_or_init(|| {
        let rwm = maximize_1d(|mu| Ok(eff_rwm(mu)), MU_RANGE, MU_CELLS).expect("closed form cannot fail");
        let pm = maximize_2d(|mu, s2| Ok(eff_pm(mu, s2)), MU_RANGE, SIGMA2_RANGE, MU_CELLS, SIGMA2_CELLS)
            .expect("closed form cannot fail");
        Baselines {
            rwm_mu: rwm.x[0],
            rwm_eff: rwm.value,
            pm_mu: pm.x[0],
            pm_sigma2: pm.x[1],
            pm_eff: pm.value,
        }
    })
}

/// Efficiency relative to the optimally tuned baseline (pseudo-marginal for
/// [`Mode::Dapm`], exact random walk for [`Mode::Da`]).
pub fn eff_rel(t: TuningPoint, q: ApproxQuality, mode: Mode) -> Result<f64> {
    Ok(evaluate(t, q, mode)?.eff_rel)
}

/// Every limiting quantity at `t`. In [`Mode::Da`] the noise variance is ignored.
pub fn evaluate(t: TuningPoint, q: ApproxQuality, mode: Mode) -> Result<EfficiencyPoint> {
    let t = TuningPoint::new(t.mu, t.sigma2, t.eta)?;
    let b = baselines();
    let sigma2 = match mode {
        Mode::Dapm => t.sigma2,
        Mode::Da => 0.0,
    };
    let a1 = alpha1(t.mu, q)?;
    let a12 = overall_rate(t.mu, sigma2, q)?;
    let (eff, base) = match mode {
        Mode::Dapm if t.mu == 0.0 || sigma2 == 0.0 => (0.0, b.pm_eff),
        Mode::Dapm => (t.mu * t.mu * sigma2 * a12 / (t.eta * sigma2 + a1), b.pm_eff),
        Mode::Da => (t.mu * t.mu * a12 / (t.eta + a1), b.rwm_eff),
    };
    Ok(EfficiencyPoint {
        tuning: TuningPoint { sigma2, ..t },
        quality: q,
        alpha1: a1,
        alpha2given1: if a1 > 0.0 { a12 / a1 } else { 0.0 },
        alpha12: a12,
        eff,
        eff_rel: eff / base,
    })
}

/// Limiting expected squared jump distance per coordinate, scaled by `d`.
pub fn esjd_limit(mu: f64, sigma2: f64, q: ApproxQuality, i_const: f64) -> Result<f64> {
    if !(i_const > 0.0) || !i_const.is_finite() {
        return Err(domain(format!("roughness constant {i_const} must be positive")));
    }
    let a12 = alpha12(mu, sigma2, q)?;
    Ok(a12 * (mu / i_const).powi(2))
}

pub const MU_RANGE: (f64, f64) = (0.05, 12.0);
pub const SIGMA2_RANGE: (f64, f64) = (0.05, 8.0);
pub const MU_CELLS: usize = 120;
pub const SIGMA2_CELLS: usize = 80;

/// `n` log-spaced points spanning `range` inclusively.
pub fn log_grid(range: (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = (range.0.ln(), range.1.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Location and value of a maximum found by grid scan plus simplex refinement.
#[derive(Debug, Clone)]
pub(crate) struct GridMax {
    pub x: Vec<f64>,
    pub value: f64,
    pub on_boundary: bool,
}

fn near_edge(v: f64, range: (f64, f64)) -> bool {
    let (lo, hi) = (range.0.ln(), range.1.ln());
    let tol = 1e-4 * (hi - lo);
    v.ln() - lo < tol || hi - v.ln() < tol
}

pub(crate) fn maximize_1d<F>(f: F, range: (f64, f64), cells: usize) -> Result<GridMax>
where
    F: Fn(f64) -> Result<f64>,
{
    let grid = log_grid(range, cells);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x)?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let step = (range.1.ln() - range.0.ln()) / (cells - 1) as f64;
    let start = grid[best.0].ln();
    let (lo, hi) = (range.0.ln(), range.1.ln());
    let failure: std::cell::RefCell<Option<Error>> = Default::default();
    let objective = |p: &[f64]| {
        if p[0] < lo || p[0] > hi {
            return f64::INFINITY;
        }
        match f(p[0].exp()) {
            Ok(v) => -v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let m = nelder_mead(objective, vec![vec![start], vec![start + 0.05 * step]], 1e-10, 1e-14, 2000);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (x, value) = if -m.value >= best.1 { (m.x[0].exp(), -m.value) } else { (grid[best.0], best.1) };
    let on_boundary = best.0 == 0 || best.0 == cells - 1 || near_edge(x, range);
    Ok(GridMax { x: vec![x], value, on_boundary })
}

pub(crate) fn maximize_2d<F>(
    f: F,
    xr: (f64, f64),
    yr: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<GridMax>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let xs = log_grid(xr, nx);
    let ys = log_grid(yr, ny);
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = f(x, y)?;
            if v > best.1 {
                best = ((i, j), v);
            }
        }
    }
    let dx = (xr.1.ln() - xr.0.ln()) / (nx - 1) as f64;
    let dy = (yr.1.ln() - yr.0.ln()) / (ny - 1) as f64;
    let (sx, sy) = (xs[best.0 .0].ln(), ys[best.0 .1].ln());
    let failure: std::cell::RefCell<Option<Error>> = Default::default();
    let objective = |p: &[f64]| {
        if p[0] < xr.0.ln() || p[0] > xr.1.ln() || p[1] < yr.0.ln() || p[1] > yr.1.ln() {
            return f64::INFINITY;
        }
        match f(p[0].exp(), p[1].exp()) {
            Ok(v) => -v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let simplex = vec![vec![sx, sy], vec![sx + 0.05 * dx, sy], vec![sx, sy + 0.05 * dy]];
    let m = nelder_mead(objective, simplex, 1e-10, 1e-14, 5000);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let (x, value) = if -m.value >= best.1 {
        (vec![m.x[0].exp(), m.x[1].exp()], -m.value)
    } else {
        (vec![xs[best.0 .0], ys[best.0 .1]], best.1)
    };
    let (i, j) = best.0;
    let on_boundary = i == 0 || i == nx - 1 || j == 0 || j == ny - 1 || near_edge(x[0], xr) || near_edge(x[1], yr);
    Ok(GridMax { x, value, on_boundary })
}

/// Result of [`optimize`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Optimum {
    pub point: EfficiencyPoint,
    /// The maximum sits on the edge of the search box, so the true optimum
    /// may lie outside it.
    pub on_boundary: bool,
}

/// Maximises the efficiency over `μ ∈ [0.05, 12]` (and `σ² ∈ [0.05, 8]` in
/// [`Mode::Dapm`]) by a log-spaced grid scan refined with Nelder–Mead.
pub fn optimize(q: ApproxQuality, eta: f64, mode: Mode) -> Result<Optimum> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(domain(format!("eta = {eta} must be finite and non-negative")));
    }
    let m = match mode {
        Mode::Da => maximize_1d(|mu| eff_da(mu, q, eta), MU_RANGE, MU_CELLS)?,
        Mode::Dapm => maximize_2d(
            |mu, s2| eff_dapm(TuningPoint { mu, sigma2: s2, eta }, q),
            MU_RANGE,
            SIGMA2_RANGE,
            MU_CELLS,
            SIGMA2_CELLS,
        )?,
    };
    let sigma2 = if mode == Mode::Dapm { m.x[1] } else { 0.0 };
    let point = evaluate(TuningPoint::new(m.x[0], sigma2, eta)?, q, mode)?;
    Ok(Optimum { point, on_boundary: m.on_boundary })
}

/// Maximises the delayed-acceptance pseudo-marginal efficiency over `μ` with
/// the noise variance held at `sigma2`.
pub fn optimize_mu_at(q: ApproxQuality, eta: f64, sigma2: f64) -> Result<Optimum> {
    let m = maximize_1d(|mu| eff_dapm(TuningPoint { mu, sigma2, eta }, q), MU_RANGE, MU_CELLS)?;
    let point = evaluate(TuningPoint::new(m.x[0], sigma2, eta)?, q, Mode::Dapm)?;
    Ok(Optimum { point, on_boundary: m.on_boundary })
}

/// Evaluates every `(μ, σ²)` combination; rows ordered by `μ` then `σ²`.
pub fn scan_grid(mus: &[f64], sigma2s: &[f64], q: ApproxQuality, eta: f64, mode: Mode) -> Result<Vec<EfficiencyPoint>> {
    let mut out = Vec::with_capacity(mus.len() * sigma2s.len());
    for &mu in mus {
        for &s2 in sigma2s {
            out.push(evaluate(TuningPoint::new(mu, s2, eta)?, q, mode)?);
        }
    }
    Ok(out)
}
