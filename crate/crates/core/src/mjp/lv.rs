//! Lotka–Volterra inference problem: parameters, data, and the exact
//! (particle filter) and approximate (LNA) posteriors.

use super::gillespie::gillespie_simulate;
use super::lna::{lna_marginal_loglik, DEFAULT_DT};
use super::network::LotkaVolterra;
use super::pf::{bootstrap_pf, StateSpaceModel};
use crate::error::{Error, Result};
use crate::kernels::{LikelihoodEstimator, LogDensity};
use crate::rng::substream;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Half-width of the uniform prior on each log-parameter.
pub const PRIOR_BOUND: f64 = 8.0;

/// Per-particle cap on Gillespie events in one unit interval.
pub const EVENTS_PER_INTERVAL: usize = 100_000;

/// `x = (log c1, log c2, log c3, log s1, log s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvParams {
    pub x: [f64; 5],
}

impl LvParams {
    pub fn from_natural(c: [f64; 3], s: [f64; 2]) -> Self {
        Self { x: [c[0].ln(), c[1].ln(), c[2].ln(), s[0].ln(), s[1].ln()] }
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let x: [f64; 5] = x
            .try_into()
            .map_err(|_| Error::Domain(format!("LV parameters need 5 values, got {}", x.len())))?;
        Ok(Self { x })
    }

    pub fn rates(&self) -> [f64; 3] {
        [self.x[0].exp(), self.x[1].exp(), self.x[2].exp()]
    }

    pub fn obs_sd(&self) -> [f64; 2] {
        [self.x[3].exp(), self.x[4].exp()]
    }

    pub fn network(&self) -> LotkaVolterra {
        LotkaVolterra { c: self.rates() }
    }

    pub fn in_support(&self) -> bool {
        self.x.iter().all(|v| v.is_finite() && v.abs() <= PRIOR_BOUND)
    }
}

/// Noisy observations one time unit apart. `y[0]` observes the known
/// initial state `u0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub u0: [u64; 2],
    pub y: Vec<[f64; 2]>,
}

impl ObservationSeries {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Provenance written as the JSON comment line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetHeader {
    pub c: [f64; 3],
    pub s: [f64; 2],
    pub u0: [u64; 2],
    pub n: usize,
    pub seed: u64,
}

impl Default for DatasetHeader {
    fn default() -> Self {
        Self { c: [1.0, 0.005, 0.6], s: [8.0, 8.0], u0: [71, 79], n: 50, seed: 1 }
    }
}

/// Simulates the latent path and the observations. Returns the series and
/// the latent states at the observation times.
pub fn simulate_dataset(h: &DatasetHeader) -> Result<(ObservationSeries, Vec<[u64; 2]>)> {
    if h.n == 0 {
        return Err(Error::Domain("dataset needs at least one observation".into()));
    }
    let net = LotkaVolterra { c: h.c };
    let mut path_rng = substream(h.seed, 0);
    let mut noise_rng = substream(h.seed, 1);
    let mut u = h.u0;
    let mut latent = Vec::with_capacity(h.n);
    let mut y = Vec::with_capacity(h.n);
    for t in 0..h.n {
        if t > 0 {
            u = gillespie_simulate(&net, u, 1.0, usize::MAX, &mut path_rng)?;
        }
        latent.push(u);
        let e1: f64 = StandardNormal.sample(&mut noise_rng);
        let e2: f64 = StandardNormal.sample(&mut noise_rng);
        y.push([u[0] as f64 + h.s[0] * e1, u[1] as f64 + h.s[1] * e2]);
    }
    Ok((ObservationSeries { u0: h.u0, y }, latent))
}

/// Writes `# {json header}` followed by CSV `t,y1,y2` with `t` the time
/// since the initial state.
pub fn write_dataset<W: Write>(mut w: W, header: &DatasetHeader, series: &ObservationSeries) -> Result<()> {
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    writeln!(w, "t,y1,y2")?;
    for (t, y) in series.y.iter().enumerate() {
        writeln!(w, "{t},{:?},{:?}", y[0], y[1])?;
    }
    Ok(())
}

/// Reads the format produced by [`write_dataset`].
pub fn read_dataset<R: BufRead>(r: R) -> Result<(DatasetHeader, ObservationSeries)> {
    let mut header: Option<DatasetHeader> = None;
    let mut y = Vec::new();
    let mut seen_columns = false;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if header.is_none() {
                header = Some(serde_json::from_str(rest.trim())?);
            }
            continue;
        }
        if !seen_columns {
            if line != "t,y1,y2" {
                return Err(Error::Config(format!("expected column header t,y1,y2, found {line:?}")));
            }
            seen_columns = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Config(format!("bad dataset row {line:?}")));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {s:?}: {e}")));
        y.push([parse(fields[1])?, parse(fields[2])?]);
    }
    let header = header.ok_or_else(|| Error::Config("dataset is missing its JSON header".into()))?;
    if y.len() != header.n {
        return Err(Error::Config(format!("header says n = {}, found {} rows", header.n, y.len())));
    }
    let u0 = header.u0;
    Ok((header, ObservationSeries { u0, y }))
}

/// The LV model as a state-space model for the particle filter.
pub struct LvStateSpace<'a> {
    pub net: LotkaVolterra,
    pub obs_var: [f64; 2],
    pub series: &'a ObservationSeries,
    pub max_events: usize,
}

impl<'a> LvStateSpace<'a> {
    pub fn new(params: &LvParams, series: &'a ObservationSeries) -> Self {
        let s = params.obs_sd();
        Self { net: params.network(), obs_var: [s[0] * s[0], s[1] * s[1]], series, max_events: EVENTS_PER_INTERVAL }
    }
}

fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - mean) * (y - mean) / var)
}

impl StateSpaceModel for LvStateSpace<'_> {
    type State = [u64; 2];
    fn n_obs(&self) -> usize {
        self.series.n()
    }
    fn initial(&self, _rng: &mut dyn RngCore) -> Result<[u64; 2]> {
        Ok(self.series.u0)
    }
    fn propagate(&self, _t: usize, state: &mut [u64; 2], rng: &mut dyn RngCore) -> Result<()> {
        *state = gillespie_simulate(&self.net, *state, 1.0, self.max_events, rng)?;
        Ok(())
    }
    fn log_obs(&self, t: usize, state: &[u64; 2]) -> f64 {
        let y = self.series.y[t];
        log_normal_pdf(y[0], state[0] as f64, self.obs_var[0]) + log_normal_pdf(y[1], state[1] as f64, self.obs_var[1])
    }
}

/// Uniform prior on `[−8, 8]⁵`, as a log-density (0 inside, `-∞` outside).
#[derive(Debug, Clone, Copy, Default)]
pub struct LvPrior;

impl LogDensity for LvPrior {
    fn dim(&self) -> usize {
        5
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        match LvParams::from_slice(x) {
            Ok(p) if p.in_support() => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// LNA approximation to the log-posterior (prior included).
pub struct LnaPosterior<'a> {
    pub series: &'a ObservationSeries,
    pub dt: f64,
}

impl<'a> LnaPosterior<'a> {
    pub fn new(series: &'a ObservationSeries) -> Self {
        Self { series, dt: DEFAULT_DT }
    }

    pub fn log_likelihood(&self, params: &LvParams) -> Result<f64> {
        let s = params.obs_sd();
        let u0 = [self.series.u0[0] as f64, self.series.u0[1] as f64];
        lna_marginal_loglik(&params.network(), u0, &self.series.y, [s[0] * s[0], s[1] * s[1]], self.dt)
    }
}

impl LogDensity for LnaPosterior<'_> {
    fn dim(&self) -> usize {
        5
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        let p = match LvParams::from_slice(x) {
            Ok(p) if p.in_support() => p,
            _ => return f64::NEG_INFINITY,
        };
        self.log_likelihood(&p).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Particle filter estimate of the log-likelihood with `m` particles.
pub struct PfLikelihood<'a> {
    pub series: &'a ObservationSeries,
    pub m: usize,
}

impl LikelihoodEstimator for PfLikelihood<'_> {
    fn dim(&self) -> usize {
        5
    }
    fn estimate_log(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let Ok(p) = LvParams::from_slice(x) else {
            return f64::NEG_INFINITY;
        };
        match bootstrap_pf(&LvStateSpace::new(&p, self.series), self.m, rng) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("particle filter failed at {x:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }
}
