//! One-step transition kernels for random-walk Metropolis (RWM),
//! pseudo-marginal RWM (PM), delayed-acceptance RWM (DA) and delayed-acceptance
//! pseudo-marginal RWM (DAPM), with per-stage bookkeeping.
//!
//! All densities are handled on the log scale and may be `-∞` outside their
//! support. A proposal whose cheap screen is `-∞` is rejected without any
//! expensive evaluation.

mod chain;
pub mod finite;
mod proposal;

pub use chain::{run_chain, ChainConfig, ChainTrace, Counters, CostModel};
pub use proposal::{Proposal, ProposalSpec};

use crate::error::{domain, Result};
use crate::rng::Streams;
use rand::{Rng, RngCore};

/// A log-density known up to an additive constant.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Draws `log π̂(x)`, the log of an estimate whose natural-scale expectation
/// is the (unnormalised) target density at `x`.
pub trait LikelihoodEstimator: Sync {
    fn dim(&self) -> usize;
    fn estimate_log(&self, x: &[f64], rng: &mut dyn RngCore) -> f64;
    /// Variance of the log-estimate when it is known in advance.
    fn nominal_sigma2(&self) -> Option<f64> {
        None
    }
}

/// Closure-backed [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Which of the four algorithms to run, with the densities it needs.
///
/// `prior` in the pseudo-marginal variants is added to every estimate; leave
/// it `None` when the estimator already returns the full log-posterior.
#[derive(Clone, Copy)]
pub enum Kernel<'a> {
    Rwm {
        target: &'a dyn LogDensity,
    },
    Pm {
        prior: Option<&'a dyn LogDensity>,
        estimator: &'a dyn LikelihoodEstimator,
    },
    Da {
        target: &'a dyn LogDensity,
        surrogate: &'a dyn LogDensity,
    },
    Dapm {
        prior: Option<&'a dyn LogDensity>,
        surrogate: &'a dyn LogDensity,
        estimator: &'a dyn LikelihoodEstimator,
    },
}

/// Current position with cached log-densities.
///
/// `log_pa` is the surrogate value (NaN for kernels without a surrogate);
/// `log_phat` is the exact log-target for RWM/DA and the retained
/// stochastic estimate for PM/DAPM, which is never refreshed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub log_pa: f64,
    pub log_phat: f64,
}

/// What happened in one iteration. Kernels without a surrogate report their
/// single accept/reject test as Stage One.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepRecord {
    pub stage1_attempted: bool,
    pub stage1_accepted: bool,
    pub stage2_attempted: bool,
    pub stage2_accepted: bool,
    pub expensive_evals: u32,
    pub surrogate_evals: u32,
    pub squared_jump: f64,
}

impl StepRecord {
    pub fn accepted(&self) -> bool {
        if self.stage2_attempted {
            self.stage2_accepted
        } else {
            self.stage1_accepted
        }
    }
}

/// Metropolis–Hastings test on a log ratio. Non-negative ratios accept
/// without consuming a uniform; `-∞` and NaN reject without one.
pub fn accept_log_ratio(log_ratio: f64, rng: &mut dyn RngCore) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() <= log_ratio
}

/// Stage One log ratio `log πa(y) − log πa(x)`.
pub fn stage_one_log_ratio(log_pa_x: f64, log_pa_y: f64) -> f64 {
    log_pa_y - log_pa_x
}

/// Stage Two log ratio `[log π̂(y) − log π̂(x)] − [log πa(y) − log πa(x)]`.
pub fn stage_two_log_ratio(log_phat_x: f64, log_phat_y: f64, log_pa_x: f64, log_pa_y: f64) -> f64 {
    (log_phat_y - log_phat_x) - (log_pa_y - log_pa_x)
}

fn nan_to_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn estimate_posterior(
    prior: Option<&dyn LogDensity>,
    estimator: &dyn LikelihoodEstimator,
    x: &[f64],
    rng: &mut dyn RngCore,
) -> (f64, u32) {
    let lp = prior.map_or(0.0, |p| nan_to_neg_inf(p.log_density(x)));
    if lp == f64::NEG_INFINITY {
        return (lp, 0);
    }
    (nan_to_neg_inf(lp + estimator.estimate_log(x, rng)), 1)
}

impl<'a> Kernel<'a> {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Rwm { .. } => "rwm",
            Kernel::Pm { .. } => "pm",
            Kernel::Da { .. } => "da",
            Kernel::Dapm { .. } => "dapm",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::Rwm { target } => target.dim(),
            Kernel::Pm { estimator, .. } => estimator.dim(),
            Kernel::Da { target, .. } => target.dim(),
            Kernel::Dapm { surrogate, .. } => surrogate.dim(),
        }
    }

    pub fn has_surrogate(&self) -> bool {
        matches!(self, Kernel::Da { .. } | Kernel::Dapm { .. })
    }

    /// Builds the cached state at `x`, drawing an initial estimate from the
    /// estimator stream for the pseudo-marginal kernels.
    pub fn init_state(&self, x: &[f64], streams: &mut Streams) -> Result<ChainState> {
        if x.len() != self.dim() {
            return Err(domain(format!("initial state has length {}, kernel dimension is {}", x.len(), self.dim())));
        }
        let (log_pa, log_phat) = match *self {
            Kernel::Rwm { target } => (f64::NAN, target.log_density(x)),
            Kernel::Pm { prior, estimator } => (f64::NAN, estimate_posterior(prior, estimator, x, &mut streams.estimator).0),
            Kernel::Da { target, surrogate } => (surrogate.log_density(x), target.log_density(x)),
            Kernel::Dapm { prior, surrogate, estimator } => (
                surrogate.log_density(x),
                estimate_posterior(prior, estimator, x, &mut streams.estimator).0,
            ),
        };
        if log_phat.is_nan() || (self.has_surrogate() && log_pa.is_nan()) {
            return Err(domain("log-density is NaN at the initial state"));
        }
        Ok(ChainState { x: x.to_vec(), log_pa, log_phat })
    }

    /// Advances `state` by one iteration. `scratch` holds the proposal.
    pub fn step(&self, state: &mut ChainState, proposal: &dyn Proposal, streams: &mut Streams, scratch: &mut Vec<f64>) -> StepRecord {
        scratch.resize(state.x.len(), 0.0);
        proposal.propose(&state.x, scratch, &mut streams.proposal);
        let y: &[f64] = scratch;
        let mut rec = StepRecord { stage1_attempted: true, ..Default::default() };
        match *self {
            Kernel::Rwm { target } => {
                let lpy = nan_to_neg_inf(target.log_density(y));
                rec.expensive_evals = 1;
                if accept_log_ratio(lpy - state.log_phat, &mut streams.accept) {
                    rec.stage1_accepted = true;
                    state.log_phat = lpy;
                }
            }
            Kernel::Pm { prior, estimator } => {
                let (lpy, evals) = estimate_posterior(prior, estimator, y, &mut streams.estimator);
                rec.expensive_evals = evals;
                if accept_log_ratio(lpy - state.log_phat, &mut streams.accept) {
                    rec.stage1_accepted = true;
                    state.log_phat = lpy;
                }
            }
            Kernel::Da { target, surrogate } => {
                let lay = nan_to_neg_inf(surrogate.log_density(y));
                rec.surrogate_evals = 1;
                if accept_log_ratio(stage_one_log_ratio(state.log_pa, lay), &mut streams.accept) {
                    rec.stage1_accepted = true;
                    rec.stage2_attempted = true;
                    let lpy = nan_to_neg_inf(target.log_density(y));
                    rec.expensive_evals = 1;
                    let r = stage_two_log_ratio(state.log_phat, lpy, state.log_pa, lay);
                    if accept_log_ratio(r, &mut streams.accept) {
                        rec.stage2_accepted = true;
                        state.log_pa = lay;
                        state.log_phat = lpy;
                    }
                }
            }
            Kernel::Dapm { prior, surrogate, estimator } => {
                let lay = nan_to_neg_inf(surrogate.log_density(y));
                rec.surrogate_evals = 1;
                if accept_log_ratio(stage_one_log_ratio(state.log_pa, lay), &mut streams.accept) {
                    rec.stage1_accepted = true;
                    rec.stage2_attempted = true;
                    let (lpy, evals) = estimate_posterior(prior, estimator, y, &mut streams.estimator);
                    rec.expensive_evals = evals;
                    let r = stage_two_log_ratio(state.log_phat, lpy, state.log_pa, lay);
                    if accept_log_ratio(r, &mut streams.accept) {
                        rec.stage2_accepted = true;
                        state.log_pa = lay;
                        state.log_phat = lpy;
                    }
                }
            }
        }
        if rec.accepted() {
            rec.squared_jump = squared_distance(&state.x, y);
            state.x.copy_from_slice(y);
        }
        rec
    }
}

#[cfg(test)]
mod tests;
