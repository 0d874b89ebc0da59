//! Exact event-by-event simulation of a reaction network.

use super::network::ReactionNetwork;
use crate::error::{Error, Result};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1};

/// Counts above this are treated as a runaway simulation.
pub const MAX_POPULATION: u64 = 1_000_000_000;

/// Default cap on the number of events in one call.
pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

/// One event of a recorded path: the time it fired and the state after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<const S: usize> {
    pub time: f64,
    pub state: [u64; S],
}

/// Simulates from `u0` for `t_span` time units and returns the end state.
pub fn gillespie_simulate<N, const S: usize, const R: usize>(
    net: &N,
    u0: [u64; S],
    t_span: f64,
    max_events: usize,
    rng: &mut dyn RngCore,
) -> Result<[u64; S]>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    run(net, u0, t_span, max_events, rng, None)
}

/// As [`gillespie_simulate`], also returning every event.
pub fn gillespie_path<N, const S: usize, const R: usize>(
    net: &N,
    u0: [u64; S],
    t_span: f64,
    max_events: usize,
    rng: &mut dyn RngCore,
) -> Result<([u64; S], Vec<Event<S>>)>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    let mut events = Vec::new();
    let end = run(net, u0, t_span, max_events, rng, Some(&mut events))?;
    Ok((end, events))
}

fn run<N, const S: usize, const R: usize>(
    net: &N,
    u0: [u64; S],
    t_span: f64,
    max_events: usize,
    rng: &mut dyn RngCore,
    mut path: Option<&mut Vec<Event<S>>>,
) -> Result<[u64; S]>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    if !(t_span >= 0.0) {
        return Err(Error::Domain(format!("time span must be non-negative, got {t_span}")));
    }
    let stoich = net.stoichiometry();
    let mut u = u0;
    let mut uf = [0.0; S];
    let mut t = 0.0;
    let mut n_events = 0usize;
    loop {
        for (f, &c) in uf.iter_mut().zip(&u) {
            *f = c as f64;
        }
        let h = net.hazards(&uf);
        let h0: f64 = h.iter().sum();
        if !(h0 > 0.0) {
            if h0.is_nan() || h0 < 0.0 {
                return Err(Error::Simulation(format!("invalid total hazard {h0}")));
            }
            return Ok(u);
        }
        let e: f64 = Exp1.sample(rng);
        t += e / h0;
        if t > t_span {
            return Ok(u);
        }
        n_events += 1;
        if n_events > max_events {
            return Err(Error::Simulation(format!("more than {max_events} events in {t_span} time units")));
        }
        let target = rng.random::<f64>() * h0;
        let mut acc = 0.0;
        let mut chosen = R - 1;
        for (r, &hr) in h.iter().enumerate() {
            acc += hr;
            if target < acc {
                chosen = r;
                break;
            }
        }
        // a zero-rate reaction can be selected only through rounding in the
        // cumulative sum; skip back to the last reaction with positive rate
        while h[chosen] <= 0.0 {
            chosen -= 1;
        }
        for (c, &ds) in u.iter_mut().zip(&stoich[chosen]) {
            let next = *c as i64 + ds;
            if next < 0 {
                return Err(Error::Simulation("reaction fired with insufficient reactants".into()));
            }
            *c = next as u64;
            if *c > MAX_POPULATION {
                return Err(Error::Simulation(format!("population exceeded {MAX_POPULATION}")));
            }
        }
        if let Some(p) = path.as_deref_mut() {
            p.push(Event { time: t, state: u });
        }
    }
}
