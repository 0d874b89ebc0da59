use super::{ChainState, Kernel, Proposal, StepRecord};
use crate::error::{self, Result};
use crate::rng::Streams;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// Modeled cost of one surrogate evaluation and of one expensive
/// (exact or estimated) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub surrogate: f64,
    pub expensive: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { surrogate: 0.0, expensive: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Recorded iterations after burn-in.
    pub n_iter: usize,
    pub thin: usize,
    /// Iterations discarded before recording starts.
    pub burn_in: usize,
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(n_iter: usize, seed: u64) -> Self {
        Self { n_iter, thin: 1, burn_in: 0, seed }
    }
}

/// Aggregate counts over the recorded iterations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub iterations: u64,
    pub accepted: u64,
    pub stage1_attempts: u64,
    pub stage1_accepts: u64,
    pub stage2_attempts: u64,
    pub stage2_accepts: u64,
    pub expensive_evals: u64,
    pub surrogate_evals: u64,
    pub sum_squared_jump: f64,
}

impl Counters {
    pub fn add(&mut self, r: &StepRecord) {
        self.iterations += 1;
        self.accepted += r.accepted() as u64;
        self.stage1_attempts += r.stage1_attempted as u64;
        self.stage1_accepts += r.stage1_accepted as u64;
        self.stage2_attempts += r.stage2_attempted as u64;
        self.stage2_accepts += r.stage2_accepted as u64;
        self.expensive_evals += r.expensive_evals as u64;
        self.surrogate_evals += r.surrogate_evals as u64;
        self.sum_squared_jump += r.squared_jump;
    }

    /// Stage One acceptance rate (the only rate for single-stage kernels).
    pub fn alpha1(&self) -> f64 {
        ratio(self.stage1_accepts, self.stage1_attempts)
    }

    /// Stage Two acceptance rate given Stage One acceptance; NaN when no
    /// Stage Two test was ever made.
    pub fn alpha2given1(&self) -> f64 {
        ratio(self.stage2_accepts, self.stage2_attempts)
    }

    /// Overall acceptance rate.
    pub fn alpha12(&self) -> f64 {
        ratio(self.accepted, self.iterations)
    }

    /// Mean squared jump per iteration.
    pub fn esjd(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.sum_squared_jump / self.iterations as f64
        }
    }

    pub fn modeled_cost(&self, costs: &CostModel) -> f64 {
        self.surrogate_evals as f64 * costs.surrogate + self.expensive_evals as f64 * costs.expensive
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Recorded output of a run: the state after burn-in, then every `thin`-th
/// state, with its cached log-densities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainTrace {
    pub kernel: String,
    pub dim: usize,
    pub config: ChainConfig,
    pub iters: Vec<u64>,
    /// Row-major, `dim` values per recorded state.
    pub samples: Vec<f64>,
    pub log_pa: Vec<f64>,
    pub log_phat: Vec<f64>,
    pub counters: Counters,
    pub wall_seconds: f64,
    pub final_state: ChainState,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.iters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iters.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// The recorded values of coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.samples.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Writes `iter,x_1..x_d,log_pa,log_phat`, preceded by `header` lines
    /// each prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        let cols: Vec<String> = (1..=self.dim).map(|j| format!("x_{j}")).collect();
        writeln!(w, "iter,{},log_pa,log_phat", cols.join(","))?;
        for i in 0..self.len() {
            let xs: Vec<String> = self.sample(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{},{},{:?},{:?}", self.iters[i], xs.join(","), self.log_pa[i], self.log_phat[i])?;
        }
        Ok(())
    }

    /// Counters and configuration as a JSON object.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kernel": self.kernel,
            "dim": self.dim,
            "config": self.config,
            "counters": self.counters,
            "alpha1": nan_to_null(self.counters.alpha1()),
            "alpha2given1": nan_to_null(self.counters.alpha2given1()),
            "alpha12": nan_to_null(self.counters.alpha12()),
            "wall_seconds": self.wall_seconds,
        })
    }
}

pub(crate) fn nan_to_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Runs `burn_in + n_iter` iterations from `x0`, all randomness derived from
/// `config.seed`.
pub fn run_chain(kernel: &Kernel, proposal: &dyn Proposal, x0: &[f64], config: &ChainConfig) -> Result<ChainTrace> {
    if config.n_iter == 0 {
        return Err(error::config("n_iter must be at least 1"));
    }
    if config.thin == 0 {
        return Err(error::config("thin must be at least 1"));
    }
    let start = Instant::now();
    let mut streams = Streams::new(config.seed);
    let mut state = kernel.init_state(x0, &mut streams)?;
    let mut scratch = Vec::with_capacity(x0.len());
    for _ in 0..config.burn_in {
        kernel.step(&mut state, proposal, &mut streams, &mut scratch);
    }
    let dim = x0.len();
    let kept = 1 + config.n_iter / config.thin;
    let mut trace = ChainTrace {
        kernel: kernel.name().to_string(),
        dim,
        config: config.clone(),
        iters: Vec::with_capacity(kept),
        samples: Vec::with_capacity(kept * dim),
        log_pa: Vec::with_capacity(kept),
        log_phat: Vec::with_capacity(kept),
        counters: Counters::default(),
        wall_seconds: 0.0,
        final_state: state.clone(),
    };
    let record = |trace: &mut ChainTrace, it: u64, s: &ChainState| {
        trace.iters.push(it);
        trace.samples.extend_from_slice(&s.x);
        trace.log_pa.push(s.log_pa);
        trace.log_phat.push(s.log_phat);
    };
    record(&mut trace, 0, &state);
    for it in 1..=config.n_iter {
        let rec = kernel.step(&mut state, proposal, &mut streams, &mut scratch);
        trace.counters.add(&rec);
        if it % config.thin == 0 {
            record(&mut trace, it as u64, &state);
        }
    }
    trace.final_state = state;
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}
