//! Exact transition matrices of the four kernels on a finite ring of
//! states, with log-likelihood noise drawn from a finite grid. Solving for
//! the stationary vector gives a brute-force check of invariance, and
//! single-step frequencies of the real kernels can be compared row by row.

use super::{stage_one_log_ratio, stage_two_log_ratio, ChainState, Kernel, LikelihoodEstimator, LogDensity, Proposal};
use crate::rng::Streams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

fn f(u: f64) -> f64 {
    crate::special::mh_accept(u)
}

/// Nearest-neighbour random walk on `{0, …, k-1}` with wrap-around.
pub struct Ring {
    pub k: usize,
}

impl Proposal for Ring {
    fn propose(&self, x: &[f64], out: &mut [f64], rng: &mut dyn RngCore) {
        let i = x[0] as usize;
        let j = if rng.random::<bool>() { (i + 1) % self.k } else { (i + self.k - 1) % self.k };
        out[0] = j as f64;
    }
}

pub fn ring_q(k: usize, i: usize, j: usize) -> f64 {
    let up = (i + 1) % k == j;
    let down = (i + k - 1) % k == j;
    0.5 * (up as u8 + down as u8) as f64
}

pub struct Table {
    pub values: Vec<f64>,
}

impl LogDensity for Table {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.values[x[0] as usize]
    }
}

/// Log-target plus noise drawn from a finite grid with `Σ p(w) e^w = 1`.
pub struct GridNoise<'a> {
    target: &'a Table,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
}

impl<'a> GridNoise<'a> {
    pub fn new(target: &'a Table, raw_w: &[f64], p: &[f64]) -> Self {
        let z: f64 = raw_w.iter().zip(p).map(|(w, p)| p * w.exp()).sum();
        let w = raw_w.iter().map(|w| w - z.ln()).collect();
        Self { target, w, p: p.to_vec() }
    }

    /// Grid index of the noise carried by `log_phat` at state `x`.
    pub fn index(&self, x: usize, log_phat: f64) -> usize {
        let w = log_phat - self.target.values[x];
        (0..self.w.len())
            .min_by(|&a, &b| (self.w[a] - w).abs().total_cmp(&(self.w[b] - w).abs()))
            .unwrap()
    }
}

impl LikelihoodEstimator for GridNoise<'_> {
    fn dim(&self) -> usize {
        1
    }
    fn estimate_log(&self, x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let mut u: f64 = rng.random();
        for (w, p) in self.w.iter().zip(&self.p) {
            if u < *p {
                return self.target.values[x[0] as usize] + w;
            }
            u -= p;
        }
        self.target.values[x[0] as usize] + self.w.last().unwrap()
    }
}

/// Stationary vector of a row-stochastic matrix.
pub fn stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu().solve(&b).unwrap()
}

fn fill_diagonal(p: &mut DMatrix<f64>) {
    for i in 0..p.nrows() {
        let off: f64 = (0..p.ncols()).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = 1.0 - off;
    }
}

/// Probabilities proportional to `exp(v)`.
pub fn normalised(v: &[f64]) -> Vec<f64> {
    let z: f64 = v.iter().map(|l| l.exp()).sum();
    v.iter().map(|l| l.exp() / z).collect()
}

/// Default five-state log-target, surrogate and noise grid.
pub const LOG_TARGET: [f64; 5] = [0.3, -1.2, 0.9, -0.4, 0.0];
pub const LOG_SURROGATE: [f64; 5] = [-0.5, 0.4, 1.1, -1.3, 0.2];
pub const NOISE_W: [f64; 4] = [-1.5, -0.3, 0.4, 1.0];
pub const NOISE_P: [f64; 4] = [0.2, 0.35, 0.3, 0.15];

/// Exact one-step transition matrix over `x` for RWM (`surrogate = None`)
/// or DA.
pub fn matrix_exact(target: &[f64], surrogate: Option<&[f64]>) -> DMatrix<f64> {
    let k = target.len();
    let mut p = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let a = match surrogate {
                None => f(target[j] - target[i]),
                Some(s) => {
                    f(stage_one_log_ratio(s[i], s[j]))
                        * f(stage_two_log_ratio(target[i], target[j], s[i], s[j]))
                }
            };
            p[(i, j)] = ring_q(k, i, j) * a;
        }
    }
    fill_diagonal(&mut p);
    p
}

/// Exact transition matrix over `(x, w)` for PM (`surrogate = None`) or DAPM.
pub fn matrix_noisy(target: &[f64], surrogate: Option<&[f64]>, noise: &GridNoise) -> DMatrix<f64> {
    let (k, m) = (target.len(), noise.w.len());
    let mut p = DMatrix::zeros(k * m, k * m);
    for i in 0..k {
        for a in 0..m {
            for j in 0..k {
                if i == j {
                    continue;
                }
                for b in 0..m {
                    let lx = target[i] + noise.w[a];
                    let ly = target[j] + noise.w[b];
                    let acc = match surrogate {
                        None => f(ly - lx),
                        Some(s) => f(stage_one_log_ratio(s[i], s[j])) * f(stage_two_log_ratio(lx, ly, s[i], s[j])),
                    };
                    p[(i * m + a, j * m + b)] = ring_q(k, i, j) * noise.p[b] * acc;
                }
            }
        }
    }
    fill_diagonal(&mut p);
    p
}

/// Runs `reps` single steps of the real kernel from every state of the
/// default tables and returns the largest deviation of a destination
/// frequency from its matrix entry, in binomial standard errors.
pub fn max_step_deviation(kernel: Kernel, p: &DMatrix<f64>, noise: Option<&GridNoise>, reps: usize, seed: u64) -> f64 {
    let ring = Ring { k: 5 };
    let m = noise.map_or(1, |n| n.w.len());
    let mut streams = Streams::new(seed);
    let mut worst: f64 = 0.0;
    let mut scratch = Vec::new();
    for from in 0..p.nrows() {
        let (i, a) = (from / m, from % m);
        let mut counts = vec![0usize; p.ncols()];
        for _ in 0..reps {
            let mut state = ChainState {
                x: vec![i as f64],
                log_pa: LOG_SURROGATE[i],
                log_phat: LOG_TARGET[i] + noise.map_or(0.0, |n| n.w[a]),
            };
            kernel.step(&mut state, &ring, &mut streams, &mut scratch);
            let j = state.x[0] as usize;
            let b = noise.map_or(0, |n| n.index(j, state.log_phat));
            counts[j * m + b] += 1;
        }
        for to in 0..p.ncols() {
            let expect = p[(from, to)];
            let got = counts[to] as f64 / reps as f64;
            let se = (expect * (1.0 - expect) / reps as f64).sqrt();
            let dev = (got - expect).abs();
            if dev > 1e-12 {
                worst = worst.max(if se > 0.0 { dev / se } else { f64::INFINITY });
            }
        }
    }
    worst
}

