use super::finite::*;
use super::*;
use crate::rng::Streams;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn f(u: f64) -> f64 {
    crate::special::mh_accept(u)
}

#[test]
fn exact_kernels_leave_target_invariant() {
    let pi = normalised(&LOG_TARGET);
    for surrogate in [None, Some(&LOG_SURROGATE[..])] {
        let v = stationary(&matrix_exact(&LOG_TARGET, surrogate));
        for i in 0..5 {
            assert!((v[i] - pi[i]).abs() < 1e-12, "{surrogate:?}: {} vs {}", v[i], pi[i]);
        }
    }
}

#[test]
fn noisy_kernels_leave_target_marginal_invariant() {
    let table = Table { values: LOG_TARGET.to_vec() };
    let noise = GridNoise::new(&table, &NOISE_W, &NOISE_P);
    let pi = normalised(&LOG_TARGET);
    for surrogate in [None, Some(&LOG_SURROGATE[..])] {
        let v = stationary(&matrix_noisy(&LOG_TARGET, surrogate, &noise));
        for i in 0..5 {
            let marginal: f64 = (0..4).map(|a| v[i * 4 + a]).sum();
            assert!((marginal - pi[i]).abs() < 1e-10);
            for a in 0..4 {
                let joint = pi[i] * noise.p[a] * noise.w[a].exp();
                assert!((v[i * 4 + a] - joint).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn kernel_steps_realise_the_transition_matrices() {
    let target = Table { values: LOG_TARGET.to_vec() };
    let surrogate = Table { values: LOG_SURROGATE.to_vec() };
    let noise = GridNoise::new(&target, &NOISE_W, &NOISE_P);
    let check = |k: Kernel, p: &DMatrix<f64>, n: Option<&GridNoise>, seed| {
        let z = max_step_deviation(k, p, n, 40_000, seed);
        assert!(z < 5.0, "{}: {z} standard errors", k.name());
    };
    check(Kernel::Rwm { target: &target }, &matrix_exact(&LOG_TARGET, None), None, 1);
    check(
        Kernel::Da { target: &target, surrogate: &surrogate },
        &matrix_exact(&LOG_TARGET, Some(&LOG_SURROGATE)),
        None,
        2,
    );
    check(
        Kernel::Pm { prior: None, estimator: &noise },
        &matrix_noisy(&LOG_TARGET, None, &noise),
        Some(&noise),
        3,
    );
    check(
        Kernel::Dapm { prior: None, surrogate: &surrogate, estimator: &noise },
        &matrix_noisy(&LOG_TARGET, Some(&LOG_SURROGATE), &noise),
        Some(&noise),
        4,
    );
}

fn std_normal(d: usize) -> FnDensity<impl Fn(&[f64]) -> f64 + Sync> {
    FnDensity::new(d, |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>())
}

/// Exact log-density plus `N(-σ²/2, σ²)` noise.
struct Noisy<'a, T: LogDensity> {
    target: &'a T,
    sigma2: f64,
}

impl<T: LogDensity> LikelihoodEstimator for Noisy<'_, T> {
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
}

#[test]
fn exact_surrogate_and_zero_noise_reproduce_rwm_bit_for_bit() {
    let target = std_normal(5);
    let exact = Noisy { target: &target, sigma2: 0.0 };
    let prop = ProposalSpec::isotropic(0.9).unwrap();
    let cfg = ChainConfig::new(5_000, 42);
    let x0 = [0.5, -0.3, 1.0, 0.0, 0.2];
    let rwm = run_chain(&Kernel::Rwm { target: &target }, &prop, &x0, &cfg).unwrap();
    let others = [
        Kernel::Da { target: &target, surrogate: &target },
        Kernel::Pm { prior: None, estimator: &exact },
        Kernel::Dapm { prior: None, surrogate: &target, estimator: &exact },
    ];
    for k in others {
        let t = run_chain(&k, &prop, &x0, &cfg).unwrap();
        assert_eq!(t.samples, rwm.samples, "{}", k.name());
        assert_eq!(t.counters.accepted, rwm.counters.accepted);
    }
}

#[test]
fn flat_target_always_accepts() {
    let flat = FnDensity::new(2, |_: &[f64]| 0.0);
    let t = run_chain(&Kernel::Rwm { target: &flat }, &ProposalSpec::isotropic(3.0).unwrap(), &[0.0, 0.0], &ChainConfig::new(1000, 1)).unwrap();
    assert_eq!(t.counters.accepted, 1000);
}

#[test]
fn one_dimensional_rwm_acceptance() {
    let target = std_normal(1);
    let t = run_chain(&Kernel::Rwm { target: &target }, &ProposalSpec::isotropic(2.38).unwrap(), &[0.0], &ChainConfig::new(1_000_000, 9)).unwrap();
    assert!((t.counters.alpha12() - 0.44).abs() < 0.02, "{}", t.counters.alpha12());
}

#[test]
fn pseudo_marginal_retained_noise_is_shifted_upwards() {
    // At stationarity the retained log-noise is N(σ²/2, σ²).
    let target = std_normal(1);
    let sigma2 = 1.0;
    let est = Noisy { target: &target, sigma2 };
    let mut cfg = ChainConfig::new(1_000_000, 13);
    cfg.burn_in = 1000;
    let t = run_chain(&Kernel::Pm { prior: None, estimator: &est }, &ProposalSpec::isotropic(2.0).unwrap(), &[0.0], &cfg).unwrap();
    let w: Vec<f64> = (0..t.len()).map(|i| t.log_phat[i] - target.log_density(t.sample(i))).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    // Autocorrelated draws: compare against an ESS-based standard error.
    let ess = crate::diagnostics::ess_geyer(&w).unwrap().ess;
    let se = (sigma2 / ess).sqrt();
    assert!((mean - 0.5 * sigma2).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn delayed_acceptance_never_beats_rwm_pointwise() {
    let mut rng = crate::rng::substream(3, 0);
    for _ in 0..10_000 {
        let v: [f64; 4] = std::array::from_fn(|_| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let (px, py, ax, ay) = (v[0], v[1], v[2], v[3]);
        let da = f(stage_one_log_ratio(ax, ay)) * f(stage_two_log_ratio(px, py, ax, ay));
        assert!(da <= f(py - px) + 1e-15);
    }
}

#[test]
fn accounting_and_cache_coherence() {
    let target = std_normal(3);
    let surrogate = FnDensity::new(3, |x: &[f64]| -0.4 * x.iter().map(|v| v * v).sum::<f64>() + 0.1 * x[0]);
    let est = Noisy { target: &target, sigma2: 1.5 };
    let prop = ProposalSpec::isotropic(1.2).unwrap();
    for kernel in [
        Kernel::Da { target: &target, surrogate: &surrogate },
        Kernel::Dapm { prior: None, surrogate: &surrogate, estimator: &est },
        Kernel::Pm { prior: None, estimator: &est },
    ] {
        let mut streams = Streams::new(5);
        let mut state = kernel.init_state(&[0.1, 0.2, 0.3], &mut streams).unwrap();
        let mut c = Counters::default();
        let mut scratch = Vec::new();
        for _ in 0..20_000 {
            let r = kernel.step(&mut state, &prop, &mut streams, &mut scratch);
            assert!(!r.stage2_attempted || r.stage1_accepted);
            assert_eq!(r.squared_jump == 0.0, !r.accepted());
            c.add(&r);
            if kernel.has_surrogate() {
                assert_eq!(state.log_pa.to_bits(), surrogate.log_density(&state.x).to_bits());
            }
        }
        if kernel.has_surrogate() {
            assert_eq!(c.expensive_evals, c.stage1_accepts);
            assert_eq!(c.stage2_attempts, c.stage1_accepts);
        } else {
            assert_eq!(c.expensive_evals, c.iterations);
        }
    }
}

#[test]
fn support_violations_skip_the_estimator() {
    let prior = FnDensity::new(1, |x: &[f64]| if x[0].abs() <= 1.0 { 0.0 } else { f64::NEG_INFINITY });
    let target = std_normal(1);
    let est = Noisy { target: &target, sigma2: 1.0 };
    let kernel = Kernel::Pm { prior: Some(&prior), estimator: &est };
    let t = run_chain(&kernel, &ProposalSpec::isotropic(5.0).unwrap(), &[0.0], &ChainConfig::new(10_000, 2)).unwrap();
    assert!(t.counters.expensive_evals < t.counters.iterations);
    assert!(t.samples.iter().all(|x| x.abs() <= 1.0));
}

#[test]
fn run_chain_shape_and_reproducibility() {
    let target = std_normal(2);
    let kernel = Kernel::Rwm { target: &target };
    let prop = ProposalSpec::isotropic(1.0).unwrap();
    let t = run_chain(&kernel, &prop, &[0.0, 0.0], &ChainConfig::new(1, 3)).unwrap();
    assert_eq!(t.len(), 2);
    let mut cfg = ChainConfig::new(100, 3);
    cfg.thin = 10;
    let a = run_chain(&kernel, &prop, &[0.0, 0.0], &cfg).unwrap();
    let b = run_chain(&kernel, &prop, &[0.0, 0.0], &cfg).unwrap();
    assert_eq!(a.len(), 11);
    assert_eq!(a.samples, b.samples);
    assert!(run_chain(&kernel, &prop, &[0.0, 0.0], &ChainConfig::new(0, 3)).is_err());
    assert!(run_chain(&kernel, &prop, &[0.0], &ChainConfig::new(5, 3)).is_err());
}

#[test]
fn trace_csv_layout() {
    let target = std_normal(2);
    let t = run_chain(&Kernel::Rwm { target: &target }, &ProposalSpec::isotropic(1.0).unwrap(), &[0.0, 0.0], &ChainConfig::new(3, 3)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf, "seed = 3").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# seed = 3");
    assert_eq!(lines[1], "iter,x_1,x_2,log_pa,log_phat");
    assert_eq!(lines.len(), 6);
    assert!(lines[2].starts_with("0,0.0,0.0,NaN,"));
}
