//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Usage: `cargo test --release --test acceptance -- [N ...]` runs only the
//! listed criteria. `DA_LV_BUDGET` sets the modeled seconds per Lotka–Volterra
//! surface cell (default 45).

use delayed_acceptance::diagnostics::ess_geyer;
use delayed_acceptance::heat::{pilot_run, qs_moments, Forward, HeatConfig, HeatProblem};
use delayed_acceptance::kernels::finite::*;
use delayed_acceptance::kernels::{run_chain, ChainConfig, FnDensity, Kernel, LikelihoodEstimator, LogDensity, ProposalSpec};
use delayed_acceptance::mjp::lna::DEFAULT_DT;
use delayed_acceptance::mjp::oracle::{immigration_death_kalman, FiniteHmm, LinearGaussianSsm};
use delayed_acceptance::mjp::study::reference_params;
use delayed_acceptance::mjp::*;
use delayed_acceptance::product::{logistic_betas, predicted_vs_empirical, run_logistic_study, spearman, LogisticSurrogateParams, StudyConfig, REFERENCE_SURROGATES};
use delayed_acceptance::rng::substream;
use delayed_acceptance::special::mh_accept;
use delayed_acceptance::theory::{alpha1, alpha12, baselines, eff_dapm, eff_rel, ApproxQuality, Mode, TuningPoint};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

const LV_FIXTURE: &str = include_str!("fixtures/lv_dataset.csv");

/// Criteria that fail on our data for documented reasons; they still print
/// FAIL but do not fail the test run.
const KNOWN_DEVIATIONS: &[u32] = &[];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn baseline_optima() -> Outcome {
    let t = Instant::now();
    let b = baselines();
    let secs = t.elapsed().as_secs_f64();
    let pass = within(b.rwm_mu, 2.38, 0.01) && within(b.pm_mu, 2.562, 0.01) && within(b.pm_sigma2, 3.283, 0.02) && secs < 10.0;
    outcome(pass, format!("mu_rwm {:.4}, mu_pm {:.4}, sigma2_pm {:.4}, {secs:.2} s", b.rwm_mu, b.pm_mu, b.pm_sigma2))
}

const REFERENCE_BETAS: [(f64, f64); 8] =
    [(0.834, 0.834), (0.441, 0.449), (-0.042, 0.262), (-0.467, 0.649), (-0.810, 1.025), (0.535, 0.762), (0.056, 0.681), (-0.351, 0.941)];

fn beta_reproduction() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (&(p1, p2), &(b1, b2)) in REFERENCE_SURROGATES.iter().zip(&REFERENCE_BETAS) {
        let q = logistic_betas(LogisticSurrogateParams::new(p1, p2).unwrap()).unwrap();
        worst = worst.max((q.beta1 - b1).abs()).max((q.beta2 - b2).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 0.005 && secs < 1.0, format!("max |error| {worst:.4} over 8 pairs, {secs:.3} s"))
}

/// Monte Carlo estimates (mean, s.e.) of the Stage One and overall rates
/// from the limiting increments.
fn simulate_rates(mu: f64, sigma2: f64, q: ApproxQuality, n: usize, rng: &mut dyn RngCore) -> [(f64, f64); 2] {
    let rho = q.rho().unwrap_or(0.0);
    let root = (1.0 - rho * rho).sqrt();
    let mut sums = [0.0f64; 4];
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let z3: f64 = rng.sample(StandardNormal);
        let q_inc = -0.5 * mu * mu + mu * (rho * z1 + root * z2);
        let s_inc = 0.5 * mu * mu * q.beta1 + mu * q.beta2 * z1;
        let w = -sigma2 + (2.0 * sigma2).sqrt() * z3;
        let a = mh_accept(q_inc + s_inc);
        let b = a * mh_accept(w - s_inc);
        sums[0] += a;
        sums[1] += a * a;
        sums[2] += b;
        sums[3] += b * b;
    }
    let nf = n as f64;
    let stat = |s: f64, s2: f64| {
        let m = s / nf;
        (m, ((s2 / nf - m * m) / nf).sqrt())
    };
    [stat(sums[0], sums[1]), stat(sums[2], sums[3])]
}

fn rates_vs_monte_carlo() -> Outcome {
    let mut rng = substream(303, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mu = rng.random_range(0.5..4.0);
        let sigma2 = rng.random_range(0.0..4.0);
        let beta2: f64 = rng.random_range(0.05..1.2);
        let beta1 = rng.random_range(-beta2..beta2.min(1.0));
        let q = ApproxQuality::new(beta1, beta2).unwrap();
        let [(m1, se1), (m12, se12)] = simulate_rates(mu, sigma2, q, 10_000_000, &mut rng);
        let z1 = (alpha1(mu, q).unwrap() - m1).abs() / se1;
        let z12 = (alpha12(mu, sigma2, q).unwrap() - m12).abs() / se12;
        worst = worst.max(z1).max(z12);
    }
    outcome(worst <= 4.0, format!("largest deviation {worst:.2} s.e. over 10 settings"))
}

fn eff(mu: f64, sigma2: f64, eta: f64, q: ApproxQuality) -> f64 {
    eff_dapm(TuningPoint::new(mu, sigma2, eta).unwrap(), q).unwrap()
}

fn structural_theorems() -> Outcome {
    let t = Instant::now();
    let qualities: Vec<ApproxQuality> = [(0.0, 0.3), (0.5, 0.8), (-0.6, 1.0), (0.9, 1.5), (-0.2, 0.2)]
        .iter()
        .map(|&(a, b)| ApproxQuality::new(a, b).unwrap())
        .collect();
    let mut failures = Vec::new();

    let mus: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
    let sigmas: Vec<f64> = (0..=50).map(|i| 0.1 * i as f64).collect();
    for q in &qualities {
        let a1: Vec<f64> = mus.iter().map(|&mu| alpha1(mu, *q).unwrap()).collect();
        if a1.windows(2).any(|w| w[1] >= w[0]) {
            failures.push(format!("alpha1 not decreasing for {q:?}"));
        }
        for mu in [0.5, 1.0, 2.5, 5.0] {
            let a21: Vec<f64> = sigmas.iter().map(|&s| alpha12(mu, s * s, *q).unwrap() / alpha1(mu, *q).unwrap()).collect();
            if a21.windows(2).any(|w| w[1] >= w[0]) {
                failures.push(format!("alpha2|1 not decreasing in sigma at mu {mu}, {q:?}"));
            }
        }
    }

    let eta = 0.01;
    for q in &qualities {
        for s2 in [0.5, 2.0, 5.0] {
            let peak = mus.iter().map(|&mu| eff(mu, s2, eta, *q)).fold(0.0, f64::max);
            if eff(1e-3, s2, eta, *q) > 1e-4 * peak || eff(60.0, s2, eta, *q) > 1e-4 * peak {
                failures.push(format!("Eff does not vanish in mu at sigma2 {s2}, {q:?}"));
            }
        }
        for mu in [0.5, 1.0, 2.0, 3.0, 5.0, 8.0] {
            let grid: Vec<f64> = (1..120).map(|i| 0.05 * i as f64).collect();
            let e: Vec<f64> = grid.iter().map(|&s2| eff(mu, s2, eta, *q)).collect();
            let peak = e.iter().cloned().fold(0.0, f64::max);
            if eff(mu, 1e-9, eta, *q) > 1e-4 * peak || eff(mu, 400.0, eta, *q) > 1e-4 * peak {
                failures.push(format!("Eff does not vanish in sigma2 at mu {mu}, {q:?}"));
            }
            let falls = e.windows(2).position(|w| w[1] < w[0]);
            if let Some(k) = falls {
                if e[k..].windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
                    failures.push(format!("more than one sigma2 mode at mu {mu}, {q:?}"));
                }
            }
        }
    }

    let mut prop4_worst: f64 = f64::NEG_INFINITY;
    for beta1 in [1.1, 1.5, 2.0, 3.0] {
        for extra in [0.0, 0.5, 2.0] {
            let q = ApproxQuality::new(beta1, beta1 + extra).unwrap();
            for &mu in mus.iter().step_by(5) {
                for s2 in [0.25, 1.0, 2.0, 3.3, 5.0] {
                    let r = eff_rel(TuningPoint::new(mu, s2, 0.0).unwrap(), q, Mode::Dapm).unwrap();
                    prop4_worst = prop4_worst.max(r * beta1);
                }
            }
        }
    }
    if prop4_worst > 1.0 + 1e-9 {
        failures.push(format!("Eff_rel * beta1 reaches {prop4_worst:.4}"));
    }
    let secs = t.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("took {secs:.1} s"));
    }
    let detail = if failures.is_empty() {
        format!("monotone rates, vanishing and unimodal Eff, max beta1*Eff_rel {prop4_worst:.3}, {secs:.1} s")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn simulation_vs_theory() -> Outcome {
    let t = Instant::now();
    let cfg = StudyConfig {
        surrogates: REFERENCE_SURROGATES.to_vec(),
        scalings: vec![1.0, 2.0],
        sigma2s: vec![2.0],
        etas: vec![0.0],
        n_iter: 1_000_000,
        seed: 5,
        ..Default::default()
    };
    let out = run_logistic_study(&cfg).unwrap();
    let row = |mode: Mode| {
        out.rows
            .iter()
            .find(|r| r.algorithm == mode && r.phi1 == 0.0 && r.phi2 == 1.8 && r.scaling == 2.0)
            .expect("reference cell")
    };
    let (dapm, da) = (row(Mode::Dapm), row(Mode::Da));
    let cmp = predicted_vs_empirical(&out.rows).unwrap();
    let pred: Vec<f64> = cmp.iter().map(|c| c.rel_eff.0).collect();
    let emp: Vec<f64> = cmp.iter().map(|c| c.rel_eff.1).collect();
    let rho = spearman(&pred, &emp);
    let pass = within(dapm.alpha1, 0.0311, 0.006)
        && within(dapm.alpha2given1, 0.286, 0.04)
        && within(da.alpha1, 0.041, 0.008)
        && within(da.alpha2given1, 0.738, 0.06)
        && rho > 0.8;
    outcome(
        pass,
        format!(
            "DAPM alpha1 {:.4} alpha2|1 {:.3}; DA alpha1 {:.4} alpha2|1 {:.3}; Spearman {rho:.3} over {} cells; {:.0} s",
            dapm.alpha1,
            dapm.alpha2given1,
            da.alpha1,
            da.alpha2given1,
            cmp.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

/// Exact log-density returned as a noiseless estimate.
struct Noiseless<'a, T>(&'a T);

impl<T: LogDensity> LikelihoodEstimator for Noiseless<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn estimate_log(&self, x: &[f64], _rng: &mut dyn RngCore) -> f64 {
        self.0.log_density(x)
    }
}

fn stationarity_oracles() -> Outcome {
    let pi = normalised(&LOG_TARGET);
    let target = Table { values: LOG_TARGET.to_vec() };
    let surrogate = Table { values: LOG_SURROGATE.to_vec() };
    let noise = GridNoise::new(&target, &NOISE_W, &NOISE_P);
    let mut worst: f64 = 0.0;
    for s in [None, Some(&LOG_SURROGATE[..])] {
        let v = stationary(&matrix_exact(&LOG_TARGET, s));
        worst = (0..5).map(|i| (v[i] - pi[i]).abs()).fold(worst, f64::max);
        let v = stationary(&matrix_noisy(&LOG_TARGET, s, &noise));
        for i in 0..5 {
            for a in 0..4 {
                worst = worst.max((v[i * 4 + a] - pi[i] * noise.p[a] * noise.w[a].exp()).abs());
            }
        }
    }
    let z = [
        max_step_deviation(Kernel::Rwm { target: &target }, &matrix_exact(&LOG_TARGET, None), None, 40_000, 61),
        max_step_deviation(Kernel::Da { target: &target, surrogate: &surrogate }, &matrix_exact(&LOG_TARGET, Some(&LOG_SURROGATE)), None, 40_000, 62),
        max_step_deviation(Kernel::Pm { prior: None, estimator: &noise }, &matrix_noisy(&LOG_TARGET, None, &noise), Some(&noise), 40_000, 63),
        max_step_deviation(
            Kernel::Dapm { prior: None, surrogate: &surrogate, estimator: &noise },
            &matrix_noisy(&LOG_TARGET, Some(&LOG_SURROGATE), &noise),
            Some(&noise),
            40_000,
            64,
        ),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let normal = FnDensity::new(6, |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>());
    let exact = Noiseless(&normal);
    let prop = ProposalSpec::isotropic(0.8).unwrap();
    let cfg = ChainConfig::new(20_000, 66);
    let x0 = [0.3, -0.1, 0.8, 0.0, -1.2, 0.5];
    let rwm = run_chain(&Kernel::Rwm { target: &normal }, &prop, &x0, &cfg).unwrap();
    let identical = [
        Kernel::Da { target: &normal, surrogate: &normal },
        Kernel::Pm { prior: None, estimator: &exact },
        Kernel::Dapm { prior: None, surrogate: &normal, estimator: &exact },
    ]
    .iter()
    .all(|k| {
        let t = run_chain(k, &prop, &x0, &cfg).unwrap();
        t.samples.iter().zip(&rwm.samples).all(|(a, b)| a.to_bits() == b.to_bits()) && t.samples.len() == rwm.samples.len()
    });
    outcome(
        worst <= 1e-10 && z < 5.0 && identical,
        format!("stationary error {worst:.1e}, step frequencies within {z:.2} s.e., bit-identical trajectories: {identical}"),
    )
}

fn ratio_mean_z<M: StateSpaceModel>(model: &M, exact: f64, m: usize, seed: u64) -> (f64, f64) {
    let mut rng = substream(seed, 0);
    let n = 10_000;
    let r: Vec<f64> = (0..n).map(|_| (bootstrap_pf(model, m, &mut rng).unwrap() - exact).exp()).collect();
    let mean = r.iter().sum::<f64>() / n as f64;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    (mean, (mean - 1.0).abs() / (sd / (n as f64).sqrt()))
}

fn particle_filter_unbiasedness() -> Outcome {
    let hmm = FiniteHmm::example();
    let (mh, zh) = ratio_mean_z(&hmm, hmm.log_likelihood(), 1, 71);
    let ssm = LinearGaussianSsm::example(10);
    let (ml, zl) = ratio_mean_z(&ssm, ssm.kalman_loglik(), 20, 72);
    outcome(zh <= 3.0 && zl <= 3.0, format!("HMM mean ratio {mh:.4} ({zh:.2} s.e.), linear-Gaussian {ml:.4} ({zl:.2} s.e.)"))
}

fn lna_correctness() -> Outcome {
    let net = ImmigrationDeath { c1: 20.0, c2: 0.5 };
    let ys = [12.0, 25.0, 31.0, 44.0, 38.0, 41.0, 35.0, 39.0, 47.0, 36.0];
    let exact = immigration_death_kalman(&net, 10.0, &ys, 4.0);
    let wrapped: Vec<[f64; 1]> = ys.iter().map(|&y| [y]).collect();
    let lna = lna_marginal_loglik(&net, [10.0], &wrapped, [4.0], DEFAULT_DT).unwrap();
    let kalman_gap = (lna - exact).abs();

    let (_, series) = read_dataset(LV_FIXTURE.as_bytes()).unwrap();
    let p = reference_params();
    let lv = p.network();
    let obs = p.obs_sd().map(|s| s * s);
    let u0 = series.u0.map(|u| u as f64);
    let ll = |dt: f64| lna_marginal_loglik(&lv, u0, &series.y, obs, dt).unwrap();
    let halving_gap = (ll(DEFAULT_DT) - ll(DEFAULT_DT / 2.0)).abs();
    outcome(kalman_gap <= 1e-6 && halving_gap < 1e-8, format!("LNA vs Kalman {kalman_gap:.1e}, step halving on LV {halving_gap:.1e}"))
}

fn lv_study() -> Outcome {
    let t = Instant::now();
    let budget: f64 = std::env::var("DA_LV_BUDGET").ok().and_then(|s| s.parse().ok()).unwrap_or(45.0);
    let (_, series) = read_dataset(LV_FIXTURE.as_bytes()).unwrap();
    let cfg = LvStudyConfig { budget_seconds: Some(budget), seed: 9, ..Default::default() };
    let costs = cfg.costs;
    let out = run_lv_study(&series, &cfg).unwrap();
    let sigma2_200 = out.sigma2_at_median.iter().find(|(m, _)| *m == 200).map(|p| p.1).unwrap();
    let best = out.best().unwrap().clone();
    let side = |alg, seed| {
        let a1 = stage_one_rate(&series, &out.pilot, 0.9, 400, seed).unwrap();
        let n = iterations_for_budget(alg, a1, 200, 4.0 * budget, costs);
        run_lv_cell(&series, &out.pilot, alg, 0.9, 200, n, seed, costs).unwrap()
    };
    let naive = side(LvAlgorithm::Dapm, 91);
    let pm = side(LvAlgorithm::Pm, 92);
    let ok_sigma = (1.0..=4.5).contains(&sigma2_200);
    let ok_peak = [2.5, 3.0, 3.5].contains(&best.gamma) && [150, 200, 250].contains(&best.m);
    let ok_order = best.mess_per_s > naive.mess_per_s && naive.mess_per_s > pm.mess_per_s && best.mess_per_s >= 3.0 * pm.mess_per_s;
    let surface: Vec<String> = out.cells.iter().map(|c| format!("{}/{}:{:.3}", c.gamma, c.m, c.mess_per_s)).collect();
    eprintln!("    LV surface (gamma/m:mESS/s) {}", surface.join(" "));
    eprintln!("    LV sigma2 at median {:?}", out.sigma2_at_median);
    outcome(
        ok_sigma && ok_peak && ok_order,
        format!(
            "(i) sigma2(m=200) {sigma2_200:.2} [{}]; (ii) peak at gamma {} m {} [{}]; (iii) mESS/s optimal {:.3}, naive {:.3}, PM {:.3}, ratio {:.1} [{}]; {:.0} s",
            verdict(ok_sigma),
            best.gamma,
            best.m,
            verdict(ok_peak),
            best.mess_per_s,
            naive.mess_per_s,
            pm.mess_per_s,
            best.mess_per_s / pm.mess_per_s,
            verdict(ok_order),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fail"
    }
}

fn heat_diagnostics() -> Outcome {
    let problem = HeatProblem::synthetic(&HeatConfig::default()).unwrap();
    let pilot = pilot_run(&problem, 20_000, 10).unwrap();
    let ms: Vec<_> = [0.05, 0.1, 0.2].iter().map(|&l| qs_moments(&problem, &pilot.final_state, l, 4000, 11, Forward::Fd).unwrap()).collect();
    let spread = |f: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..3).map(f).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        (hi - lo) / lo.abs().min(hi.abs())
    };
    let s_mean = spread(&|i| ms[i].mean_s_over_l2);
    let s_var = spread(&|i| ms[i].var_s_over_l2);
    let s_corr = spread(&|i| ms[i].corr_qs.unwrap_or(f64::NAN));
    let qmin = ms.iter().flat_map(|m| [m.quantile_corr_q, m.quantile_corr_s.unwrap_or(0.0)]).fold(1.0, f64::min);
    let ok_pilot = (0.15..=0.35).contains(&pilot.acceptance);
    outcome(
        s_mean < 0.15 && s_var < 0.15 && s_corr < 0.15 && qmin >= 0.995 && ok_pilot,
        format!(
            "pilot acceptance {:.3}; relative spread mean {s_mean:.3}, var {s_var:.3}, corr {s_corr:.3}; min quantile correlation {qmin:.4}",
            pilot.acceptance
        ),
    )
}

fn ess_estimator() -> Outcome {
    let mut rng = substream(111, 0);
    let n = 200_000;
    let iid: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let r_iid = ess_geyer(&iid).unwrap().ess / n as f64;
    let rho = 0.5f64;
    let mut x = 0.0;
    let innov = (1.0 - rho * rho).sqrt();
    let ar: Vec<f64> = (0..n)
        .map(|_| {
            x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
            x
        })
        .collect();
    let r_ar = ess_geyer(&ar).unwrap().ess / n as f64;
    let target = (1.0 - rho) / (1.0 + rho);
    outcome(
        (0.95..=1.05).contains(&r_iid) && within(r_ar, target, 0.05 * target),
        format!("iid ESS/n {r_iid:.4}; AR(1) ESS/n {r_ar:.4} vs {target:.4}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "baseline optima", baseline_optima),
        (2, "logistic surrogate betas", beta_reproduction),
        (3, "limiting rates vs Monte Carlo", rates_vs_monte_carlo),
        (4, "structural properties", structural_theorems),
        (5, "logistic simulation vs theory", simulation_vs_theory),
        (6, "stationarity oracles", stationarity_oracles),
        (7, "particle filter unbiasedness", particle_filter_unbiasedness),
        (8, "LNA correctness", lna_correctness),
        (9, "Lotka-Volterra study", lv_study),
        (10, "heat equation increment diagnostics", heat_diagnostics),
        (11, "ESS estimator", ess_estimator),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let status = match (res.pass, KNOWN_DEVIATIONS.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known deviation)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {status}: {name} ({:.1} s) - {}", t.elapsed().as_secs_f64(), res.detail);
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
