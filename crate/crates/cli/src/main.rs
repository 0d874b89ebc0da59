mod output;

use clap::{Args, Parser, Subcommand};
use delayed_acceptance::diagnostics::summarize;
use delayed_acceptance::error::Error;
use delayed_acceptance::heat::{pilot_run, qs_moments, Forward, HeatConfig, HeatProblem};
use delayed_acceptance::kernels::{run_chain, ChainConfig, CostModel, Kernel, ProposalSpec};
use delayed_acceptance::mjp::lna::DEFAULT_DT;
use delayed_acceptance::mjp::oracle::{immigration_death_kalman, FiniteHmm, LinearGaussianSsm};
use delayed_acceptance::mjp::study::reference_params;
use delayed_acceptance::mjp::{
    bootstrap_pf, lna_marginal_loglik, read_dataset, run_lv_study, simulate_dataset, write_dataset, DatasetHeader, ImmigrationDeath,
    LvCosts, LvStudyConfig, ObservationSeries, StateSpaceModel,
};
use delayed_acceptance::parallel::parallel_map;
use delayed_acceptance::product::{
    logistic_betas, run_logistic_study, synthetic_estimator, LogisticProduct, LogisticSurrogateParams, ProductNormal, StudyConfig, PM_SCALE,
    RWM_SCALE,
};
use delayed_acceptance::rng::substream;
use delayed_acceptance::theory::{self, log_grid, ApproxQuality, Mode};
use delayed_acceptance::tuner::{tune_lv, EssMetric, TunerConfig};
use output::{header, load_config, num, opt, write_csv, write_json};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(_) | Error::Simulation(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "damcmc", version, about = "Delayed-acceptance MCMC: theory calculator, samplers and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or an earlier output of the same command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Limiting acceptance rates and efficiencies: a grid CSV, or the optimum as JSON.
    Theory(TheoryArgs),
    /// Surrogate quality (beta1, beta2) by quadrature.
    Betas(BetasArgs),
    /// Run one chain on the product-normal target and write its trace.
    Sample(SampleArgs),
    /// Three-step tuning of particles and scaling on Lotka-Volterra data.
    Tune(TuneArgs),
    /// Simulation studies.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Particle filter unbiasedness against exact likelihoods.
    PfCheck(PfCheckArgs),
    /// LNA likelihood against a closed-form Kalman filter, and step halving.
    LnaCheck(LnaCheckArgs),
}

#[derive(Subcommand)]
enum Experiment {
    /// Gaussian target with logistic surrogates.
    Logistic(LogisticArgs),
    /// Heat-equation inverse problem: increment moments across scalings.
    Heat(HeatArgs),
    /// Lotka-Volterra scaling by particle-count grid.
    Lv(LvArgs),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TheoryConfig {
    beta1: f64,
    beta2: f64,
    eta: f64,
    mode: Mode,
    optimize: bool,
    /// Hold σ² fixed while optimising μ.
    sigma2: Option<f64>,
    /// Grid values; log-spaced over the optimiser's search box when absent.
    mus: Option<Vec<f64>>,
    sigma2s: Option<Vec<f64>>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.0,
            eta: 0.01,
            mode: Mode::Dapm,
            optimize: false,
            sigma2: None,
            mus: None,
            sigma2s: None,
        }
    }
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// dapm or da.
    #[arg(long)]
    mode: Option<Mode>,
    /// Report the optimum instead of a grid.
    #[arg(long)]
    optimize: bool,
    /// Fix σ² when optimising.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long = "sigma2-grid", value_delimiter = ',')]
    sigma2_grid: Option<Vec<f64>>,
}

fn theory_cmd(a: TheoryArgs) -> Result<(), CliError> {
    let mut cfg: TheoryConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.beta1, a.beta1);
    set(&mut cfg.beta2, a.beta2);
    set(&mut cfg.eta, a.eta);
    set(&mut cfg.mode, a.mode);
    cfg.optimize |= a.optimize;
    if a.sigma2.is_some() {
        cfg.sigma2 = a.sigma2;
    }
    if a.mu.is_some() {
        cfg.mus = a.mu;
    }
    if a.sigma2_grid.is_some() {
        cfg.sigma2s = a.sigma2_grid;
    }
    let q = ApproxQuality::new(cfg.beta1, cfg.beta2)?;
    if cfg.optimize {
        let o = match (cfg.mode, cfg.sigma2) {
            (Mode::Dapm, Some(s2)) => theory::optimize_mu_at(q, cfg.eta, s2)?,
            (mode, _) => theory::optimize(q, cfg.eta, mode)?,
        };
        let p = o.point;
        let report = serde_json::json!({
            "mu": p.tuning.mu,
            "sigma2": p.tuning.sigma2,
            "eta": p.tuning.eta,
            "beta1": q.beta1,
            "beta2": q.beta2,
            "alpha1": p.alpha1,
            "alpha2given1": p.alpha2given1,
            "alpha12": p.alpha12,
            "eff": p.eff,
            "eff_rel": p.eff_rel,
            "on_boundary": o.on_boundary,
        });
        return write_json(a.common.out.as_deref(), "theory", &cfg, report);
    }
    let mus = cfg.mus.clone().unwrap_or_else(|| log_grid(theory::MU_RANGE, 40));
    let sigma2s = match cfg.mode {
        Mode::Da => vec![0.0],
        Mode::Dapm => cfg.sigma2s.clone().unwrap_or_else(|| log_grid(theory::SIGMA2_RANGE, 30)),
    };
    let rows: Vec<Vec<String>> = theory::scan_grid(&mus, &sigma2s, q, cfg.eta, cfg.mode)?
        .iter()
        .map(|p| {
            vec![
                num(p.tuning.mu),
                num(p.tuning.sigma2),
                num(q.beta1),
                num(q.beta2),
                num(p.tuning.eta),
                num(p.alpha1),
                num(p.alpha2given1),
                num(p.alpha12),
                num(p.eff),
                num(p.eff_rel),
            ]
        })
        .collect();
    let cols = ["mu", "sigma2", "beta1", "beta2", "eta", "alpha1", "alpha2given1", "alpha12", "eff", "eff_rel"];
    write_csv(a.common.out.as_deref(), &header("theory", &cfg)?, &cols, &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BetasConfig {
    surrogate: String,
    phi1: f64,
    phi2: f64,
}

impl Default for BetasConfig {
    fn default() -> Self {
        Self { surrogate: "logistic".into(), phi1: 0.0, phi2: 1.8 }
    }
}

#[derive(Args)]
struct BetasArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    surrogate: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    phi1: Option<f64>,
    #[arg(long)]
    phi2: Option<f64>,
}

fn betas_cmd(a: BetasArgs) -> Result<(), CliError> {
    let mut cfg: BetasConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.surrogate, a.surrogate);
    set(&mut cfg.phi1, a.phi1);
    set(&mut cfg.phi2, a.phi2);
    if cfg.surrogate != "logistic" {
        return Err(CliError::Config(format!("unknown surrogate '{}' (expected logistic)", cfg.surrogate)));
    }
    let q = logistic_betas(LogisticSurrogateParams::new(cfg.phi1, cfg.phi2)?)?;
    write_json(a.common.out.as_deref(), "betas", &cfg, serde_json::json!({ "beta1": q.beta1, "beta2": q.beta2 }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SampleConfig {
    kernel: String,
    target: String,
    d: usize,
    n: usize,
    /// Per-coordinate proposal scale; defaults to 2.38/√d (RWM, DA) or
    /// 2.56/√d (PM, DAPM).
    scale: Option<f64>,
    sigma2: f64,
    phi1: f64,
    phi2: f64,
    /// Surrogate cost relative to one exact evaluation.
    eta: f64,
    burn_in: usize,
    thin: usize,
    seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            kernel: "rwm".into(),
            target: "normal".into(),
            d: 10,
            n: 10_000,
            scale: None,
            sigma2: 2.0,
            phi1: 0.0,
            phi2: 1.8,
            eta: 0.01,
            burn_in: 0,
            thin: 1,
            seed: 1,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// rwm, pm, da or dapm.
    #[arg(long)]
    kernel: Option<String>,
    /// Only `normal` (standard normal product) is available.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    phi1: Option<f64>,
    #[arg(long)]
    phi2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON run summary (ESS, ESJD, acceptance rates, modeled cost).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn sample_cmd(a: SampleArgs) -> Result<(), CliError> {
    let mut cfg: SampleConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.kernel, a.kernel);
    set(&mut cfg.target, a.target);
    set(&mut cfg.d, a.d);
    set(&mut cfg.n, a.n);
    if a.scale.is_some() {
        cfg.scale = a.scale;
    }
    set(&mut cfg.sigma2, a.sigma2);
    set(&mut cfg.phi1, a.phi1);
    set(&mut cfg.phi2, a.phi2);
    set(&mut cfg.eta, a.eta);
    set(&mut cfg.burn_in, a.burn_in);
    set(&mut cfg.thin, a.thin);
    set(&mut cfg.seed, a.seed);
    if cfg.target != "normal" {
        return Err(CliError::Config(format!("unknown target '{}' (expected normal)", cfg.target)));
    }
    if cfg.d == 0 || cfg.n == 0 {
        return Err(CliError::Config("d and n must both be at least 1".into()));
    }
    let target = ProductNormal { dim: cfg.d };
    let surrogate = LogisticProduct { dim: cfg.d, params: LogisticSurrogateParams::new(cfg.phi1, cfg.phi2)? };
    let estimator = synthetic_estimator(target, cfg.sigma2)?;
    let (kernel, base, expensive) = match cfg.kernel.as_str() {
        "rwm" => (Kernel::Rwm { target: &target }, RWM_SCALE, 1.0),
        "da" => (Kernel::Da { target: &target, surrogate: &surrogate }, RWM_SCALE, 1.0),
        "pm" => (Kernel::Pm { prior: None, estimator: &estimator }, PM_SCALE, 1.0 / cfg.sigma2),
        "dapm" => (Kernel::Dapm { prior: None, surrogate: &surrogate, estimator: &estimator }, PM_SCALE, 1.0 / cfg.sigma2),
        other => return Err(CliError::Config(format!("unknown kernel '{other}' (expected rwm, pm, da or dapm)"))),
    };
    let scale = cfg.scale.unwrap_or(base / (cfg.d as f64).sqrt());
    let prop = ProposalSpec::isotropic(scale)?;
    let chain = ChainConfig { n_iter: cfg.n, thin: cfg.thin, burn_in: cfg.burn_in, seed: cfg.seed };
    let x0: Vec<f64> = {
        use rand::Rng;
        let mut rng = substream(cfg.seed, 7);
        (0..cfg.d).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
    };
    let trace = run_chain(&kernel, &prop, &x0, &chain)?;
    let mut w = output::open(a.common.out.as_deref())?;
    trace.write_csv(&mut w, &header("sample", &cfg)?)?;
    w.flush()?;
    eprintln!("{}: alpha12 {:.4}, {:.2} s", kernel.name(), trace.counters.alpha12(), trace.wall_seconds);
    if let Some(path) = a.summary {
        let surrogate_cost = if kernel.has_surrogate() { cfg.eta } else { 0.0 };
        let summary = summarize(&trace, CostModel { surrogate: surrogate_cost, expensive })?;
        let mut report = serde_json::to_value(&summary).map_err(|e| CliError::Numeric(e.to_string()))?;
        report["counters"] = trace.summary_json()["counters"].clone();
        write_json(Some(&path), "sample", &cfg, report)?;
    }
    Ok(())
}

fn load_series(dataset: Option<&Path>, data: &DatasetHeader) -> Result<ObservationSeries, CliError> {
    match dataset {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Ok(read_dataset(std::io::BufReader::new(f))?.1)
        }
        None => Ok(simulate_dataset(data)?.0),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TuneConfig {
    /// Dataset file; when absent the data are simulated from `data`.
    dataset: Option<PathBuf>,
    data: DatasetHeader,
    tuner: TunerConfig,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    short_run_len: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// min or harmonic.
    #[arg(long)]
    metric: Option<EssMetric>,
    /// Time LNA and particle evaluations on this machine.
    #[arg(long)]
    calibrate_costs: bool,
}

fn tune_cmd(a: TuneArgs) -> Result<(), CliError> {
    let mut cfg: TuneConfig = load_config(a.common.config.as_deref())?;
    if a.dataset.is_some() {
        cfg.dataset = a.dataset;
    }
    set(&mut cfg.tuner.seed, a.seed);
    set(&mut cfg.tuner.short_run_len, a.short_run_len);
    set(&mut cfg.tuner.replicates, a.replicates);
    set(&mut cfg.tuner.metric, a.metric);
    let series = load_series(cfg.dataset.as_deref(), &cfg.data)?;
    if a.calibrate_costs {
        cfg.tuner.costs = LvCosts::calibrate(&series, &reference_params().x, cfg.tuner.seed);
    }
    let report = tune_lv(&series, &cfg.tuner)?;
    eprintln!("m* = {}, gamma = {}, m = {}", report.m_star, report.gamma_hat, report.m_hat);
    let value = serde_json::to_value(&report).map_err(|e| CliError::Numeric(e.to_string()))?;
    write_json(a.common.out.as_deref(), "tune", &cfg, value)
}

#[derive(Args)]
struct ExperimentCommon {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    /// Worker threads for independent cells.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct LogisticArgs {
    #[command(flatten)]
    exp: ExperimentCommon,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    scalings: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigma2s: Option<Vec<f64>>,
}

fn logistic_cmd(a: LogisticArgs) -> Result<(), CliError> {
    let mut cfg: StudyConfig = load_config(a.exp.common.config.as_deref())?;
    cfg.seed = a.exp.seed;
    set(&mut cfg.jobs, a.exp.jobs);
    set(&mut cfg.dim, a.dim);
    set(&mut cfg.n_iter, a.n_iter);
    set(&mut cfg.scalings, a.scalings);
    set(&mut cfg.sigma2s, a.sigma2s);
    let out = run_logistic_study(&cfg)?;
    let eta_cols: Vec<String> = cfg.etas.iter().map(|e| format!("ess_double_star_{e}")).collect();
    let mut cols = vec!["algorithm", "phi1", "phi2", "beta1", "beta2", "scaling", "sigma2", "alpha1", "alpha2given1", "ess_star"];
    cols.extend(eta_cols.iter().map(String::as_str));
    let mut rows = Vec::new();
    for b in out.rwm.iter().chain(out.pm.iter()) {
        let mut r = vec![b.algorithm.to_uppercase(), String::new(), String::new(), String::new(), String::new(), num(1.0), opt(b.sigma2), num(b.acceptance), String::new(), num(1.0)];
        r.extend(cfg.etas.iter().map(|_| String::new()));
        rows.push(r);
    }
    for s in &out.rows {
        let name = match s.algorithm {
            Mode::Da => "DA",
            Mode::Dapm => "DAPM",
        };
        let mut r = vec![
            name.to_string(),
            num(s.phi1),
            num(s.phi2),
            num(s.beta1),
            num(s.beta2),
            num(s.scaling),
            opt(s.sigma2),
            num(s.alpha1),
            num(s.alpha2given1),
            num(s.ess_star),
        ];
        r.extend(s.ess_double_star.iter().map(|(_, v)| num(*v)));
        rows.push(r);
    }
    write_csv(a.exp.common.out.as_deref(), &header("experiment logistic", &cfg)?, &cols, &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct HeatExperimentConfig {
    problem: HeatConfig,
    pilot_iter: usize,
    lambdas: Vec<f64>,
    n_samples: usize,
    surrogate: Forward,
    seed: u64,
    jobs: usize,
}

impl Default for HeatExperimentConfig {
    fn default() -> Self {
        Self {
            problem: HeatConfig::default(),
            pilot_iter: 20_000,
            lambdas: vec![0.05, 0.1, 0.2],
            n_samples: 4000,
            surrogate: Forward::Fd,
            seed: 1,
            jobs: 1,
        }
    }
}

#[derive(Args)]
struct HeatArgs {
    #[command(flatten)]
    exp: ExperimentCommon,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    pilot_iter: Option<usize>,
    /// Raw (Q, S) samples for plotting.
    #[arg(long)]
    raw: Option<PathBuf>,
}

fn heat_cmd(a: HeatArgs) -> Result<(), CliError> {
    let mut cfg: HeatExperimentConfig = load_config(a.exp.common.config.as_deref())?;
    cfg.seed = a.exp.seed;
    set(&mut cfg.jobs, a.exp.jobs);
    set(&mut cfg.lambdas, a.lambdas);
    set(&mut cfg.n_samples, a.n_samples);
    set(&mut cfg.pilot_iter, a.pilot_iter);
    let problem = HeatProblem::synthetic(&cfg.problem)?;
    let pilot = pilot_run(&problem, cfg.pilot_iter, cfg.seed)?;
    eprintln!("pilot: lambda {:.4}, acceptance {:.3}", pilot.lambda, pilot.acceptance);
    let moments = parallel_map(&cfg.lambdas, cfg.jobs, |&l| qs_moments(&problem, &pilot.final_state, l, cfg.n_samples, cfg.seed, cfg.surrogate))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let head = header("experiment heat", &cfg)?;
    let rows: Vec<Vec<String>> =
        moments.iter().map(|m| vec![num(m.lambda), num(m.mean_s_over_l2), num(m.var_s_over_l2), opt(m.corr_qs)]).collect();
    write_csv(a.exp.common.out.as_deref(), &head, &["lambda", "meanS_over_l2", "varS_over_l2", "corrQS"], &rows)?;
    if let Some(raw) = a.raw {
        let rows: Vec<Vec<String>> =
            moments.iter().flat_map(|m| m.samples.iter().map(move |(q, s)| vec![num(m.lambda), num(*q), num(*s)])).collect();
        write_csv(Some(&raw), &head, &["lambda", "Q", "S"], &rows)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct LvExperimentConfig {
    dataset: Option<PathBuf>,
    data: DatasetHeader,
    study: LvStudyConfig,
}

#[derive(Args)]
struct LvArgs {
    #[command(flatten)]
    exp: ExperimentCommon,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Write the simulated dataset here.
    #[arg(long)]
    save_dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    n_iter: Option<usize>,
    /// Modeled seconds per cell, replacing --n-iter.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    calibrate_costs: bool,
}

fn lv_cmd(a: LvArgs) -> Result<(), CliError> {
    let mut cfg: LvExperimentConfig = load_config(a.exp.common.config.as_deref())?;
    cfg.study.seed = a.exp.seed;
    set(&mut cfg.study.jobs, a.exp.jobs);
    if a.dataset.is_some() {
        cfg.dataset = a.dataset;
    }
    set(&mut cfg.study.gammas, a.gamma);
    set(&mut cfg.study.ms, a.m);
    set(&mut cfg.study.n_iter, a.n_iter);
    if a.budget.is_some() {
        cfg.study.budget_seconds = a.budget;
    }
    let series = load_series(cfg.dataset.as_deref(), &cfg.data)?;
    if let Some(p) = a.save_dataset {
        let (simulated, _) = simulate_dataset(&cfg.data)?;
        write_dataset(output::open(Some(&p))?, &cfg.data, &simulated)?;
    }
    if a.calibrate_costs {
        cfg.study.costs = LvCosts::calibrate(&series, &reference_params().x, cfg.study.seed);
    }
    let out = run_lv_study(&series, &cfg.study)?;
    let rows: Vec<Vec<String>> = out
        .rows()
        .iter()
        .map(|r| vec![num(r.gamma), r.m.to_string(), num(r.sigma2_at_median), num(r.mess_per_s), num(r.alpha1), num(r.alpha2given1)])
        .collect();
    let cols = ["gamma", "m", "sigma2_at_median", "mESS_per_s", "alpha1", "alpha2given1"];
    write_csv(a.exp.common.out.as_deref(), &header("experiment lv", &cfg)?, &cols, &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct PfCheckConfig {
    reps: usize,
    /// Particles for the linear-Gaussian model (the finite HMM uses one).
    m: usize,
    n_obs: usize,
    seed: u64,
}

impl Default for PfCheckConfig {
    fn default() -> Self {
        Self { reps: 10_000, m: 20, n_obs: 10, seed: 1 }
    }
}

#[derive(Args)]
struct PfCheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn ratio_stats<M: StateSpaceModel>(model: &M, exact: f64, m: usize, reps: usize, seed: u64) -> Result<serde_json::Value, CliError> {
    let mut rng = substream(seed, 0);
    let mut r = Vec::with_capacity(reps);
    for _ in 0..reps {
        r.push((bootstrap_pf(model, m, &mut rng)? - exact).exp());
    }
    let n = reps as f64;
    let mean = r.iter().sum::<f64>() / n;
    let se = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    Ok(serde_json::json!({ "exact_loglik": exact, "particles": m, "mean_ratio": mean, "se": se, "z": (mean - 1.0) / se }))
}

fn pf_check_cmd(a: PfCheckArgs) -> Result<(), CliError> {
    let mut cfg: PfCheckConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.reps, a.reps);
    set(&mut cfg.m, a.m);
    set(&mut cfg.seed, a.seed);
    if cfg.reps < 2 || cfg.m == 0 || cfg.n_obs == 0 {
        return Err(CliError::Config("need reps >= 2, m >= 1 and n_obs >= 1".into()));
    }
    let hmm = FiniteHmm::example();
    let ssm = LinearGaussianSsm::example(cfg.n_obs);
    let report = serde_json::json!({
        "finite_hmm": ratio_stats(&hmm, hmm.log_likelihood(), 1, cfg.reps, cfg.seed)?,
        "linear_gaussian": ratio_stats(&ssm, ssm.kalman_loglik(), cfg.m, cfg.reps, cfg.seed + 1)?,
    });
    write_json(a.common.out.as_deref(), "pf-check", &cfg, report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct LnaCheckConfig {
    dt: f64,
    data: DatasetHeader,
}

impl Default for LnaCheckConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, data: DatasetHeader::default() }
    }
}

#[derive(Args)]
struct LnaCheckArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dt: Option<f64>,
}

fn lna_check_cmd(a: LnaCheckArgs) -> Result<(), CliError> {
    let mut cfg: LnaCheckConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.dt, a.dt);
    let net = ImmigrationDeath { c1: 20.0, c2: 0.5 };
    let ys = [12.0, 25.0, 31.0, 44.0, 38.0, 41.0, 35.0, 39.0, 47.0, 36.0];
    let kalman = immigration_death_kalman(&net, 10.0, &ys, 4.0);
    let wrapped: Vec<[f64; 1]> = ys.iter().map(|&y| [y]).collect();
    let lna = lna_marginal_loglik(&net, [10.0], &wrapped, [4.0], cfg.dt)?;
    let (series, _) = simulate_dataset(&cfg.data)?;
    let p = delayed_acceptance::mjp::LvParams::from_natural(cfg.data.c, cfg.data.s);
    let obs = p.obs_sd().map(|s| s * s);
    let u0 = series.u0.map(|u| u as f64);
    let coarse = lna_marginal_loglik(&p.network(), u0, &series.y, obs, cfg.dt)?;
    let fine = lna_marginal_loglik(&p.network(), u0, &series.y, obs, cfg.dt / 2.0)?;
    let report = serde_json::json!({
        "immigration_death": { "lna": lna, "kalman": kalman, "abs_diff": (lna - kalman).abs() },
        "lotka_volterra_step_halving": { "loglik_dt": coarse, "loglik_half_dt": fine, "abs_diff": (coarse - fine).abs() },
    });
    write_json(a.common.out.as_deref(), "lna-check", &cfg, report)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Theory(a) => theory_cmd(a),
        Command::Betas(a) => betas_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Experiment(Experiment::Logistic(a)) => logistic_cmd(a),
        Command::Experiment(Experiment::Heat(a)) => heat_cmd(a),
        Command::Experiment(Experiment::Lv(a)) => lv_cmd(a),
        Command::PfCheck(a) => pf_check_cmd(a),
        Command::LnaCheck(a) => lna_check_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
