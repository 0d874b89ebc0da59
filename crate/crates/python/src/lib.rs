//! Python bindings: the efficiency theory, the logistic surrogate qualities,
//! chain runs on the Gaussian product target, ESS, and the Lotka-Volterra
//! data and likelihood helpers.

use delayed_acceptance::diagnostics::{ess_geyer, summarize};
use delayed_acceptance::kernels::{run_chain, ChainConfig, CostModel, Kernel, ProposalSpec};
use delayed_acceptance::mjp::lna::DEFAULT_DT;
use delayed_acceptance::mjp::oracle::{FiniteHmm, LinearGaussianSsm};
use delayed_acceptance::mjp::{bootstrap_pf, simulate_dataset, DatasetHeader, LnaPosterior, LvParams, ObservationSeries, StateSpaceModel};
use delayed_acceptance::product::{
    logistic_betas as core_logistic_betas, synthetic_estimator, LogisticProduct, LogisticSurrogateParams, ProductNormal, PM_SCALE, RWM_SCALE,
};
use delayed_acceptance::rng::substream;
use delayed_acceptance::theory::{self as core_theory, EfficiencyPoint, Mode, TuningPoint};
use delayed_acceptance::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) | Error::Simulation(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(py_err)
}

/// Surrogate quality `(β₁, β₂)`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct ApproxQuality {
    inner: core_theory::ApproxQuality,
}

#[pymethods]
impl ApproxQuality {
    #[new]
    fn new(beta1: f64, beta2: f64) -> PyResult<Self> {
        Ok(Self { inner: core_theory::ApproxQuality::new(beta1, beta2).map_err(py_err)? })
    }

    #[getter]
    fn beta1(&self) -> f64 {
        self.inner.beta1
    }

    #[getter]
    fn beta2(&self) -> f64 {
        self.inner.beta2
    }

    /// Correlation `-β₁/β₂`; `None` for the exact surrogate.
    #[getter]
    fn rho(&self) -> Option<f64> {
        self.inner.rho()
    }

    fn __repr__(&self) -> String {
        format!("ApproxQuality(beta1={}, beta2={})", self.inner.beta1, self.inner.beta2)
    }
}

fn point_dict<'py>(py: Python<'py>, p: &EfficiencyPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mu", p.tuning.mu)?;
    d.set_item("sigma2", p.tuning.sigma2)?;
    d.set_item("eta", p.tuning.eta)?;
    d.set_item("beta1", p.quality.beta1)?;
    d.set_item("beta2", p.quality.beta2)?;
    d.set_item("alpha1", p.alpha1)?;
    d.set_item("alpha2given1", p.alpha2given1)?;
    d.set_item("alpha12", p.alpha12)?;
    d.set_item("eff", p.eff)?;
    d.set_item("eff_rel", p.eff_rel)?;
    Ok(d)
}

/// Limiting first-stage acceptance rate.
#[pyfunction]
fn alpha1(mu: f64, q: ApproxQuality) -> PyResult<f64> {
    core_theory::alpha1(mu, q.inner).map_err(py_err)
}

/// Limiting overall acceptance rate with log-noise variance `sigma2`.
#[pyfunction]
fn alpha12(mu: f64, sigma2: f64, q: ApproxQuality) -> PyResult<f64> {
    core_theory::alpha12(mu, sigma2, q.inner).map_err(py_err)
}

/// All limiting quantities at one tuning point.
#[pyfunction]
#[pyo3(signature = (mu, sigma2, q, eta, mode = "dapm"))]
fn evaluate<'py>(py: Python<'py>, mu: f64, sigma2: f64, q: ApproxQuality, eta: f64, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    let t = TuningPoint::new(mu, sigma2, eta).map_err(py_err)?;
    let p = core_theory::evaluate(t, q.inner, parse_mode(mode)?).map_err(py_err)?;
    point_dict(py, &p)
}

/// Efficiency-maximising tuning; adds `on_boundary` to the point dict.
#[pyfunction]
#[pyo3(signature = (q, eta, mode = "dapm"))]
fn optimize<'py>(py: Python<'py>, q: ApproxQuality, eta: f64, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    let opt = core_theory::optimize(q.inner, eta, parse_mode(mode)?).map_err(py_err)?;
    let d = point_dict(py, &opt.point)?;
    d.set_item("on_boundary", opt.on_boundary)?;
    Ok(d)
}

/// Optimal RWM and PM tunings and efficiencies.
#[pyfunction]
fn baselines(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let b = core_theory::baselines();
    let d = PyDict::new(py);
    d.set_item("rwm_mu", b.rwm_mu)?;
    d.set_item("rwm_eff", b.rwm_eff)?;
    d.set_item("pm_mu", b.pm_mu)?;
    d.set_item("pm_sigma2", b.pm_sigma2)?;
    d.set_item("pm_eff", b.pm_eff)?;
    Ok(d)
}

/// `(β₁, β₂)` of the logistic surrogate to the Gaussian target.
#[pyfunction]
fn logistic_betas(phi1: f64, phi2: f64) -> PyResult<ApproxQuality> {
    let params = LogisticSurrogateParams::new(phi1, phi2).map_err(py_err)?;
    Ok(ApproxQuality { inner: core_logistic_betas(params).map_err(py_err)? })
}

/// Runs one chain on the `d`-dimensional standard normal product target.
///
/// Returns `(samples, summary)`: samples is a list of rows, summary holds
/// acceptance rates, ESS and modeled cost (ESS needs at least a few hundred
/// retained samples).
#[pyfunction]
#[pyo3(signature = (kernel, d, n, seed, scale = None, sigma2 = 2.0, phi1 = 0.0, phi2 = 1.8, eta = 0.01, burn_in = 0, thin = 1))]
#[allow(clippy::too_many_arguments)]
fn sample<'py>(
    py: Python<'py>,
    kernel: &str,
    d: usize,
    n: usize,
    seed: u64,
    scale: Option<f64>,
    sigma2: f64,
    phi1: f64,
    phi2: f64,
    eta: f64,
    burn_in: usize,
    thin: usize,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    if d == 0 || n == 0 {
        return Err(PyValueError::new_err("d and n must both be at least 1"));
    }
    let target = ProductNormal { dim: d };
    let surrogate = LogisticProduct { dim: d, params: LogisticSurrogateParams::new(phi1, phi2).map_err(py_err)? };
    let estimator = synthetic_estimator(target, sigma2).map_err(py_err)?;
    let (k, base, expensive) = match kernel {
        "rwm" => (Kernel::Rwm { target: &target }, RWM_SCALE, 1.0),
        "da" => (Kernel::Da { target: &target, surrogate: &surrogate }, RWM_SCALE, 1.0),
        "pm" => (Kernel::Pm { prior: None, estimator: &estimator }, PM_SCALE, 1.0 / sigma2),
        "dapm" => (Kernel::Dapm { prior: None, surrogate: &surrogate, estimator: &estimator }, PM_SCALE, 1.0 / sigma2),
        other => return Err(PyValueError::new_err(format!("unknown kernel '{other}' (expected rwm, pm, da or dapm)"))),
    };
    let prop = ProposalSpec::isotropic(scale.unwrap_or(base / (d as f64).sqrt())).map_err(py_err)?;
    let x0: Vec<f64> = {
        use rand::Rng;
        let mut rng = substream(seed, 7);
        (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
    };
    let cfg = ChainConfig { n_iter: n, thin, burn_in, seed };
    let trace = py.detach(|| run_chain(&k, &prop, &x0, &cfg)).map_err(py_err)?;
    let rows = (0..trace.len()).map(|i| trace.sample(i).to_vec()).collect();
    let c = &trace.counters;
    let summary = PyDict::new(py);
    summary.set_item("alpha1", c.alpha1())?;
    summary.set_item("alpha2given1", c.alpha2given1())?;
    summary.set_item("alpha12", c.alpha12())?;
    summary.set_item("esjd", c.esjd())?;
    summary.set_item("expensive_evals", c.expensive_evals)?;
    summary.set_item("surrogate_evals", c.surrogate_evals)?;
    let surrogate_cost = if k.has_surrogate() { eta } else { 0.0 };
    if let Ok(s) = summarize(&trace, CostModel { surrogate: surrogate_cost, expensive }) {
        summary.set_item("ess_min", s.ess_min)?;
        summary.set_item("ess_harmonic", s.ess_harmonic)?;
        summary.set_item("modeled_cost", s.modeled_cost)?;
    }
    Ok((rows, summary))
}

/// Effective sample size of a scalar series (initial monotone sequence).
#[pyfunction]
fn ess(series: Vec<f64>) -> PyResult<f64> {
    Ok(ess_geyer(&series).map_err(py_err)?.ess)
}

/// Simulates a Lotka-Volterra dataset. Returns `(u0, y)` with `y` a list of
/// `[prey, predator]` observations at unit spacing.
#[pyfunction]
#[pyo3(signature = (seed, n = 50, c = [1.0, 0.005, 0.6], s = [8.0, 8.0], u0 = [71, 79]))]
fn simulate_lv(seed: u64, n: usize, c: [f64; 3], s: [f64; 2], u0: [u64; 2]) -> PyResult<([u64; 2], Vec<[f64; 2]>)> {
    let (series, _) = simulate_dataset(&DatasetHeader { c, s, u0, n, seed }).map_err(py_err)?;
    Ok((series.u0, series.y))
}

/// LNA log-likelihood of Lotka-Volterra observations at rates `c` and
/// observation standard deviations `s`.
#[pyfunction]
#[pyo3(signature = (u0, y, c, s, dt = DEFAULT_DT))]
fn lv_lna_loglik(u0: [u64; 2], y: Vec<[f64; 2]>, c: [f64; 3], s: [f64; 2], dt: f64) -> PyResult<f64> {
    let series = ObservationSeries { u0, y };
    LnaPosterior { series: &series, dt }.log_likelihood(&LvParams::from_natural(c, s)).map_err(py_err)
}

fn mean_ratio<M: StateSpaceModel>(model: &M, exact: f64, m: usize, reps: usize, seed: u64) -> PyResult<(f64, f64)> {
    let mut rng = substream(seed, 0);
    let mut r = Vec::with_capacity(reps);
    for _ in 0..reps {
        r.push((bootstrap_pf(model, m, &mut rng).map_err(py_err)? - exact).exp());
    }
    let n = reps as f64;
    let mean = r.iter().sum::<f64>() / n;
    let se = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    Ok((mean, se))
}

/// Mean and standard error of `p̂/p` for the bootstrap filter on the finite
/// HMM (one particle) and the linear Gaussian model (`m` particles).
#[pyfunction]
#[pyo3(signature = (reps = 10_000, m = 20, seed = 1))]
fn pf_check(reps: usize, m: usize, seed: u64) -> PyResult<((f64, f64), (f64, f64))> {
    if reps < 2 || m == 0 {
        return Err(PyValueError::new_err("need reps >= 2 and m >= 1"));
    }
    let hmm = FiniteHmm::example();
    let ssm = LinearGaussianSsm::example(10);
    Ok((mean_ratio(&hmm, hmm.log_likelihood(), 1, reps, seed)?, mean_ratio(&ssm, ssm.kalman_loglik(), m, reps, seed + 1)?))
}

#[pymodule]
fn delayed_acceptance_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ApproxQuality>()?;
    m.add_function(wrap_pyfunction!(alpha1, m)?)?;
    m.add_function(wrap_pyfunction!(alpha12, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(baselines, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_betas, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lv, m)?)?;
    m.add_function(wrap_pyfunction!(lv_lna_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(pf_check, m)?)?;
    Ok(())
}
