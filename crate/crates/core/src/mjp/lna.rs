//! Linear noise approximation: RK4 integration of the mean and covariance
//! ODEs and the resulting Gaussian marginal likelihood of noisy
//! observations.

use super::network::ReactionNetwork;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SMatrix, SVector};

/// Default RK4 step in time units.
pub const DEFAULT_DT: f64 = 0.01;

const BLOW_UP: f64 = 1e12;

/// Mean path `z` and covariance `V` of the approximation. The residual
/// mean `m` of the full LNA is identically zero after each restart and is
/// not carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnaState<const S: usize> {
    pub z: SVector<f64, S>,
    pub v: SMatrix<f64, S, S>,
}

impl<const S: usize> LnaState<S> {
    pub fn new(z: [f64; S], v: SMatrix<f64, S, S>) -> Self {
        Self { z: SVector::from(z), v }
    }
}

fn derivative<N, const S: usize, const R: usize>(net: &N, st: &LnaState<S>) -> LnaState<S>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    let z: [f64; S] = st.z.into();
    let h = net.hazards(&z);
    let dh = net.hazard_jacobian(&z);
    let stoich = net.stoichiometry();
    let mut dz = SVector::<f64, S>::zeros();
    let mut f = SMatrix::<f64, S, S>::zeros();
    let mut noise = SMatrix::<f64, S, S>::zeros();
    for r in 0..R {
        for i in 0..S {
            let sir = stoich[r][i] as f64;
            if sir == 0.0 {
                continue;
            }
            dz[i] += sir * h[r];
            for j in 0..S {
                f[(i, j)] += sir * dh[r][j];
                noise[(i, j)] += sir * stoich[r][j] as f64 * h[r];
            }
        }
    }
    let dv = st.v * f.transpose() + noise + f * st.v;
    LnaState { z: dz, v: dv }
}

fn axpy<const S: usize>(base: &LnaState<S>, k: &LnaState<S>, h: f64) -> LnaState<S> {
    LnaState { z: base.z + k.z * h, v: base.v + k.v * h }
}

/// Takes `n_steps` classical Runge–Kutta steps of size `dt`, symmetrising
/// `V` after each step and clamping it to the PSD cone at the end.
pub fn lna_integrate<N, const S: usize, const R: usize>(
    net: &N,
    state: LnaState<S>,
    dt: f64,
    n_steps: usize,
) -> Result<LnaState<S>>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("LNA step must be positive, got {dt}")));
    }
    let mut st = state;
    for _ in 0..n_steps {
        let k1 = derivative(net, &st);
        let k2 = derivative(net, &axpy(&st, &k1, dt / 2.0));
        let k3 = derivative(net, &axpy(&st, &k2, dt / 2.0));
        let k4 = derivative(net, &axpy(&st, &k3, dt));
        st.z += (k1.z + (k2.z + k3.z) * 2.0 + k4.z) * (dt / 6.0);
        st.v += (k1.v + (k2.v + k3.v) * 2.0 + k4.v) * (dt / 6.0);
        st.v = (st.v + st.v.transpose()) * 0.5;
        if !st.z.iter().chain(st.v.iter()).all(|x| x.is_finite() && x.abs() <= BLOW_UP) {
            return Err(Error::Numeric("LNA integration blew up".into()));
        }
    }
    st.v = clamp_psd(st.v);
    Ok(st)
}

fn clamp_psd<const S: usize>(v: SMatrix<f64, S, S>) -> SMatrix<f64, S, S> {
    if v.cholesky().is_some() {
        return v;
    }
    let eig = DMatrix::from_column_slice(S, S, v.as_slice()).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return v;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    let out = SMatrix::<f64, S, S>::from_column_slice(out.as_slice());
    (out + out.transpose()) * 0.5
}

/// Log of the Gaussian density `φ(y; mean, cov)`.
pub fn log_mvn_pdf<const S: usize>(y: &SVector<f64, S>, mean: &SVector<f64, S>, cov: &SMatrix<f64, S, S>) -> Result<f64> {
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("forecast covariance is not positive definite".into()))?;
    let r = y - mean;
    let sol = chol.solve(&r);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (S as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + r.dot(&sol)))
}

/// LNA log marginal likelihood of `ys`, observed with independent Gaussian
/// noise of variances `obs_var`, one time unit apart. The first observation
/// is of the known initial state `u0`.
pub fn lna_marginal_loglik<N, const S: usize, const R: usize>(
    net: &N,
    u0: [f64; S],
    ys: &[[f64; S]],
    obs_var: [f64; S],
    dt: f64,
) -> Result<f64>
where
    N: ReactionNetwork<S, R> + ?Sized,
{
    if ys.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    let n_steps = (1.0 / dt).round().max(1.0) as usize;
    let step = 1.0 / n_steps as f64;
    let sigma = SMatrix::<f64, S, S>::from_diagonal(&SVector::from(obs_var));
    let mut a = SVector::<f64, S>::from(u0);
    let mut c = SMatrix::<f64, S, S>::zeros();
    let mut ll = log_mvn_pdf(&SVector::from(ys[0]), &a, &sigma)?;
    for y in &ys[1..] {
        let prior = lna_integrate(net, LnaState { z: a, v: c }, step, n_steps)?;
        let f = prior.v + sigma;
        let y = SVector::from(*y);
        ll += log_mvn_pdf(&y, &prior.z, &f)?;
        let f_inv = f
            .try_inverse()
            .ok_or_else(|| Error::Numeric("forecast covariance is singular".into()))?;
        let gain = prior.v * f_inv;
        a = prior.z + gain * (y - prior.z);
        c = prior.v - gain * prior.v;
        c = (c + c.transpose()) * 0.5;
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::network::{ImmigrationDeath, LotkaVolterra};

    #[test]
    fn zero_rates_leave_state_unchanged() {
        let net = LotkaVolterra { c: [0.0; 3] };
        let v = SMatrix::<f64, 2, 2>::new(2.0, 0.5, 0.5, 1.0);
        let st = LnaState::new([71.0, 79.0], v);
        let out = lna_integrate(&net, st, 0.02, 100).unwrap();
        assert_eq!(out, st);
    }

    #[test]
    fn immigration_death_matches_closed_form() {
        let net = ImmigrationDeath { c1: 12.0, c2: 0.4 };
        let st = LnaState::new([3.0], SMatrix::<f64, 1, 1>::new(1.5));
        let out = lna_integrate(&net, st, 0.02, 250).unwrap();
        let (z, v) = net.moments(3.0, 1.5, 5.0);
        assert!((out.z[0] - z).abs() < 1e-6 * z.abs().max(1.0));
        assert!((out.v[(0, 0)] - v).abs() < 1e-6 * v.abs().max(1.0));
    }

    #[test]
    fn step_halving_changes_lotka_volterra_output_negligibly() {
        let net = LotkaVolterra { c: [1.0, 0.005, 0.6] };
        let st = LnaState::new([71.0, 79.0], SMatrix::zeros());
        let coarse = lna_integrate(&net, st, DEFAULT_DT, 100).unwrap();
        let fine = lna_integrate(&net, st, DEFAULT_DT / 2.0, 200).unwrap();
        for (a, b) in coarse.z.iter().chain(coarse.v.iter()).zip(fine.z.iter().chain(fine.v.iter())) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        let (series, _) = crate::mjp::lv::simulate_dataset(&Default::default()).unwrap();
        let ll = |dt| lna_marginal_loglik(&net, [71.0, 79.0], &series.y, [64.0, 64.0], dt).unwrap();
        let (a, b) = (ll(DEFAULT_DT), ll(DEFAULT_DT / 2.0));
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn covariance_stays_psd_over_long_horizon() {
        let net = LotkaVolterra { c: [1.0, 0.005, 0.6] };
        let mut st = LnaState::new([71.0, 79.0], SMatrix::zeros());
        for _ in 0..50 {
            st = lna_integrate(&net, st, 0.02, 50).unwrap();
            assert_eq!(st.v, st.v.transpose());
            assert!(st.v.symmetric_eigen().eigenvalues.iter().all(|&l| l >= -1e-10));
        }
    }

    #[test]
    fn single_observation_is_gaussian_at_initial_state() {
        let net = LotkaVolterra { c: [1.0, 0.005, 0.6] };
        let y = [[75.0, 70.0]];
        let ll = lna_marginal_loglik(&net, [71.0, 79.0], &y, [64.0, 64.0], 0.02).unwrap();
        let expected = -(2.0 * std::f64::consts::PI * 64.0).ln() - (16.0 + 81.0) / (2.0 * 64.0);
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn marginal_loglik_is_deterministic() {
        let net = LotkaVolterra { c: [1.0, 0.005, 0.6] };
        let ys = [[71.0, 79.0], [90.0, 70.0], [110.0, 75.0]];
        let a = lna_marginal_loglik(&net, [71.0, 79.0], &ys, [64.0, 64.0], 0.02).unwrap();
        let b = lna_marginal_loglik(&net, [71.0, 79.0], &ys, [64.0, 64.0], 0.02).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn degenerate_forecast_is_an_error() {
        let net = LotkaVolterra { c: [0.0; 3] };
        let ys = [[71.0, 79.0], [71.0, 79.0]];
        assert!(lna_marginal_loglik(&net, [71.0, 79.0], &ys, [0.0, 0.0], 0.02).is_err());
        assert!(lna_integrate(&net, LnaState::new([1.0, 1.0], SMatrix::zeros()), 0.0, 1).is_err());
    }
}
