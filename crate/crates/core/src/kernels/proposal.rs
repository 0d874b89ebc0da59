use crate::error::{domain, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

/// Symmetric proposal `q(x, ·) = q(·, x)`.
pub trait Proposal: Sync {
    fn propose(&self, x: &[f64], out: &mut [f64], rng: &mut dyn RngCore);
}

/// Gaussian random-walk proposal.
#[derive(Debug, Clone)]
pub enum ProposalSpec {
    /// `y = x + scale · z`.
    Isotropic { scale: f64 },
    /// `y = x + L z` with `L` the lower Cholesky factor of the covariance.
    Covariance { chol: DMatrix<f64> },
}

impl ProposalSpec {
    pub fn isotropic(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(domain(format!("proposal scale {scale} must be finite and non-negative")));
        }
        Ok(Self::Isotropic { scale })
    }

    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(domain("proposal covariance must be square"));
        }
        let sym = (&cov - cov.transpose()).abs().max();
        if sym > 1e-10 * cov.abs().max().max(1.0) {
            return Err(domain("proposal covariance must be symmetric"));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| domain("proposal covariance is not positive definite"))?;
        Ok(Self::Covariance { chol: chol.l() })
    }

    /// Multiplies the proposal spread by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Isotropic { scale } => Self::Isotropic { scale: scale * factor },
            Self::Covariance { chol } => Self::Covariance { chol: chol * factor },
        }
    }
}

impl Proposal for ProposalSpec {
    fn propose(&self, x: &[f64], out: &mut [f64], rng: &mut dyn RngCore) {
        match self {
            Self::Isotropic { scale } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = xi + scale * z;
                }
            }
            Self::Covariance { chol } => {
                let z = DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let step = chol * z;
                for ((o, xi), s) in out.iter_mut().zip(x).zip(step.iter()) {
                    *o = xi + s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn covariance_proposal_has_requested_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let p = ProposalSpec::from_covariance(cov.clone()).unwrap();
        let mut rng = substream(5, 0);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        let mut out = [0.0; 2];
        for _ in 0..n {
            p.propose(&[0.0, 0.0], &mut out, &mut rng);
            let v = DVector::from_row_slice(&out);
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).abs().max() < 0.03);
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(ProposalSpec::from_covariance(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(ProposalSpec::from_covariance(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(ProposalSpec::isotropic(-1.0).is_err());
    }
}
