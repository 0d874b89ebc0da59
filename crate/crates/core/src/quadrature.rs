//! Expectations of bounded functionals of a standard Gaussian variable.
//!
//! The primary rule is Gauss–Hermite with node doubling (64, 128, 256, 512).
//! Integrands with a kink (a `min(1, e^u)` factor with degenerate
//! variance) converge slowly under Gauss–Hermite, so those, and anything that
//! fails to settle by 512 nodes, go through a composite Gauss–Legendre rule on
//! `[-12, 12]` with caller-supplied breakpoints.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights for `E[f(ξ)]`, `ξ ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Outcome of an adaptive expectation.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    /// Difference between the last two refinements.
    pub abs_change: f64,
    pub evaluations: usize,
}

pub const HERMITE_SIZES: [usize; 4] = [64, 128, 256, 512];
const GAUSS_TAIL: f64 = 12.0;
const PANEL_ORDER: usize = 20;
const MAX_PANEL_DOUBLINGS: u32 = 12;

/// Physicists' Gauss–Hermite rule: Golub–Welsch eigenvalues as starting
/// points, polished by Newton iteration on the orthonormal recurrence, then
/// rescaled to the standard normal weight.
fn build_hermite(n: usize) -> GaussRule {
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let sqrt_pi = PI.sqrt();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n.div_ceil(2) {
        // Polish the non-negative half and mirror it.
        let mut z = -guesses[i];
        let mut pp = 1.0;
        for _ in 0..50 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes.push(z);
        weights.push(2.0 / (pp * pp) / sqrt_pi);
    }
    let half = n / 2;
    let mut all_nodes: Vec<f64> = nodes.iter().map(|z| -z).collect();
    let mut all_weights = weights.clone();
    all_nodes.extend(nodes[..half].iter().rev());
    all_weights.extend(weights[..half].iter().rev());
    GaussRule {
        nodes: all_nodes.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
        weights: all_weights,
    }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    GaussRule { nodes: x, weights: w }
}

/// Cached Gauss–Hermite rule; `n` must be one of [`HERMITE_SIZES`].
pub fn hermite_rule(n: usize) -> &'static GaussRule {
    static RULES: [OnceLock<GaussRule>; 4] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let idx = HERMITE_SIZES
        .iter()
        .position(|&k| k == n)
        .expect("unsupported Gauss-Hermite size");
    RULES[idx].get_or_init(|| build_hermite(n))
}

fn legendre_panel_rule() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn check_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("non-finite quadrature value {v}")))
    }
}

/// `E[f(ξ)]` for `ξ ~ N(0,1)` by Gauss–Hermite doubling from `min_nodes`
/// until successive estimates differ by less than `tol`; falls back to the
/// composite rule if 512 nodes do not settle.
pub fn normal_expectation<F: Fn(f64) -> f64>(f: F, min_nodes: usize, tol: f64) -> Result<QuadOutcome> {
    let mut prev: Option<f64> = None;
    let mut evaluations = 0;
    for &n in HERMITE_SIZES.iter().filter(|&&n| n >= min_nodes) {
        let v = check_finite(hermite_rule(n).apply(&f))?;
        evaluations += n;
        if let Some(p) = prev {
            let change = (v - p).abs();
            if change < tol {
                return Ok(QuadOutcome { value: v, abs_change: change, evaluations });
            }
        }
        prev = Some(v);
    }
    let mut out = normal_expectation_piecewise(f, &[], tol)?;
    out.evaluations += evaluations;
    Ok(out)
}

/// Composite Gauss–Legendre evaluation of `E[f(ξ)]` on `[-12, 12]`, split at
/// `breaks` and with panel doubling until successive estimates differ by less
/// than `tol`.
pub fn normal_expectation_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Result<QuadOutcome> {
    let mut edges = vec![-GAUSS_TAIL];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && b.abs() < GAUSS_TAIL)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(GAUSS_TAIL);

    let rule = legendre_panel_rule();
    let g = |x: f64| f(x) * crate::special::std_normal_pdf(x);
    let mut prev: Option<f64> = None;
    let mut evaluations = 0;
    for level in 0..=MAX_PANEL_DOUBLINGS {
        let panels = 1usize << level;
        let mut total = 0.0;
        for seg in edges.windows(2) {
            let width = (seg[1] - seg[0]) / panels as f64;
            for p in 0..panels {
                let a = seg[0] + width * p as f64;
                let half = 0.5 * width;
                let mid = a + half;
                total += half * rule.apply(|t| g(mid + half * t));
                evaluations += rule.len();
            }
        }
        let v = check_finite(total)?;
        if let Some(p) = prev {
            let change = (v - p).abs();
            if change < tol && level >= 2 {
                return Ok(QuadOutcome { value: v, abs_change: change, evaluations });
            }
        }
        prev = Some(v);
    }
    Err(Error::Numeric(format!(
        "composite Gaussian quadrature did not converge to {tol:e} after {evaluations} evaluations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rules_integrate_gaussian_moments() {
        for n in HERMITE_SIZES {
            let rule = hermite_rule(n);
            assert!((rule.apply(|_| 1.0) - 1.0).abs() < 1e-12, "n={n}");
            assert!((rule.apply(|x| x * x) - 1.0).abs() < 1e-11, "n={n}");
            assert!((rule.apply(|x| x.powi(4)) - 3.0).abs() < 1e-10, "n={n}");
            assert!(rule.apply(|x| x.powi(3)).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn hermite_nodes_are_sorted_and_distinct() {
        let rule = hermite_rule(128);
        assert!(rule.nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(20);
        assert!((rule.apply(|x| x.powi(38)) - 2.0 / 39.0).abs() < 1e-13);
        assert!((rule.apply(|_| 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_expectation_matches_closed_form() {
        // E[cos ξ] = e^{-1/2}
        let out = normal_expectation(f64::cos, 64, 1e-12).unwrap();
        assert!((out.value - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kinked_expectation_with_breakpoint() {
        // E[max(ξ - 0.3, 0)] = φ(0.3) - 0.3 Φ(-0.3)
        let exact = crate::special::std_normal_pdf(0.3) - 0.3 * crate::special::std_normal_cdf(-0.3);
        let out = normal_expectation_piecewise(|x| (x - 0.3).max(0.0), &[0.3], 1e-12).unwrap();
        assert!((out.value - exact).abs() < 1e-12, "{} vs {exact}", out.value);
    }

    #[test]
    fn non_finite_integrand_is_a_numeric_error() {
        assert!(normal_expectation(|_| f64::NAN, 64, 1e-8).is_err());
    }
}
