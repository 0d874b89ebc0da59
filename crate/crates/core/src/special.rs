//! Gaussian distribution helpers used throughout the theory module.

use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_SQRT_PI, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Low-order part of `1/√2` beyond `FRAC_1_SQRT_2`.
const FRAC_1_SQRT_2_LO: f64 = -4.833_646_656_726_457e-17;

/// Standard normal CDF via the complementary error function.
///
/// The rounding error of `-x/√2` is carried to first order, otherwise it is
/// amplified by roughly `x²` in the tails.
pub fn std_normal_cdf(x: f64) -> f64 {
    let t = -x * FRAC_1_SQRT_2;
    let t_err = (-x).mul_add(FRAC_1_SQRT_2, -t) - x * FRAC_1_SQRT_2_LO;
    0.5 * (erfc(t) - t_err * FRAC_2_SQRT_PI * (-t * t).exp())
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `ln Φ(x)`, accurate far into both tails.
///
/// Below `x = -35` the Mills-ratio asymptotic series is used, since `Φ`
/// itself underflows near `x = -38`.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-std_normal_cdf(-x)).ln_1p()
    } else if x > -35.0 {
        std_normal_cdf(x).ln()
    } else {
        let t2 = x * x;
        let inv = 1.0 / t2;
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv.powi(3) + 105.0 * inv.powi(4);
        -0.5 * t2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    // Normal::new(0, 1) cannot fail.
    let x = Normal::new(0.0, 1.0).unwrap().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    // One Newton step against the more accurate CDF above.
    x - (std_normal_cdf(x) - p) / std_normal_pdf(x)
}

/// Metropolis–Hastings accept-reject function `F(u) = min(1, e^u)`.
pub fn mh_accept(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        u.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 40-digit arithmetic.
    const CDF_REF: &[(f64, f64, f64)] = &[
        (-30.0, 4.906_713_927_148_187e-198, -454.321_243_956_343_2),
        (-10.0, 7.619_853_024_160_526e-24, -53.231_285_150_512_47),
        (-5.0, 2.866_515_718_791_939e-7, -15.064_998_393_988_726),
        (-1.5, 0.066_807_201_268_858_07, -2.705_944_400_823_89),
        (-0.5, 0.308_537_538_725_986_9, -1.175_911_761_593_618_6),
        (0.0, 0.5, -0.693_147_180_559_945_3),
        (0.7, 0.758_036_347_776_927, -0.277_023_942_277_131_26),
        (2.0, 0.977_249_868_051_820_8, -0.023_012_909_328_963_49),
        (5.0, 0.999_999_713_348_428_1, -2.866_516_129_637_636e-7),
        (8.0, 0.999_999_999_999_999_4, -6.220_960_574_271_786e-16),
    ];

    #[test]
    fn cdf_matches_high_precision_references() {
        for &(x, cdf, _) in CDF_REF {
            let got = std_normal_cdf(x);
            assert!(((got - cdf) / cdf).abs() < 1e-14, "x={x}: {got} vs {cdf}");
        }
    }

    #[test]
    fn log_cdf_matches_references_including_far_tail() {
        for &(x, _, lcdf) in CDF_REF {
            let got = log_std_normal_cdf(x);
            assert!(((got - lcdf) / lcdf).abs() < 1e-13, "x={x}: {got} vs {lcdf}");
        }
        for (x, lcdf) in [(-40.0, -804.608_442_013_753_8), (-100.0, -5_005.524_208_694_205)] {
            let got = log_std_normal_cdf(x);
            assert!(((got - lcdf) / lcdf).abs() < 1e-13, "x={x}: {got} vs {lcdf}");
        }
    }

    #[test]
    fn log_cdf_is_continuous_at_the_switch_point() {
        let a = log_std_normal_cdf(-35.0 + 1e-9);
        let b = log_std_normal_cdf(-35.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((std_normal_cdf(std_normal_quantile(p)) - p).abs() < 1e-12);
        }
    }
}
