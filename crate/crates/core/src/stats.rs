//! Scalar statistics and the chi-square / F distribution functions used by
//! the consistency factor and the ANOVA test.
//!
//! Inputs are assumed finite; recordings are validated on construction.

use crate::error::{Error, Result};

fn require_len(s: &[f64], required: usize, operation: &'static str) -> Result<()> {
    if s.len() < required {
        Err(Error::SeriesTooShort {
            operation,
            required,
            found: s.len(),
        })
    } else {
        Ok(())
    }
}

/// Arithmetic mean, clamped to the sample range so that a constant series
/// returns its value exactly.
pub fn mean(s: &[f64]) -> Result<f64> {
    require_len(s, 1, "mean")?;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in s {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    Ok((sum / s.len() as f64).clamp(lo, hi))
}

fn sum_sq_dev(s: &[f64], mu: f64) -> f64 {
    s.iter().map(|&v| (v - mu) * (v - mu)).sum()
}

/// Variance with divisor N − 1.
pub fn sample_variance(s: &[f64]) -> Result<f64> {
    require_len(s, 2, "sample_variance")?;
    let mu = mean(s)?;
    Ok(sum_sq_dev(s, mu) / (s.len() - 1) as f64)
}

/// Lag-zero autocovariance of a real series, divisor N.
pub fn population_autocovariance(s: &[f64]) -> Result<f64> {
    require_len(s, 1, "population_autocovariance")?;
    let mu = mean(s)?;
    Ok(sum_sq_dev(s, mu) / s.len() as f64)
}

/// Mean, sample variance and population autocovariance in one pass over the
/// deviations. Agrees bit-for-bit with the individual functions.
pub fn moments(s: &[f64]) -> Result<(f64, f64, f64)> {
    require_len(s, 2, "moments")?;
    let mu = mean(s)?;
    let ss = sum_sq_dev(s, mu);
    let n = s.len() as f64;
    Ok((mu, ss / (n - 1.0), ss / n))
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma P(a, x).
///
/// Series for x < a + 1, Lentz continued fraction for Q = 1 − P otherwise.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp();
        (1.0 - q).clamp(0.0, 1.0)
    }
}

fn check_dof(k: u32) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidArgument(
            "degrees of freedom must be positive".into(),
        ))
    } else {
        Ok(())
    }
}

/// CDF of the chi-square distribution with `k` degrees of freedom.
pub fn chi_square_cdf(x: f64, k: u32) -> Result<f64> {
    check_dof(k)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "chi-square argument must be non-negative, got {x}"
        )));
    }
    Ok(regularized_gamma_p(f64::from(k) / 2.0, x / 2.0))
}

fn chi_square_pdf(x: f64, k: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = f64::from(k) / 2.0;
    ((h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h)).exp()
}

/// Inverse of [`chi_square_cdf`]: bracketing, then Newton steps safeguarded
/// by bisection.
pub fn chi_square_quantile(q: f64, k: u32) -> Result<f64> {
    check_dof(k)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {q}"
        )));
    }
    let cdf = |x: f64| regularized_gamma_p(f64::from(k) / 2.0, x / 2.0);

    let mut lo = 0.0_f64;
    let mut hi = f64::from(k).max(1.0);
    while cdf(hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let f = cdf(x) - q;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let pdf = chi_square_pdf(x, k);
        let newton = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// Survival function P(F > f) of the F distribution with (d1, d2) degrees of
/// freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert_eq!(mean(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 3.0);
        assert_eq!(mean(&[-1.0, 2.0]).unwrap(), 0.5);
        assert!(mean(&[]).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sample_variance(&[7.0; 4]).unwrap(), 0.0);
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 2.5);
        assert_eq!(sample_variance(&[0.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            sample_variance(&[1.0]),
            Err(Error::SeriesTooShort {
                required: 2,
                found: 1,
                ..
            })
        ));
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(population_autocovariance(&[7.0; 3]).unwrap(), 0.0);
        assert_eq!(
            population_autocovariance(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            2.0
        );
        assert_eq!(population_autocovariance(&[4.0]).unwrap(), 0.0);
        assert!(population_autocovariance(&[]).is_err());
    }

    #[test]
    fn moments_match_individual_functions() {
        let s = [0.3, -1.7, 2.2, 9.1, 4.4, -0.05];
        let (m, v, a) = moments(&s).unwrap();
        assert_eq!(m, mean(&s).unwrap());
        assert_eq!(v, sample_variance(&s).unwrap());
        assert_eq!(a, population_autocovariance(&s).unwrap());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(1.5) - (0.5 * std::f64::consts::PI.sqrt()).ln()).abs() < 1e-14);
    }

    #[test]
    fn chi_square_cdf_boundary_and_errors() {
        for k in 1..6 {
            assert_eq!(chi_square_cdf(0.0, k).unwrap(), 0.0);
        }
        assert!(chi_square_cdf(-1.0, 3).is_err());
        assert!(chi_square_cdf(1.0, 0).is_err());
        assert_eq!(chi_square_cdf(f64::INFINITY, 3).unwrap(), 1.0);
    }

    #[test]
    fn chi_square_quantile_rejects_out_of_range() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(chi_square_quantile(q, 1).is_err());
        }
    }

    #[test]
    fn f_survival_edges() {
        assert_eq!(f_survival(0.0, 1.0, 4.0), 1.0);
        assert_eq!(f_survival(f64::INFINITY, 1.0, 4.0), 0.0);
    }
}
