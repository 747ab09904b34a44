//! Summary statistics, Pearson correlation and t-tests.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`, not on how a caller chunked the work.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 8;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("sample"));
    }
    Ok(pairwise_sum(xs) / xs.len() as f64)
}

/// Mean and population (1/N) standard deviation.
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    let m = mean(xs)?;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    Ok((m, libm::sqrt(pairwise_sum(&sq) / xs.len() as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value from the t distribution with `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Shape(alloc::format!("pearson lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooShort { len: n, min: 3 });
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sxx = pairwise_sum(&dx.iter().map(|d| d * d).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|d| d * d).collect::<Vec<_>>());
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("first input is constant"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("second input is constant"));
    }
    let r = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * libm::sqrt(df / (1.0 - r * r));
        student_t_two_sided(t, df)
    };
    Ok(Correlation { r, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean: f64,
    pub std_err: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// One-sample t-test of `H0: mean = 0`.
pub fn one_sample_t(xs: &[f64]) -> Result<TTest> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooShort { len: n, min: 2 });
    }
    let (m, pop_std) = mean_std(xs)?;
    // Sample (n - 1) standard deviation for the standard error.
    let sd = pop_std * libm::sqrt(n as f64 / (n as f64 - 1.0));
    let std_err = sd / libm::sqrt(n as f64);
    let df = (n - 1) as f64;
    let (t, p_value) = if std_err == 0.0 {
        if m == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(m), 0.0)
        }
    } else {
        let t = m / std_err;
        (t, student_t_two_sided(t, df))
    };
    Ok(TTest { mean: m, std_err, t, df, p_value })
}

/// Paired t-test on `x - y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() {
        return Err(Error::Shape(alloc::format!("paired lengths {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    one_sample_t(&d)
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by the continued fraction (modified Lentz).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap().r - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_an_error() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn t_distribution_reference_values() {
        // scipy.stats.t.sf(|t|, df) * 2
        assert!((student_t_two_sided(2.0, 10.0) - 0.073_388_034_770_740_39).abs() < 1e-10);
        assert!((student_t_two_sided(-3.5, 4.0) - 0.024_896_163_460_222_75).abs() < 1e-10);
        assert!((student_t_two_sided(0.0, 7.0) - 1.0).abs() < 1e-12);
        assert!((student_t_two_sided(1.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn paired_t_reference() {
        // scipy.stats.ttest_rel
        let x = [1.0, 2.0, 3.0, 4.0, 5.5];
        let y = [1.5, 1.0, 2.0, 3.5, 4.0];
        let t = paired_t(&x, &y).unwrap();
        assert!((t.t - 2.064_187_386_168_559_3).abs() < 1e-9);
        assert!((t.p_value - 0.107_938_822_292_276_57).abs() < 1e-9);
        let same = paired_t(&x, &x).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn std_population() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
        assert!(mean(&[]).is_err());
    }

    #[test]
    fn pairwise_matches_naive_small() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 5050.0);
        assert_eq!(pairwise_sum(&[0.5; 3]), 1.5);
    }
}
