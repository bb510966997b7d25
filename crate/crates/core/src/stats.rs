//! Paired t-tests, effect sizes and the Student-t distribution.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean and sample standard deviation (`n − 1` denominator).
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::invalid("need at least two values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, libm::sqrt(ss / (n - 1.0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    pub t: f64,
    pub df: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// `mean(a − b) / sd(a − b)`.
    pub cohens_d: f64,
    /// `(mean(a) − mean(b)) / sqrt((sd_a² + sd_b²) / 2)`.
    pub cohens_d_pooled: f64,
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::invalid(alloc::format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("a paired test needs at least two pairs"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    let d = differences(a, b)?;
    let (mean_diff, sd_diff) = summarize(&d)?;
    if !(sd_diff > 0.0) {
        return Err(Error::Degenerate(
            "paired differences have zero variance".into(),
        ));
    }
    let n = d.len();
    let t = mean_diff / (sd_diff / libm::sqrt(n as f64));
    let df = n - 1;
    let (mean_a, sd_a) = summarize(a)?;
    let (mean_b, sd_b) = summarize(b)?;
    let pooled = libm::sqrt(0.5 * (sd_a * sd_a + sd_b * sd_b));
    Ok(PairedTestResult {
        n,
        t,
        df,
        p_value: student_t_two_sided_p(t, df as f64),
        mean_a,
        sd_a,
        mean_b,
        sd_b,
        mean_diff,
        sd_diff,
        cohens_d: mean_diff / sd_diff,
        cohens_d_pooled: if pooled > 0.0 {
            (mean_a - mean_b) / pooled
        } else {
            f64::NAN
        },
    })
}

pub fn cohens_d_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = differences(a, b)?;
    let (mean, sd) = summarize(&d)?;
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "paired differences have zero variance".into(),
        ));
    }
    Ok(mean / sd)
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // the continued fraction converges fastest for x < (a+1)/(a+b+2)
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
