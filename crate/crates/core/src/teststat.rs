//! Score test statistics, the chi-square reference distribution, and
//! decisions.
//!
//! The statistic is the quadratic form m L m^T with m the score sum scaled
//! by 1/sqrt(n). Nested statistics for k = 1..d are all derived from one
//! d-dimensional score system by inverting leading principal blocks of
//! Sigma, which keeps U_k nondecreasing in k.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SymMat;

/// Which statistic family a value belongs to: U for the simple case,
/// W for the composite (estimated-scores) case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StatKind {
    U,
    W,
}

/// A nonnegative score test statistic of dimension k.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatisticValue {
    pub value: f64,
    pub k: usize,
    pub kind: StatKind,
}

/// Outcome of referring a statistic to chi-square.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Decision {
    pub p_value: f64,
    pub reject: bool,
}

/// Full report of a data-driven test run.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub kind: StatKind,
    /// Statistic values for k = 1..d.
    pub statistics: Vec<f64>,
    /// Penalized values U_k - pi(k, n) used by the selection rule.
    pub penalized: Vec<f64>,
    /// Selected dimension S (1-based).
    pub selected_s: usize,
    pub stat_at_s: f64,
    /// Degrees of freedom of the reference distribution (1 for the
    /// data-driven statistic; S under the --df-at-S diagnostic).
    pub reference_df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// Quadratic form statistic: with m = (1/sqrt(n)) sum of rows, returns
/// m L m^T. Rows are n x k; L must be k x k symmetric positive definite.
pub fn quadratic_statistic(rows: &[Vec<f64>], l: &SymMat, kind: StatKind) -> Result<StatisticValue> {
    if rows.is_empty() {
        return Err(Error::DegenerateSample("no score rows".into()));
    }
    let k = l.dim();
    let n = rows.len();
    let mut m = vec![0.0; k];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: rows[i].len(),
            });
        }
        for j in 0..k {
            m[j] += row[j];
        }
    }
    let scale = 1.0 / (n as f64).sqrt();
    m.iter_mut().for_each(|v| *v *= scale);
    let value = l.quadratic_form(&m)?;
    // Positive definite L keeps this nonnegative; clamp roundoff.
    Ok(StatisticValue {
        value: value.max(0.0),
        k,
        kind,
    })
}

/// All nested statistics k = 1..d from one d-dimensional score system:
/// the k-th uses the inverse of the leading k x k block of sigma.
pub fn nested_statistics(
    rows: &[Vec<f64>],
    sigma: &SymMat,
    kind: StatKind,
) -> Result<Vec<StatisticValue>> {
    let d = sigma.dim();
    let mut out = Vec::with_capacity(d);
    for k in 1..=d {
        let l_k = sigma.leading(k).inverse()?;
        let rows_k: Vec<Vec<f64>> = rows.iter().map(|r| r[..k].to_vec()).collect();
        out.push(quadratic_statistic(&rows_k, &l_k, kind)?);
    }
    Ok(out)
}

// Lanczos (g = 7, n = 9) log-gamma.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection for the small-argument range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x): series for x < a + 1,
/// continued fraction (Lentz) otherwise.
pub fn lower_regularized_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !x.is_finite() || x < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "lower_regularized_gamma requires a > 0 and x >= 0, got a = {a}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma(a);
    if ln_prefactor < -700.0 {
        return Ok(if x < a { 0.0 } else { 1.0 });
    }
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 600;
    if x < a + 1.0 {
        // Series: P = prefactor * sum x^n / (a (a+1) .. (a+n)).
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                return Ok((ln_prefactor.exp() * sum).clamp(0.0, 1.0));
            }
        }
        Err(Error::Budget("incomplete gamma series did not converge".into()))
    } else {
        // Continued fraction for Q(a, x), modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                let q = ln_prefactor.exp() * h;
                return Ok((1.0 - q).clamp(0.0, 1.0));
            }
        }
        Err(Error::Budget(
            "incomplete gamma continued fraction did not converge".into(),
        ))
    }
}

/// Chi-square CDF with k degrees of freedom.
pub fn chi2_cdf(k: usize, x: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::OutOfDomain("chi2_cdf requires k >= 1".into()));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::OutOfDomain(format!("chi2_cdf requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    lower_regularized_gamma(0.5 * k as f64, 0.5 * x)
}

/// Chi-square quantile: monotone bracketing, bisection, then Newton polish
/// to 1e-10.
pub fn chi2_quantile(k: usize, p: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::OutOfDomain("chi2_quantile requires k >= 1".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::OutOfDomain(format!(
            "chi2_quantile requires 0 <= p < 1, got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut hi = k as f64 + 10.0;
    while chi2_cdf(k, hi)? < p {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Budget("chi2_quantile bracket expansion failed".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if chi2_cdf(k, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let f = chi2_cdf(k, x)? - p;
        let d = chi2_density(k, x);
        if d <= 0.0 {
            break;
        }
        let step = f / d;
        let next = x - step;
        if next > lo && next < hi {
            x = next;
        }
        if step.abs() < 1e-12 * x.max(1.0) {
            break;
        }
    }
    Ok(x)
}

fn chi2_density(k: usize, x: f64) -> f64 {
    let a = 0.5 * k as f64;
    if x <= 0.0 {
        return 0.0;
    }
    ((a - 1.0) * (0.5 * x).ln() - 0.5 * x - ln_gamma(a)).exp() * 0.5
}

/// Refer a statistic to chi-square(reference_df): p = 1 - F(stat), reject
/// when p < alpha. For data-driven statistics the reference has one degree
/// of freedom.
pub fn decide(stat: f64, reference_df: usize, alpha: f64) -> Result<Decision> {
    if !(0.0..1.0).contains(&alpha) && alpha != 0.0 {
        return Err(Error::OutOfDomain(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if !stat.is_finite() || stat < 0.0 {
        return Err(Error::OutOfDomain(format!(
            "statistic must be finite and >= 0, got {stat}"
        )));
    }
    let p_value = 1.0 - chi2_cdf(reference_df, stat)?;
    Ok(Decision {
        p_value,
        reject: p_value < alpha,
    })
}
