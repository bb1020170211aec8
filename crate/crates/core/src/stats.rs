//! Paired two-tailed Student-t test and the t-distribution tail it needs.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("paired test needs at least 2 pairs, got {0}")]
    TooFewSamples(usize),
    #[error("degrees of freedom must be >= 1, got {0}")]
    InvalidDof(u64),
    #[error("significance level must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("non-finite input")]
    NonFinite,
}

const CF_MAX_ITER: usize = 300;
const CF_TOLERANCE: f64 = 1e-12;
const TINY: f64 = 1e-300;

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let clamp = |v: f64| if v.abs() < TINY { TINY.copysign(v) } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, with the complement `y = 1 - x`
/// passed separately so callers can supply it without cancellation.
fn incomplete_beta_split(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

/// Regularized incomplete beta function `I_x(a, b)` for `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    incomplete_beta_split(a, b, x, 1.0 - x)
}

/// Two-tailed tail probability `P(|T| >= |t|)` of a Student-t variable with
/// `nu` degrees of freedom.
pub fn student_t_two_tailed_p(t: f64, nu: u64) -> Result<f64, StatsError> {
    if nu == 0 {
        return Err(StatsError::InvalidDof(nu));
    }
    if t.is_nan() {
        return Err(StatsError::NonFinite);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let nu = nu as f64;
    let t2 = t * t;
    let x = nu / (nu + t2);
    let y = t2 / (nu + t2);
    Ok(incomplete_beta_split(nu / 2.0, 0.5, x, y).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
    pub reject_h0: bool,
}

/// Paired two-tailed t-test of `H0: mean(a - b) = 0`.
///
/// Zero-variance differences are decided without the distribution: all-zero
/// differences never reject, a constant non-zero shift always does.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<PairedTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let dof = (n - 1) as u64;

    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / (sd / nf.sqrt());
        (t, student_t_two_tailed_p(t, dof)?)
    };
    Ok(PairedTestResult {
        t_statistic: t,
        degrees_of_freedom: dof,
        p_value: p,
        reject_h0: p < alpha,
    })
}
