//! Special functions behind the GinOE kernel.
//!
//! The truncated exponential `s_N(x) = e^{-x} sum_{j<N} x^j / j!` is kept in a
//! split form `base + exp(log_scale) * mantissa` so callers can merge its
//! exponent with other exponential prefactors before anything is
//! exponentiated.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;
/// Largest exponent handed to `exp` before we call it an overflow.
pub const SAFE_LOG_MAGNITUDE: f64 = 700.0;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `e^{x^2} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 5.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    // Continued fraction sqrt(pi) e^{x^2} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
    // evaluated bottom-up.
    let mut f = x;
    for k in (1..=80).rev() {
        f = x + 0.5 * k as f64 / f;
    }
    1.0 / (SQRT_PI * f)
}

/// `ln erfc(x)`, finite far beyond the point where `erfc` underflows.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 0.5 {
        libm::erfc(x).ln()
    } else {
        erfcx(x).ln() - x * x
    }
}

/// `ln erfc(x)` from the large-`x` expansion
/// `erfc(x) ~ e^{-x^2} / (sqrt(pi) x) * sum_k (-1)^k (2k-1)!! / (2x^2)^k`,
/// truncated after `terms` corrections (or earlier, once terms start growing).
pub fn ln_erfc_asymptotic(x: f64, terms: usize) -> f64 {
    let inv = 1.0 / (2.0 * x * x);
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..=terms {
        let next = -term * (2 * k - 1) as f64 * inv;
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
    }
    -x * x - (SQRT_PI * x).ln() + sum.ln()
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 20 {
        let f: u64 = (2..=n).product();
        return (f as f64).ln();
    }
    libm::lgamma(n as f64 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnMethod {
    ExactSum,
    Asymptotic,
}

/// Value of `s_N` with the method used and an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnEvaluation {
    pub value: Complex64,
    pub method: SnMethod,
    pub est_error: f64,
}

/// `s_N(x) = base + exp(log_scale) * mantissa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnParts {
    pub base: f64,
    pub log_scale: Complex64,
    pub mantissa: Complex64,
    /// Sum of term magnitudes relative to `exp(Re log_scale)`.
    pub magnitude_sum: f64,
    /// Index of the largest term.
    pub peak_index: usize,
}

impl SnParts {
    pub fn value(&self) -> Result<Complex64> {
        let log_mag = self.log_scale.re + self.mantissa.norm().ln();
        if log_mag > SAFE_LOG_MAGNITUDE {
            return Err(Error::Overflow { index: self.peak_index, log_magnitude: log_mag });
        }
        Ok(self.base + self.log_scale.exp() * self.mantissa)
    }
}

/// Relative switch point `|x| / N` between the complement form and the direct sum.
const COMPLEMENT_RATIO: f64 = 0.99;

/// Exact `s_N(x)` in split form.
///
/// For `|x| < 0.99 N` the identity `s_N(x) = 1 - e^{-x} sum_{j>=N} x^j/j!` is
/// used: its terms decrease geometrically, so phases of `x` that make the
/// partial sum cancel catastrophically are harmless. Otherwise the partial sum
/// is accumulated termwise as `exp(j Log x - ln j! - x)` with Kahan summation.
pub fn sn_parts(x: Complex64, n: usize) -> SnParts {
    assert!(n >= 1, "s_N needs N >= 1");
    if x == Complex64::new(0.0, 0.0) {
        return SnParts { base: 1.0, log_scale: Complex64::new(0.0, 0.0), mantissa: Complex64::new(0.0, 0.0), magnitude_sum: 0.0, peak_index: 0 };
    }
    let nf = n as f64;
    let log_x = x.ln();
    if x.norm() < COMPLEMENT_RATIO * nf {
        // e^{-x} x^N / N! * sum_k x^k N!/(N+k)!
        let log_scale = log_x * nf - ln_factorial(n as u64) - x;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        let mut comp = Complex64::new(0.0, 0.0);
        let mut mags = 1.0;
        for k in 1..1_000_000usize {
            term *= x / (nf + k as f64);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            let tn = term.norm();
            mags += tn;
            let ratio = x.norm() / (nf + k as f64 + 1.0);
            if tn * ratio / (1.0 - ratio) <= 1e-17 * sum.norm() {
                break;
            }
        }
        return SnParts { base: 1.0, log_scale, mantissa: -sum, magnitude_sum: mags, peak_index: n };
    }
    let log_terms: Vec<Complex64> = (0..n).map(|j| log_x * j as f64 - ln_factorial(j as u64)).collect();
    let (peak_index, peak) = log_terms
        .iter()
        .enumerate()
        .map(|(j, l)| (j, l.re))
        .fold((0, f64::NEG_INFINITY), |acc, (j, r)| if r > acc.1 { (j, r) } else { acc });
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    let mut mags = 0.0;
    for l in &log_terms {
        let term = (l - peak).exp();
        mags += term.norm();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    SnParts { base: 0.0, log_scale: Complex64::new(peak, 0.0) - x, mantissa: sum, magnitude_sum: mags, peak_index }
}

/// Exact truncated exponential `s_N(x)`.
pub fn sn_exact(x: Complex64, n: usize) -> Result<SnEvaluation> {
    if n == 0 {
        return Err(Error::OutOfDomain("s_N needs N >= 1".into()));
    }
    let parts = sn_parts(x, n);
    let value = parts.value()?;
    let scale = parts.log_scale.re.exp();
    let est_error = 4.0 * f64::EPSILON * (parts.base + scale * parts.magnitude_sum);
    Ok(SnEvaluation { value, method: SnMethod::ExactSum, est_error })
}

/// Settings for the large-`N` form of `s_N(N z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticSn {
    /// Constant `C` in the error bound `C / N * |correction|`.
    pub c_hat: f64,
    /// Minimum allowed `|1 - z|`.
    pub delta_min: f64,
}

impl Default for AsymptoticSn {
    fn default() -> Self {
        Self { c_hat: 10.0, delta_min: 0.05 }
    }
}

/// `ln` of the correction term `(2 pi N)^{-1/2} (z e^{1-z})^N / (1 - z)`.
pub fn sn_correction_log(z: Complex64, n: usize) -> Complex64 {
    let nf = n as f64;
    let one = Complex64::new(1.0, 0.0);
    (z.ln() + one - z) * nf - 0.5 * (2.0 * std::f64::consts::PI * nf).ln() - (one - z).ln()
}

/// Large-`N` approximation of `s_N(N z)`:
/// `1 - (2 pi N)^{-1/2} (z e^{1-z})^N / (1 - z)`, with error estimate
/// `c_hat / N * |correction|`.
pub fn sn_asymptotic(z: Complex64, n: usize, cfg: &AsymptoticSn) -> Result<SnEvaluation> {
    if n == 0 {
        return Err(Error::OutOfDomain("s_N needs N >= 1".into()));
    }
    if (Complex64::new(1.0, 0.0) - z).norm() < cfg.delta_min {
        return Err(Error::OutOfDomain(format!("|1 - z| = {:.3e} is below {}", (1.0 - z).norm(), cfg.delta_min)));
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(SnEvaluation { value: Complex64::new(1.0, 0.0), method: SnMethod::Asymptotic, est_error: 0.0 });
    }
    let log_corr = sn_correction_log(z, n);
    if log_corr.re > SAFE_LOG_MAGNITUDE {
        return Err(Error::Overflow { index: n, log_magnitude: log_corr.re });
    }
    let corr = log_corr.exp();
    Ok(SnEvaluation {
        value: 1.0 - corr,
        method: SnMethod::Asymptotic,
        est_error: cfg.c_hat / n as f64 * corr.norm(),
    })
}

/// Stirling numbers of the second kind, `S(n, m)`, for `n <= 30`.
pub fn stirling2(n: usize, m: usize) -> Result<u128> {
    if n > 30 {
        return Err(Error::Range { what: "stirling n", value: n, max: 30 });
    }
    if m > n {
        return Ok(0);
    }
    let mut row = vec![0u128; n + 1];
    row[0] = 1;
    for i in 1..=n {
        for k in (1..=i).rev() {
            row[k] = k as u128 * row[k] + row[k - 1];
        }
        row[0] = 0;
    }
    Ok(row[m])
}

/// Row `S(n, 0..=n)` as floats.
pub fn stirling2_row(n: usize) -> Result<Vec<f64>> {
    (0..=n).map(|m| stirling2(n, m).map(|s| s as f64)).collect()
}
