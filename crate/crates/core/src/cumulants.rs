//! Factorial moments, cumulants and pseudo-cumulants.
//!
//! `H_n` (factorial moments to cumulants) is the composition of two standard
//! maps: `m_n = sum_k S(n, k) J_k` and the moment-cumulant recursion.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolygonDomain;
use crate::kernel::{self, Backend};
use crate::pfaffian::determinant;
use crate::quadrature::{self, DomainSampler, Estimate, QuadratureSpec};
use crate::rng;
use crate::specfun::stirling2;

pub const MAX_ORDER: usize = 8;

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Range { what: "cumulant order", value: n, max: MAX_ORDER });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Raw moments from cumulants (inverse of [`moments_to_cumulants`]).
pub fn cumulants_to_moments(k: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = Vec::with_capacity(k.len());
    for n in 1..=k.len() {
        let mut v = k[n - 1];
        for j in 1..n {
            v += binomial(n - 1, j - 1) * k[j - 1] * m[n - j - 1];
        }
        m.push(v);
    }
    m
}

/// Cumulants from raw moments `m_1, ..., m_n`:
/// `k_n = m_n - sum_{j<n} C(n-1, j-1) k_j m_{n-j}`.
pub fn moments_to_cumulants(m: &[f64]) -> Vec<f64> {
    let mut k: Vec<f64> = Vec::with_capacity(m.len());
    for n in 1..=m.len() {
        let mut v = m[n - 1];
        for j in 1..n {
            v -= binomial(n - 1, j - 1) * k[j - 1] * m[n - j - 1];
        }
        k.push(v);
    }
    k
}

/// `m_n = sum_k S(n, k) J_k`.
pub fn factorial_to_raw_moments(j: &[f64]) -> Result<Vec<f64>> {
    check_order(j.len())?;
    (1..=j.len())
        .map(|n| (1..=n).map(|k| Ok(stirling2(n, k)? as f64 * j[k - 1])).sum())
        .collect()
}

/// `J_n = sum_k s(n, k) m_k` with signed Stirling numbers of the first kind.
pub fn raw_to_factorial_moments(m: &[f64]) -> Result<Vec<f64>> {
    check_order(m.len())?;
    // coefficients of x (x-1) ... (x-n+1)
    let mut poly = vec![1.0];
    let mut out = Vec::with_capacity(m.len());
    for n in 1..=m.len() {
        let mut next = vec![0.0; n + 1];
        for (p, c) in poly.iter().enumerate() {
            next[p + 1] += c;
            next[p] -= (n - 1) as f64 * c;
        }
        poly = next;
        out.push((1..=n).map(|k| poly[k] * m[k - 1]).sum());
    }
    Ok(out)
}

/// `kappa_n = H_n(J_1, ..., J_n)` for `n = 1..=j.len()`.
pub fn factorial_moments_to_cumulants(j: &[f64]) -> Result<Vec<f64>> {
    Ok(moments_to_cumulants(&factorial_to_raw_moments(j)?))
}

pub fn cumulants_to_factorial_moments(k: &[f64]) -> Result<Vec<f64>> {
    check_order(k.len())?;
    raw_to_factorial_moments(&cumulants_to_moments(k))
}

/// Coefficient of `R_m` in the pseudo-cumulant of order `n`:
/// `(-1)^{m-1} (m-1)! S(n, m)`.
pub fn pseudo_cumulant_coefficient(n: usize, m: usize) -> Result<f64> {
    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * factorial(m - 1) * stirling2(n, m)? as f64)
}

/// `kappa~_n = sum_m (-1)^{m-1} (m-1)! S(n, m) R_m` for `n = 1..=r.len()`.
pub fn pseudo_cumulants_from_r(r: &[f64]) -> Result<Vec<f64>> {
    check_order(r.len())?;
    (1..=r.len())
        .map(|n| (1..=n).map(|m| Ok(pseudo_cumulant_coefficient(n, m)? * r[m - 1])).sum())
        .collect()
}

/// Propagated standard errors of [`pseudo_cumulants_from_r`] for independent
/// `R_m` estimates.
pub fn pseudo_cumulant_errors(r_err: &[f64]) -> Result<Vec<f64>> {
    check_order(r_err.len())?;
    (1..=r_err.len())
        .map(|n| {
            let s: Result<f64> = (1..=n).map(|m| Ok((pseudo_cumulant_coefficient(n, m)? * r_err[m - 1]).powi(2))).sum();
            s.map(f64::sqrt)
        })
        .collect()
}

/// `T_k = sum_sigma sgn(sigma) prod_cycles R_{|c|}` for `k = 1..=r.len()`,
/// the determinantal factorial moments in terms of the cyclic integrals.
pub fn factorial_moments_from_r(r: &[f64]) -> Result<Vec<f64>> {
    check_order(r.len())?;
    // T_k = sum_{j=1}^k (-1)^{j-1} (k-1)!/(k-j)! R_j T_{k-j}, from the cycle
    // containing the element k
    let mut t = vec![1.0];
    for k in 1..=r.len() {
        let mut v = 0.0;
        for j in 1..=k {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            v += sign * factorial(k - 1) / factorial(k - j) * r[j - 1] * t[k - j];
        }
        t.push(v);
    }
    t.remove(0);
    Ok(t)
}

/// Fitted recursion `kappa~_n = (-1)^n (n-1)! (R_1 - R_n) + sum_{j=2}^{n-1} alpha_j kappa~_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionFit {
    pub n: usize,
    /// `alpha_j` for `j = 2..n-1`.
    pub alpha: Vec<f64>,
    /// Largest residual on fresh random inputs.
    pub residual: f64,
}

pub const RECURSION_MAX_ORDER: usize = 6;

fn recursion_lhs(r: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
    let k = pseudo_cumulants_from_r(&r[..n])?;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let lhs = k[n - 1] - sign * factorial(n - 1) * (r[0] - r[n - 1]);
    Ok((lhs, k[1..n - 1].to_vec()))
}

/// Residual of the recursion at `r` for coefficients `alpha` (`alpha[j-2]` multiplies `kappa~_j`).
pub fn recursion_residual(r: &[f64], alpha: &[f64]) -> Result<f64> {
    let n = r.len();
    if !(2..=RECURSION_MAX_ORDER).contains(&n) {
        return Err(Error::Range { what: "recursion order", value: n, max: RECURSION_MAX_ORDER });
    }
    if alpha.len() != n - 2 {
        return Err(Error::Degenerate(format!("need {} coefficients, got {}", n - 2, alpha.len())));
    }
    let (lhs, ks) = recursion_lhs(r, n)?;
    Ok((lhs - ks.iter().zip(alpha).map(|(k, a)| k * a).sum::<f64>()).abs())
}

/// Solves for `alpha` by least squares on `n(n-1)/2` random inputs and
/// checks the recursion on `fresh` new ones.
pub fn fit_recursion(n: usize, seed: u64, fresh: usize) -> Result<RecursionFit> {
    if !(2..=RECURSION_MAX_ORDER).contains(&n) {
        return Err(Error::Range { what: "recursion order", value: n, max: RECURSION_MAX_ORDER });
    }
    let mut r = rng::stream(seed, n as u64);
    let mut draw = || -> Vec<f64> { (0..n).map(|_| rng::next_normal(&mut r)).collect() };
    let p = n - 2;
    let rows = (n * (n - 1) / 2).max(p);
    // normal equations A^T A alpha = A^T b
    let mut ata = vec![vec![0.0; p]; p];
    let mut atb = vec![0.0; p];
    for _ in 0..rows {
        let (lhs, ks) = recursion_lhs(&draw(), n)?;
        for a in 0..p {
            atb[a] += ks[a] * lhs;
            for b in 0..p {
                ata[a][b] += ks[a] * ks[b];
            }
        }
    }
    let alpha = solve_spd(&ata, &atb)?;
    let mut residual = 0.0f64;
    for _ in 0..fresh {
        residual = residual.max(recursion_residual(&draw(), &alpha)?);
    }
    Ok(RecursionFit { n, alpha, residual })
}

fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return Err(Error::Conditioning(f64::INFINITY));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| l[i][i]).collect();
    if n > 0 {
        let cond = (diag.iter().cloned().fold(0.0, f64::max) / diag.iter().cloned().fold(f64::INFINITY, f64::min)).powi(2);
        if cond > 1e12 {
            return Err(Error::Conditioning(cond));
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Ok(x)
}

/// Limiting variance of `X_A / N^{1/4}`: `perimeter / (2 pi^{3/2})`.
pub fn clt_prediction(domain: &PolygonDomain) -> f64 {
    domain.perimeter() / (2.0 * PI.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TMethod {
    /// Cycle expansion of the determinant over the `R_m` estimates.
    Cycles,
    /// Uniform Monte Carlo over `A^k` of the determinant itself.
    Direct,
}

pub const T_MAX_K: usize = 3;

/// `T_k = N^k int_{A^k} det Q^{(k)}(sqrt(N) z_1, ..., sqrt(N) z_k) dz`.
pub fn pseudo_cumulant_t(domain: &PolygonDomain, k: usize, n: usize, spec: &QuadratureSpec, method: TMethod) -> Result<Estimate> {
    if k == 0 || k > T_MAX_K {
        return Err(Error::Range { what: "factorial moment order k", value: k, max: T_MAX_K });
    }
    match method {
        TMethod::Cycles => {
            let r: Vec<Estimate> = (1..=k).map(|m| quadrature::r_m_integral(domain, m, n, spec).map(|e| e.re())).collect::<Result<_>>()?;
            let vals: Vec<f64> = r.iter().map(|e| e.value).collect();
            let t = factorial_moments_from_r(&vals)?[k - 1];
            // first-order propagation; the R_m runs are independent
            let h = 1e-6;
            let mut var = 0.0;
            for m in 0..k {
                let mut up = vals.clone();
                let step = h * vals[m].abs().max(1.0);
                up[m] += step;
                let d = (factorial_moments_from_r(&up)?[k - 1] - t) / step;
                var += (d * r[m].std_error).powi(2);
            }
            Ok(Estimate { value: t, std_error: var.sqrt() })
        }
        TMethod::Direct => {
            let samples = spec.resolution as usize;
            if samples < 2 {
                return Err(Error::InsufficientSamples { needed: 2, got: samples });
            }
            let sampler = DomainSampler::new(domain);
            let nf = n as f64;
            let pref = (domain.area() * nf).powi(k as i32);
            let acc = quadrature::mc_batches(samples, rng::derive_seed(spec.seed, 300 + k as u64), |r| {
                let pts: Vec<Complex64> = (0..k).map(|_| sampler.sample(r)).collect();
                let q: Vec<Vec<Complex64>> = pts
                    .iter()
                    .map(|&a| pts.iter().map(|&b| kernel::s_scaled(a, b, n, Backend::Exact).unwrap_or(Complex64::new(f64::NAN, 0.0))).collect())
                    .collect();
                determinant(&q) * pref
            });
            Ok(acc.estimate().re())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Empirical,
    KernelQuadrature,
    Prediction,
}

/// Cumulants of `X_A` from one pipeline. `cumulants` are raw; the
/// standardized values are `kappa_n / N^{n/4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub n_max: usize,
    pub source: Source,
    #[serde(rename = "N")]
    pub n: usize,
    pub domain_hash: String,
    /// `J_k` (empirical) or `T_k` (kernel quadrature).
    pub factorial_moments: Vec<f64>,
    pub cumulants: Vec<f64>,
    pub cumulant_errors: Vec<f64>,
    pub standardized: Vec<f64>,
    /// `R_1, ..., R_{n_max}` for the kernel-quadrature source.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_values: Option<Vec<Estimate>>,
}

impl CumulantReport {
    pub fn new(source: Source, n: usize, domain_hash: String, factorial_moments: Vec<f64>, cumulants: Vec<f64>, cumulant_errors: Vec<f64>) -> Self {
        let standardized = standardize(&cumulants, n);
        Self { n_max: cumulants.len(), source, n, domain_hash, factorial_moments, cumulants, cumulant_errors, standardized, r_values: None }
    }
}

/// `kappa_n / N^{n/4}`, the cumulants of `X_A / N^{1/4}`.
pub fn standardize(k: &[f64], n: usize) -> Vec<f64> {
    k.iter().enumerate().map(|(i, v)| v / (n as f64).powf((i + 1) as f64 / 4.0)).collect()
}

/// Pseudo-cumulants from kernel integrals: `R_1` by grid quadrature and
/// `R_2, R_3` by Monte Carlo with `spec`.
pub fn quadrature_cumulant_report(domain: &PolygonDomain, n: usize, n_max: usize, spec: &QuadratureSpec) -> Result<CumulantReport> {
    if n_max == 0 || n_max > quadrature::R_MAX_M {
        return Err(Error::Range { what: "n_max", value: n_max, max: quadrature::R_MAX_M });
    }
    let r: Vec<Estimate> = (1..=n_max).map(|m| quadrature::r_m_integral(domain, m, n, spec).map(|e| e.re())).collect::<Result<_>>()?;
    let vals: Vec<f64> = r.iter().map(|e| e.value).collect();
    let errs: Vec<f64> = r.iter().map(|e| e.std_error).collect();
    let t = factorial_moments_from_r(&vals)?;
    let k = pseudo_cumulants_from_r(&vals)?;
    let mut report = CumulantReport::new(Source::KernelQuadrature, n, domain.hash(), t, k, pseudo_cumulant_errors(&errs)?);
    report.r_values = Some(r);
    Ok(report)
}

/// The limiting law: mean `(N / pi) area(A)`, variance
/// `perimeter sqrt(N) / (2 pi^{3/2})`, higher cumulants zero.
pub fn prediction_report(domain: &PolygonDomain, n: usize, n_max: usize) -> Result<CumulantReport> {
    check_order(n_max)?;
    let mut k = vec![0.0; n_max];
    if n_max >= 1 {
        k[0] = n as f64 / PI * domain.area();
    }
    if n_max >= 2 {
        k[1] = clt_prediction(domain) * (n as f64).sqrt();
    }
    let j = cumulants_to_factorial_moments(&k)?;
    Ok(CumulantReport::new(Source::Prediction, n, domain.hash(), j, k, vec![0.0; n_max]))
}
