//! GinOE sampling, spectra, and eigenvalue counting statistics.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::cumulants::{self, CumulantReport, Source};
use crate::geometry::{PolygonDomain, DEFAULT_DELTA_MIN};
use crate::{rng, Complex64 as C64, Error, Result};

pub const DEFAULT_EIG_RESIDUAL_TOL: f64 = 1e-9;
/// Failed solves above this fraction abort a run.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;
/// Dimension above which [`Verification::for_dim`] switches to trace checks.
pub const RESIDUAL_CHECK_MAX_DIM: usize = 512;
pub const MAX_CUMULANT_ORDER: usize = 4;

/// `n x n` matrix of standard normals, row-major. Entry `(i, j)` depends on
/// `(seed, i, j)` only.
pub fn sample_ginoe(n: usize, seed: u64) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for (i, row) in g.chunks_mut(n.max(1)).enumerate() {
        rng::gaussian_row(seed, i, n, row);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    /// `||W v - lambda v|| <= tol ||W||_F` for every unit eigenvector.
    Residuals,
    /// `|sum lambda^k - tr W^k| <= tol n ||W||_F^k` for `k = 1, 2`.
    TraceIdentities,
}

impl Verification {
    pub fn for_dim(n: usize) -> Self {
        if n <= RESIDUAL_CHECK_MAX_DIM {
            Verification::Residuals
        } else {
            Verification::TraceIdentities
        }
    }
}

fn frobenius(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pairs non-real eigenvalues so that the lower one is the bitwise conjugate
/// of the upper one. Output order: reals ascending, then pairs by real part.
fn enforce_pairs(vals: Vec<C64>, seed: u64) -> Result<Vec<C64>> {
    let mut upper: Vec<C64> = vals.iter().copied().filter(|z| z.im > 0.0).collect();
    let lower = vals.iter().filter(|z| z.im < 0.0).count();
    if upper.len() != lower {
        return Err(Error::Solver { seed, reason: format!("{} eigenvalues above the real axis but {lower} below", upper.len()) });
    }
    let mut out: Vec<C64> = vals.iter().filter(|z| z.im == 0.0).map(|z| C64::new(z.re, 0.0)).collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re));
    upper.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for z in upper {
        out.push(z);
        out.push(z.conj());
    }
    Ok(out)
}

/// All eigenvalues of the real row-major `n x n` matrix `w`.
///
/// `seed` is only carried into errors. faer runs sequentially here: the
/// ensemble parallelizes over samples instead.
pub fn spectrum(w: &[f64], n: usize, tol: f64, verification: Verification, seed: u64) -> Result<Vec<C64>> {
    if w.len() != n * n || n == 0 {
        return Err(Error::Degenerate(format!("expected {n}x{n} entries, got {}", w.len())));
    }
    faer::set_global_parallelism(faer::Par::Seq);
    let m = Mat::<f64>::from_fn(n, n, |i, j| w[i * n + j]);
    let norm = frobenius(w);
    let fail = |reason: String| Error::Solver { seed, reason };
    let vals = match verification {
        Verification::Residuals => {
            let evd = m.eigen().map_err(|e| fail(format!("{e:?}")))?;
            let (u, s) = (evd.U(), evd.S());
            let mut vals = Vec::with_capacity(n);
            for k in 0..n {
                let lam = s.column_vector()[k];
                let vnorm = (0..n).map(|i| u[(i, k)].norm_sqr()).sum::<f64>().sqrt();
                let mut res = 0.0;
                for i in 0..n {
                    let mut acc = -lam * u[(i, k)];
                    for j in 0..n {
                        acc += w[i * n + j] * u[(j, k)];
                    }
                    res += acc.norm_sqr();
                }
                let res = res.sqrt() / vnorm;
                if !(res <= tol * norm) {
                    return Err(fail(format!("eigenpair {k} residual {res:e} above {:e}", tol * norm)));
                }
                vals.push(lam);
            }
            vals
        }
        Verification::TraceIdentities => {
            let vals = m.eigenvalues().map_err(|e| fail(format!("{e:?}")))?;
            let tr1: f64 = (0..n).map(|i| w[i * n + i]).sum();
            let tr2: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| w[i * n + j] * w[j * n + i]).sum();
            let s1: C64 = vals.iter().sum();
            let s2: C64 = vals.iter().map(|z| z * z).sum();
            let (e1, e2) = ((s1 - tr1).norm(), (s2 - tr2).norm());
            let scale = tol * n as f64;
            if !(e1 <= scale * norm && e2 <= scale * norm * norm) {
                return Err(fail(format!("trace identity mismatch ({e1:e}, {e2:e})")));
            }
            vals
        }
    };
    enforce_pairs(vals, seed)
}

/// Eigenvalues of `W = G / sqrt(n)` for the matrix keyed by `seed`.
pub fn sample_spectrum(n: usize, seed: u64, tol: f64, verification: Verification) -> Result<Vec<C64>> {
    let s = 1.0 / (n as f64).sqrt();
    let w: Vec<f64> = sample_ginoe(n, seed).into_iter().map(|x| x * s).collect();
    spectrum(&w, n, tol, verification, seed)
}

pub fn count_in(domain: &PolygonDomain, eigs: &[C64]) -> u32 {
    eigs.iter().filter(|z| z.im > 0.0 && domain.contains(**z)).count() as u32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: usize,
    pub m_samples: usize,
    pub master_seed: u64,
    pub domains: Vec<PolygonDomain>,
    pub eig_residual_tol: f64,
    pub verification: Verification,
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
    /// Keep full spectra in the records (memory heavy).
    #[serde(default)]
    pub keep_spectra: bool,
}

fn default_delta_min() -> f64 {
    DEFAULT_DELTA_MIN
}

impl EnsembleConfig {
    pub fn new(n: usize, m_samples: usize, master_seed: u64, domains: Vec<PolygonDomain>) -> Self {
        Self {
            n,
            m_samples,
            master_seed,
            domains,
            eig_residual_tol: DEFAULT_EIG_RESIDUAL_TOL,
            verification: Verification::for_dim(n),
            delta_min: DEFAULT_DELTA_MIN,
            keep_spectra: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Range { what: "n", value: 0, max: usize::MAX });
        }
        if self.m_samples == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if self.domains.is_empty() {
            return Err(Error::InvalidDomain("no domains given".into()));
        }
        for d in &self.domains {
            d.check_admissible(self.delta_min)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub sample_index: usize,
    pub seed: u64,
    pub n: usize,
    pub counts: Vec<u32>,
    pub n_real_eigs: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eigenvalues: Option<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_index: usize,
    pub seed: u64,
    pub reason: String,
}

/// Unbiased k-statistics with delete-one jackknife errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStatistics {
    pub samples: usize,
    pub k: [f64; 4],
    pub k_errors: [f64; 4],
    pub skewness: f64,
    pub skewness_error: f64,
    pub excess_kurtosis: f64,
    pub excess_kurtosis_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub statistic: f64,
    pub df: usize,
    pub critical_1pct: f64,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain_id: usize,
    pub domain_hash: String,
    pub mean: f64,
    pub variance: f64,
    pub stats: KStatistics,
    /// `Var / sqrt(n)` and its jackknife error.
    pub variance_scaled: f64,
    pub variance_scaled_error: f64,
    /// `perimeter / (2 pi^{3/2})`.
    pub prediction: f64,
    /// `(n / pi) area`.
    pub leading_mean: f64,
    pub normality: Option<NormalityTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub m_samples: usize,
    pub master_seed: u64,
    pub completed: usize,
    pub failures: Vec<SampleFailure>,
    pub mean_real_eigs: f64,
    pub domains: Vec<DomainSummary>,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub records: Vec<EnsembleRecord>,
    pub summary: EnsembleSummary,
}

/// Samples `m_samples` matrices in parallel and counts eigenvalues per
/// domain. Sample `i` uses seed `derive_seed(master_seed, i)`; results are
/// gathered in index order, so the output does not depend on the pool size.
pub fn count_statistics(config: &EnsembleConfig) -> Result<EnsembleRun> {
    config.validate()?;
    let outcomes: Vec<std::result::Result<EnsembleRecord, SampleFailure>> = (0..config.m_samples)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(config.master_seed, i as u64);
            match sample_spectrum(config.n, seed, config.eig_residual_tol, config.verification) {
                Ok(eigs) => Ok(EnsembleRecord {
                    sample_index: i,
                    seed,
                    n: config.n,
                    counts: config.domains.iter().map(|d| count_in(d, &eigs)).collect(),
                    n_real_eigs: eigs.iter().filter(|z| z.im == 0.0).count(),
                    eigenvalues: config.keep_spectra.then_some(eigs),
                }),
                Err(e) => Err(SampleFailure { sample_index: i, seed, reason: e.to_string() }),
            }
        })
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * config.m_samples as f64 {
        return Err(Error::TooManyFailures { failed: failures.len(), total: config.m_samples });
    }
    let summary = summarize(config, &records, failures)?;
    Ok(EnsembleRun { records, summary })
}

fn summarize(config: &EnsembleConfig, records: &[EnsembleRecord], failures: Vec<SampleFailure>) -> Result<EnsembleSummary> {
    let m = records.len();
    let mean_real_eigs = records.iter().map(|r| r.n_real_eigs as f64).sum::<f64>() / m.max(1) as f64;
    let sqrt_n = (config.n as f64).sqrt();
    let mut domains = Vec::new();
    for (id, d) in config.domains.iter().enumerate() {
        let data = counts_of(records, id);
        let stats = k_statistics(&data)?;
        domains.push(DomainSummary {
            domain_id: id,
            domain_hash: d.hash(),
            mean: stats.k[0],
            variance: stats.k[1],
            variance_scaled: stats.k[1] / sqrt_n,
            variance_scaled_error: stats.k_errors[1] / sqrt_n,
            prediction: cumulants::clt_prediction(d),
            leading_mean: config.n as f64 / std::f64::consts::PI * d.area(),
            normality: chi_square_normality(&data).ok(),
            stats,
        });
    }
    Ok(EnsembleSummary { n: config.n, m_samples: config.m_samples, master_seed: config.master_seed, completed: m, failures, mean_real_eigs, domains })
}

/// Counts of domain `id` across records, in record order.
pub fn counts_of(records: &[EnsembleRecord], id: usize) -> Vec<f64> {
    records.iter().map(|r| r.counts[id] as f64).collect()
}

/// k-statistics `k_1..k_4` from power sums of (shifted) data.
fn k_from_sums(m: f64, s: [f64; 4]) -> [f64; 4] {
    let [s1, s2, s3, s4] = s;
    let k1 = s1 / m;
    let k2 = (m * s2 - s1 * s1) / (m * (m - 1.0));
    let k3 = (2.0 * s1.powi(3) - 3.0 * m * s1 * s2 + m * m * s3) / (m * (m - 1.0) * (m - 2.0));
    let k4 = (-6.0 * s1.powi(4) + 12.0 * m * s1 * s1 * s2 - 3.0 * m * (m - 1.0) * s2 * s2 - 4.0 * m * (m + 1.0) * s1 * s3
        + m * m * (m + 1.0) * s4)
        / (m * (m - 1.0) * (m - 2.0) * (m - 3.0));
    [k1, k2, k3, k4]
}

fn shape(k: &[f64; 4]) -> (f64, f64) {
    (k[2] / k[1].powf(1.5), k[3] / (k[1] * k[1]))
}

pub fn k_statistics(data: &[f64]) -> Result<KStatistics> {
    let m = data.len();
    if m < 5 {
        return Err(Error::InsufficientSamples { needed: 5, got: m });
    }
    // Shift by the mean so the power sums stay well scaled.
    let c = data.iter().sum::<f64>() / m as f64;
    let mut s = [0.0; 4];
    for &x in data {
        let y = x - c;
        s[0] += y;
        s[1] += y * y;
        s[2] += y * y * y;
        s[3] += y * y * y * y;
    }
    let mf = m as f64;
    let mut k = k_from_sums(mf, s);
    let (skew, kurt) = shape(&k);
    // Delete-one jackknife.
    let mut loo = Vec::with_capacity(m);
    for &x in data {
        let y = x - c;
        let t = [s[0] - y, s[1] - y * y, s[2] - y * y * y, s[3] - y * y * y * y];
        let kk = k_from_sums(mf - 1.0, t);
        let (a, b) = shape(&kk);
        loo.push([kk[0], kk[1], kk[2], kk[3], a, b]);
    }
    let mut err = [0.0; 6];
    for (q, e) in err.iter_mut().enumerate() {
        let mean = loo.iter().map(|v| v[q]).sum::<f64>() / mf;
        *e = ((mf - 1.0) / mf * loo.iter().map(|v| (v[q] - mean).powi(2)).sum::<f64>()).sqrt();
    }
    k[0] += c;
    Ok(KStatistics {
        samples: m,
        k,
        k_errors: [err[0], err[1], err[2], err[3]],
        skewness: skew,
        skewness_error: err[4],
        excess_kurtosis: kurt,
        excess_kurtosis_error: err[5],
    })
}

/// Empirical cumulants `kappa_1..kappa_{n_max}` of `data` (k-statistics) with
/// jackknife errors, plus empirical factorial moments.
pub fn empirical_cumulant_report(data: &[f64], n: usize, n_max: usize, domain_hash: String) -> Result<CumulantReport> {
    if n_max == 0 || n_max > MAX_CUMULANT_ORDER {
        return Err(Error::Range { what: "n_max", value: n_max, max: MAX_CUMULANT_ORDER });
    }
    if data.len() < 100 * n_max {
        return Err(Error::InsufficientSamples { needed: 100 * n_max, got: data.len() });
    }
    let st = k_statistics(data)?;
    let m = data.len() as f64;
    let factorial: Vec<f64> = (1..=n_max)
        .map(|k| data.iter().map(|&x| (0..k).map(|j| x - j as f64).product::<f64>()).sum::<f64>() / m)
        .collect();
    Ok(CumulantReport::new(Source::Empirical, n, domain_hash, factorial, st.k[..n_max].to_vec(), st.k_errors[..n_max].to_vec()))
}

/// Chi-square goodness of fit of integer data to the normal with the sample
/// mean and variance. Each integer `k` gets the mass of `[k - 1/2, k + 1/2)`;
/// bins are merged from the tails until every expected count is at least 5.
pub fn chi_square_normality(data: &[f64]) -> Result<NormalityTest> {
    let m = data.len();
    if m < 20 {
        return Err(Error::InsufficientSamples { needed: 20, got: m });
    }
    if data.iter().any(|x| x.fract() != 0.0) {
        return Err(Error::Unsupported("normality test expects integer counts".into()));
    }
    let mf = m as f64;
    let mean = data.iter().sum::<f64>() / mf;
    let sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("constant data".into()));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::Degenerate(e.to_string()))?;
    let lo = data.iter().fold(f64::INFINITY, |a, &b| a.min(b)) as i64;
    let hi = data.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) as i64;
    let mut observed = vec![0.0; (hi - lo + 1) as usize];
    for &x in data {
        observed[(x as i64 - lo) as usize] += 1.0;
    }
    // Expected counts per integer; the end bins absorb the tails.
    let cdf = |x: f64| normal.cdf(x);
    let mut expected: Vec<f64> = (lo..=hi).map(|k| mf * (cdf(k as f64 + 0.5) - cdf(k as f64 - 0.5))).collect();
    expected[0] += mf * cdf(lo as f64 - 0.5);
    *expected.last_mut().unwrap() += mf * (1.0 - cdf(hi as f64 + 0.5));
    let mut bins: Vec<(f64, f64)> = observed.into_iter().zip(expected).collect();
    while bins.len() > 1 && bins[0].1 < 5.0 {
        let b = bins.remove(0);
        bins[0].0 += b.0;
        bins[0].1 += b.1;
    }
    while bins.len() > 1 && bins[bins.len() - 1].1 < 5.0 {
        let b = bins.pop().unwrap();
        let last = bins.len() - 1;
        bins[last].0 += b.0;
        bins[last].1 += b.1;
    }
    if bins.len() < 4 {
        return Err(Error::InsufficientSamples { needed: 4, got: bins.len() });
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = bins.len() - 3;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Degenerate(e.to_string()))?;
    let critical_1pct = chi.inverse_cdf(0.99);
    Ok(NormalityTest { statistic, df, critical_1pct, p_value: 1.0 - chi.cdf(statistic), passed: statistic < critical_1pct })
}

/// Records as CSV rows `sample_index,seed,n,domain_id,count`.
pub fn records_csv(records: &[EnsembleRecord]) -> String {
    let mut out = String::from("sample_index,seed,n,domain_id,count\n");
    for r in records {
        for (id, c) in r.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{}\n", r.sample_index, r.seed, r.n, id, c));
        }
    }
    out
}
