//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing the harness capture) and then asserts.
//!
//! The two ensemble runs dominate the cost: 5000 solves at n = 256 and 2000
//! solves at n = 1024.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use ginoe_core::cumulants::{self, clt_prediction};
use ginoe_core::ensemble::{self, EnsembleConfig, EnsembleRun};
use ginoe_core::kernel::{self, Backend};
use ginoe_core::pfaffian::{self, PfaffianMethod, SkewMatrix};
use ginoe_core::quadrature::{self, DiskProfile, DomainSampler, GaussianProfile, QuadratureSpec};
use ginoe_core::specfun::{sn_correction_log, sn_parts};
use ginoe_core::{reference_square, rng, Complex64};

fn line(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance {id:>2}] {tag} {name}: {detail}");
}

fn clt_run() -> &'static EnsembleRun {
    static RUN: OnceLock<EnsembleRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let cfg = EnsembleConfig::new(256, 5000, 20240601, vec![reference_square()]);
        let run = ensemble::count_statistics(&cfg).expect("ensemble run");
        let _ = writeln!(std::io::stderr(), "[acceptance] n = 256, m = 5000 ensemble took {:.1?}", t.elapsed());
        run
    })
}

#[test]
fn c01_clt_variance() {
    let d = &clt_run().summary.domains[0];
    let rel = d.variance_scaled / d.prediction - 1.0;
    let pass = rel.abs() <= 0.10;
    line(
        1,
        "ensemble Var/sqrt(N) vs boundary-length prediction",
        pass,
        format!(
            "{:.5} +- {:.5} vs {:.5} (rel {:+.2}%, tol 10%); mean {:.3} vs (N/pi) area {:.3}",
            d.variance_scaled,
            d.variance_scaled_error,
            d.prediction,
            100.0 * rel,
            d.mean,
            d.leading_mean
        ),
    );
    assert!(pass);
    assert!((d.mean / d.leading_mean - 1.0).abs() <= 0.02);
}

#[test]
fn c02_gaussianity() {
    let d = &clt_run().summary.domains[0];
    let t = d.normality.as_ref().expect("normality test ran");
    let pass = d.stats.skewness.abs() <= 0.1 && d.stats.excess_kurtosis.abs() <= 0.2 && t.passed;
    line(
        2,
        "standardized count is Gaussian",
        pass,
        format!(
            "skewness {:+.4} +- {:.4} (|.| <= 0.1), excess kurtosis {:+.4} +- {:.4} (|.| <= 0.2), chi2 {:.2} on {} df vs 1% critical {:.2}",
            d.stats.skewness,
            d.stats.skewness_error,
            d.stats.excess_kurtosis,
            d.stats.excess_kurtosis_error,
            t.statistic,
            t.df,
            t.critical_1pct
        ),
    );
    assert!(pass);
}

#[test]
fn c03_variance_quadrature() {
    let sq = reference_square();
    let t = Instant::now();
    let v = quadrature::variance_integral(&sq, 4096, &QuadratureSpec::boundary(quadrature::DEFAULT_BAND_RESOLUTION)).unwrap();
    let el = t.elapsed();
    let scaled = v.value / 64.0;
    let p = clt_prediction(&sq);
    let rel = scaled / p - 1.0;
    let pass = rel.abs() <= 0.02;
    line(3, "variance quadrature at N = 4096", pass, format!("{scaled:.6} vs {p:.6} (rel {:+.3}%, tol 2%) in {el:.2?}", 100.0 * rel));
    assert!(pass);
}

#[test]
fn c04_boundary_layer_limit() {
    let sq = reference_square();
    let target = 4.0 / std::f64::consts::PI * sq.perimeter();
    let spec = QuadratureSpec::boundary(quadrature::DEFAULT_BAND_RESOLUTION);
    let g = quadrature::lin_limit(&sq, &GaussianProfile { alpha: 2.0 }, 10_000, &spec).unwrap().value;
    let d = quadrature::lin_limit(&sq, &DiskProfile { radius: 1.0 }, 10_000, &spec).unwrap().value;
    let rel = |v: f64| v / target - 1.0;
    let pass = rel(g).abs() <= 0.01 && rel(d).abs() <= 0.01;
    line(
        4,
        "boundary-layer limit (4/pi) perimeter at N = 1e4",
        pass,
        format!(
            "gaussian {g:.5}, disk {d:.5} vs {target:.5} (rel {:+.1}%, {:+.1}%); profiles agree to {:.2e}; perimeter/pi = {:.5}",
            100.0 * rel(g),
            100.0 * rel(d),
            (g - d).abs() / d,
            sq.perimeter() / std::f64::consts::PI
        ),
    );
    assert!(pass);
}

#[test]
fn c05_first_intensity_defect() {
    let sq = reference_square();
    let e = quadrature::intensity_integral(&sq, 400, &QuadratureSpec::grid(32.0)).unwrap();
    let rel = e.defect / e.correction - 1.0;
    let pass = rel.abs() <= 0.05;
    line(5, "first-intensity defect at N = 400", pass, format!("{:.6} vs {:.6} (rel {:+.2}%, tol 5%)", e.defect, e.correction, 100.0 * rel));
    assert!(pass);
}

fn square_grid(k: usize) -> Vec<Complex64> {
    let mut pts = Vec::new();
    for i in 0..k {
        for j in 0..k {
            pts.push(Complex64::new(0.1 + 0.4 * i as f64 / (k - 1) as f64, 0.3 + 0.4 * j as f64 / (k - 1) as f64));
        }
    }
    pts
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn c06_kernel_decay() {
    let pts = square_grid(8);
    let ns = [25usize, 50, 100, 200];
    let (mut log_d, mut log_i, mut sup_s) = (vec![], vec![], vec![]);
    for &n in &ns {
        let (mut d, mut i, mut s) = (0f64, 0f64, 0f64);
        for &z in &pts {
            for &w in &pts {
                d = d.max(kernel::d_scaled(z, w, n).unwrap().norm());
                i = i.max(kernel::i_scaled(z, w, n).unwrap().norm());
                s = s.max(kernel::s_scaled(z, w, n, Backend::Exact).unwrap().norm());
            }
        }
        log_d.push(d.ln());
        log_i.push(i.ln());
        sup_s.push(s);
    }
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (sd, si) = (slope(&x, &log_d), slope(&x, &log_i));
    let smax = sup_s.iter().fold(0f64, |a, &b| a.max(b));
    let pass = sd <= -0.05 && si <= -0.05 && smax <= 10.0;
    line(6, "kernel decay on the reference square", pass, format!("slope ln sup|D| {sd:.4}, ln sup|I| {si:.4} (<= -0.05), sup|S| {smax:.4} (<= 10)"));
    assert!(pass);
}

/// `R(z; N)` from `s_N(N z) = 1 - c_N(z) (1 + R)`, with `1 - s_N` taken from
/// the complement form so no cancellation occurs.
fn remainder(z: Complex64, n: usize) -> f64 {
    let p = sn_parts(z * n as f64, n);
    assert_eq!(p.base, 1.0);
    (-(p.log_scale - sn_correction_log(z, n)).exp() * p.mantissa - 1.0).norm()
}

#[test]
fn c07_sn_asymptotics() {
    // 5 x 4 grid on the square.
    let grid: Vec<Complex64> =
        (0..5).flat_map(|i| (0..4).map(move |j| Complex64::new(0.1 + 0.1 * i as f64, 0.3 + 0.4 * j as f64 / 3.0))).collect();
    let ns = [50usize, 100, 200, 400];
    let mut worst_scaled: f64 = 0.0;
    let mut sup = vec![];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &z in &grid {
        let r: Vec<f64> = ns.iter().map(|&n| remainder(z, n)).collect();
        for (k, &n) in ns.iter().enumerate() {
            worst_scaled = worst_scaled.max(r[k] * n as f64);
        }
        let s = slope(&ns.iter().map(|&n| (n as f64).ln()).collect::<Vec<_>>(), &r.iter().map(|v| v.ln()).collect::<Vec<_>>());
        lo = lo.min(s);
        hi = hi.max(s);
        sup.push(r);
    }
    let sup_r: Vec<f64> = (0..ns.len()).map(|k| sup.iter().map(|r| r[k]).fold(0.0, f64::max)).collect();
    let sup_slope = slope(&ns.iter().map(|&n| (n as f64).ln()).collect::<Vec<_>>(), &sup_r.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let pass = worst_scaled <= 10.0 && (-1.3..=-0.7).contains(&sup_slope) && lo >= -1.3 && hi <= -0.7;
    line(
        7,
        "s_N remainder is O(1/N)",
        pass,
        format!("max N|R| {worst_scaled:.4} (<= 10), log-log slope of sup|R| {sup_slope:.4}, pointwise slopes in [{lo:.4}, {hi:.4}] (within [-1.3, -0.7])"),
    );
    assert!(pass);
}

fn random_c(r: &mut rng::Stream) -> Complex64 {
    Complex64::new(rng::next_normal(r), rng::next_normal(r))
}

#[test]
fn c08_pfaffian_algebra() {
    let mut r = rng::stream(8, 0);
    let mut worst_det: f64 = 0.0;
    for t in 0..200 {
        let dim = 2 + 2 * (t % 6);
        let upper: Vec<Complex64> = (0..dim * (dim - 1) / 2).map(|_| random_c(&mut r)).collect();
        let m = SkewMatrix::from_upper(dim, &upper).unwrap();
        let pf = pfaffian::pfaffian(&m);
        let det = pfaffian::determinant(&m.rows());
        worst_det = worst_det.max((pf * pf - det).norm() / det.norm());
    }
    let mut worst_cb: f64 = 0.0;
    for t in 0..100 {
        let k = 1 + t % 6;
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); 2 * k]; 2 * k];
        for i in 0..k {
            for j in 0..k {
                let v = random_c(&mut r);
                rows[2 * i][2 * j + 1] = v;
                rows[2 * j + 1][2 * i] = -v;
            }
        }
        let m = SkewMatrix::new(rows).unwrap();
        let a = pfaffian::pfaffian_checkerboard(&m).unwrap();
        let b = pfaffian::pfaffian_with(&m, PfaffianMethod::Matching).unwrap();
        worst_cb = worst_cb.max((a - b).norm() / b.norm());
    }
    let pass = worst_det <= 1e-8 && worst_cb <= 1e-10;
    line(8, "Pfaffian algebra", pass, format!("max rel |Pf^2 - det| {worst_det:.2e} (<= 1e-8), max rel checkerboard gap {worst_cb:.2e} (<= 1e-10)"));
    assert!(pass);
}

#[test]
fn c09_determinantal_approximation() {
    let sq = reference_square();
    let sampler = DomainSampler::new(&sq);
    let mut r = rng::stream(9, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let pts = [sampler.sample(&mut r), sampler.sample(&mut r)];
        let a = pfaffian::rho_k(&pts, 100, true).unwrap();
        let b = pfaffian::rho_k_determinantal(&pts, 100, true).unwrap();
        worst = worst.max((a - b).abs() / a.abs());
    }
    let pass = worst <= 1e-6;
    line(9, "rho_2 Pfaffian vs det Q at N = 100", pass, format!("max rel gap {worst:.2e} over 50 pairs (<= 1e-6)"));
    assert!(pass);
}

#[test]
fn c10_cumulant_machinery() {
    let lam: f64 = 2.5;
    let j: Vec<f64> = (1..=6).map(|k| lam.powi(k)).collect();
    let poisson = cumulants::factorial_moments_to_cumulants(&j).unwrap().iter().map(|v| (v - lam).abs()).fold(0.0, f64::max);
    let constant = cumulants::pseudo_cumulants_from_r(&[3.7; 6]).unwrap()[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);

    let sq = reference_square();
    let n = 1024;
    let t = Instant::now();
    let cfg = EnsembleConfig::new(n, 2000, 1024, vec![sq.clone()]);
    let run = ensemble::count_statistics(&cfg).unwrap();
    let el = t.elapsed();
    let emp = ensemble::empirical_cumulant_report(&ensemble::counts_of(&run.records, 0), n, 2, sq.hash()).unwrap();
    let quad = cumulants::quadrature_cumulant_report(&sq, n, 2, &QuadratureSpec::monte_carlo(1 << 20, 10)).unwrap();
    let pred = cumulants::prediction_report(&sq, n, 2).unwrap();
    let vals = [emp.cumulants[1], quad.cumulants[1], pred.cumulants[1]];
    let errs = [emp.cumulant_errors[1], quad.cumulant_errors[1], pred.cumulant_errors[1]];
    let spread = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let combined = errs.iter().map(|e| e * e).sum::<f64>().sqrt();
    let pass = poisson <= 1e-9 && constant <= 1e-10 && spread <= 3.0 * combined;
    line(
        10,
        "cumulant machinery and three-pipeline kappa_2",
        pass,
        format!(
            "Poisson gap {poisson:.1e}, constant-R gap {constant:.1e}; kappa_2 empirical {:.4} +- {:.4}, quadrature {:.4} +- {:.4}, prediction {:.4}; spread {spread:.4} vs 3 x combined {:.4}; ensemble {el:.1?}",
            vals[0],
            errs[0],
            vals[1],
            errs[1],
            vals[2],
            3.0 * combined
        ),
    );
    assert!(pass);
}

#[test]
fn c11_r_k_asymptotics() {
    let sq = reference_square();
    let lead = |n: usize| n as f64 / std::f64::consts::PI * sq.area();
    let r2 = |n: usize| quadrature::r_m_integral(&sq, 2, n, &QuadratureSpec::monte_carlo(1 << 20, 11)).unwrap();
    let (a, b) = (r2(256), r2(1024));
    let ra = (a.value.re - lead(256)).abs() / 256.0;
    let rb = (b.value.re - lead(1024)).abs() / 1024.0;
    let (ea, eb) = (a.std_error_re / 256.0, b.std_error_re / 1024.0);
    let q = rb / ra;
    let q_err = q * ((ea / ra).powi(2) + (eb / rb).powi(2)).sqrt();
    let ratio_ok = q <= 0.5 + 3.0 * q_err;
    let imag_ok = a.value.im.abs() <= 3.0 * a.std_error_im + 1e-12 && b.value.im.abs() <= 3.0 * b.std_error_im + 1e-12;
    let mut i0 = vec![];
    for k in [2usize, 3] {
        let e = quadrature::i0_check(&sq, k, 256, &QuadratureSpec::monte_carlo(1 << 20, 12)).unwrap();
        i0.push((k, e.ratio.value, e.ratio.std_error));
    }
    let i0_ok = i0.iter().all(|&(_, v, s)| (v - 1.0).abs() <= 3.0 * s + 1e-12);
    let pass = ratio_ok && imag_ok && i0_ok;
    line(
        11,
        "R_2 defect shrinks and I_0 closed form",
        pass,
        format!(
            "|R_2 - (N/pi) area|/N: {ra:.6} (N=256), {rb:.6} (N=1024), ratio {q:.4} +- {q_err:.4} (<= 0.5 within 3 sigma); Im R_2 within 3 sigma: {imag_ok}; I_0 ratios {}",
            i0.iter().map(|(k, v, s)| format!("k={k}: {v:.5} +- {s:.5}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(pass);
}
