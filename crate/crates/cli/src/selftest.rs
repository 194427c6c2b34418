//! Quick invariant suite behind `ginoe selftest`.

use ginoe_core::cumulants::{clt_prediction, factorial_moments_to_cumulants, pseudo_cumulants_from_r};
use ginoe_core::ensemble::{sample_spectrum, Verification, DEFAULT_EIG_RESIDUAL_TOL};
use ginoe_core::pfaffian::{determinant, pfaffian_checkerboard, pfaffian_with, rho_k, rho_k_determinantal, PfaffianMethod, SkewMatrix};
use ginoe_core::quadrature::{intensity_integral, variance_integral, variance_integral_covariogram, DomainSampler, QuadratureSpec};
use ginoe_core::{reference_square, rng, Complex64};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check { name, passed: worst <= tol, detail: format!("worst {worst:.3e}, tolerance {tol:.1e}") }
}

fn random_c(r: &mut rng::Stream) -> Complex64 {
    Complex64::new(rng::next_normal(r), rng::next_normal(r))
}

fn random_skew(r: &mut rng::Stream, dim: usize) -> SkewMatrix {
    let upper: Vec<Complex64> = (0..dim * (dim - 1) / 2).map(|_| random_c(r)).collect();
    SkewMatrix::from_upper(dim, &upper).expect("valid skew input")
}

fn pf_squared(seed: u64) -> Check {
    let mut r = rng::stream(seed, 1);
    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let dim = 2 * (1 + t % 6);
        let m = random_skew(&mut r, dim);
        let pf = pfaffian_with(&m, PfaffianMethod::Elimination).expect("pfaffian");
        let det = determinant(&m.rows());
        worst = worst.max((pf * pf - det).norm() / det.norm().max(1e-300));
    }
    check("pfaffian_squared_equals_determinant", worst, 1e-8)
}

fn checkerboard(seed: u64) -> Check {
    let mut r = rng::stream(seed, 2);
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let k = 1 + t % 5;
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); 2 * k]; 2 * k];
        for i in 0..k {
            for j in 0..k {
                let v = random_c(&mut r);
                rows[2 * i][2 * j + 1] = v;
                rows[2 * j + 1][2 * i] = -v;
            }
        }
        let m = SkewMatrix::new(rows).expect("skew");
        let a = pfaffian_checkerboard(&m).expect("checkerboard pattern");
        let b = pfaffian_with(&m, PfaffianMethod::Matching).expect("matching");
        worst = worst.max((a - b).norm() / b.norm().max(1e-300));
    }
    check("checkerboard_reduction", worst, 1e-10)
}

fn poisson() -> Check {
    let lam: f64 = 2.5;
    let j: Vec<f64> = (1..=6).map(|k| lam.powi(k)).collect();
    let worst = factorial_moments_to_cumulants(&j).expect("order <= 6").iter().map(|v| (v - lam).abs()).fold(0.0, f64::max);
    check("poisson_factorial_moments", worst, 1e-9)
}

fn constant_r() -> Check {
    let k = pseudo_cumulants_from_r(&[3.7; 6]).expect("order <= 6");
    let worst = k[1..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    check("constant_r_pseudo_cumulants_vanish", worst, 1e-10)
}

fn determinantal(seed: u64) -> Check {
    let sq = reference_square();
    let sampler = DomainSampler::new(&sq);
    let mut r = rng::stream(seed, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let pts = [sampler.sample(&mut r), sampler.sample(&mut r)];
        let a = rho_k(&pts, 100, true).expect("rho_2");
        let b = rho_k_determinantal(&pts, 100, true).expect("det Q");
        worst = worst.max((a - b).abs() / a.abs());
    }
    check("determinantal_approximation_rho2", worst, 1e-6)
}

fn variance_routes() -> Check {
    let sq = reference_square();
    let a = variance_integral(&sq, 256, &QuadratureSpec::boundary(2.0)).expect("boundary layer").value;
    let b = variance_integral_covariogram(&sq, 256).expect("covariogram").value;
    check("variance_routes_agree", (a - b).abs() / b, 1e-5)
}

fn variance_prediction() -> Check {
    let sq = reference_square();
    let v = variance_integral(&sq, 4096, &QuadratureSpec::boundary(2.0)).expect("boundary layer").value / 64.0;
    let p = clt_prediction(&sq);
    check("variance_matches_boundary_length", (v - p).abs() / p, 0.02)
}

fn intensity() -> Check {
    let sq = reference_square();
    let e = intensity_integral(&sq, 400, &QuadratureSpec::grid(32.0)).expect("intensity");
    check("intensity_defect", ((e.defect - e.correction) / e.correction).abs(), 0.05)
}

fn conjugation(seed: u64) -> Check {
    let mut bad = 0;
    for s in 0..5 {
        let e = sample_spectrum(50, rng::derive_seed(seed, s), DEFAULT_EIG_RESIDUAL_TOL, Verification::Residuals).expect("spectrum");
        if e.iter().filter(|z| z.im != 0.0).any(|z| !e.contains(&z.conj())) {
            bad += 1;
        }
    }
    check("spectrum_conjugation_closed", bad as f64, 0.0)
}

pub fn run(seed: u64) -> SelftestReport {
    let checks = vec![
        pf_squared(seed),
        checkerboard(seed),
        poisson(),
        constant_r(),
        determinantal(seed),
        variance_routes(),
        variance_prediction(),
        intensity(),
        conjugation(seed),
    ];
    SelftestReport { passed: checks.iter().all(|c| c.passed), checks }
}
