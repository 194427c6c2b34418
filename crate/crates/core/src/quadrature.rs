//! Integrals over domains and products of domains.
//!
//! * smooth integrands over `A` (first intensity, `int_A Im(z)^{-2}`): uniformly
//!   refined triangulation with a collapsed Gauss-Legendre rule per triangle;
//! * integrals over `A x A^c` of a radial kernel at scale `1/sqrt(N)`: the
//!   inner integral over `A^c` is reduced to one angular integral per edge, and
//!   the outer integral refines triangles only inside the boundary band where
//!   the inner integral is nonzero;
//! * cyclic products `R_m` and the `I_0` chain integral: Monte Carlo with the
//!   exact Gaussian chain as proposal, in fixed-size batches on counter-keyed
//!   streams so the estimate does not depend on the thread count.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PolygonDomain;
use crate::kernel::{self, Backend};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadMethod {
    TensorGrid,
    MonteCarlo,
    BoundaryRefined,
}

/// Discretization settings. `resolution` is cells per unit length for the
/// grid methods and the sample count for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: QuadMethod,
    pub resolution: f64,
    pub seed: u64,
    /// Largest acceptable error estimate; infinite disables the check.
    pub error_target: f64,
}

impl QuadratureSpec {
    pub fn grid(resolution: f64) -> Self {
        Self { method: QuadMethod::TensorGrid, resolution, seed: 0, error_target: f64::INFINITY }
    }

    /// Boundary-layer refinement; `resolution` is leaf cells per `1/sqrt(N)`.
    pub fn boundary(resolution: f64) -> Self {
        Self { method: QuadMethod::BoundaryRefined, resolution, seed: 0, error_target: f64::INFINITY }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self { method: QuadMethod::MonteCarlo, resolution: samples as f64, seed, error_target: f64::INFINITY }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.error_target = target;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::OutOfDomain(format!("quadrature resolution must be positive, got {}", self.resolution)));
        }
        Ok(())
    }

    fn check(&self, estimate: Estimate, scale: f64) -> Result<Estimate> {
        if estimate.std_error > self.error_target {
            let factor = match self.method {
                QuadMethod::MonteCarlo => (estimate.std_error / self.error_target).powi(2),
                _ => scale,
            };
            return Err(Error::Accuracy {
                estimate: estimate.std_error,
                target: self.error_target,
                recommended: (self.resolution * factor).ceil(),
            });
        }
        Ok(estimate)
    }
}

/// A value with its error estimate (standard error for Monte Carlo, a
/// refinement or rule-order difference for grids).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub std_error_re: f64,
    pub std_error_im: f64,
}

/// Gauss-Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn gauss_legendre(order: usize) -> Rule {
    let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
    let (nodes, weights) = gl.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip();
    Rule { nodes, weights }
}

impl Rule {
    /// `int_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(a + h * x)).sum::<f64>() * h
    }
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn tri_area(t: &[Complex64; 3]) -> f64 {
    0.5 * cross(t[1] - t[0], t[2] - t[0]).abs()
}

/// Collapsed (Duffy) product rule on a triangle.
fn integrate_triangle(t: &[Complex64; 3], rule: &Rule, f: &mut impl FnMut(Complex64) -> f64) -> f64 {
    let (a, b, c) = (t[0], t[1], t[2]);
    let jac = 2.0 * tri_area(t);
    let mut sum = 0.0;
    for (u, wu) in rule.nodes.iter().zip(&rule.weights) {
        for (v, wv) in rule.nodes.iter().zip(&rule.weights) {
            let p = a + (b - a) * *u + (c - b) * (u * v);
            sum += wu * wv * u * f(p);
        }
    }
    sum * jac
}

fn split4(t: &[Complex64; 3]) -> [[Complex64; 3]; 4] {
    let (a, b, c) = (t[0], t[1], t[2]);
    let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}

/// Uniform `k x k` refinement of a triangle into `k^2` congruent pieces.
fn refine(t: &[Complex64; 3], k: usize) -> Vec<[Complex64; 3]> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let p = |i: usize, j: usize| a + (b - a) * (i as f64 / k as f64) + (c - a) * (j as f64 / k as f64);
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k - i {
            out.push([p(i, j), p(i + 1, j), p(i, j + 1)]);
            if i + j + 1 < k {
                out.push([p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)]);
            }
        }
    }
    out
}

const GRID_ORDER: usize = 8;

/// `int_A f` on a triangulation refined to about `resolution` cells per unit length.
pub fn integrate_smooth(domain: &PolygonDomain, resolution: f64, f: impl Fn(Complex64) -> f64 + Sync) -> f64 {
    let rule = gauss_legendre(GRID_ORDER);
    let cells: Vec<[Complex64; 3]> = domain
        .triangulate()
        .iter()
        .flat_map(|t| {
            let longest = (0..3).map(|i| (t[i] - t[(i + 1) % 3]).norm()).fold(0.0, f64::max);
            refine(t, ((longest * resolution).ceil() as usize).max(1))
        })
        .collect();
    let parts: Vec<f64> = cells.par_iter().map(|t| integrate_triangle(t, &rule, &mut |z| f(z))).collect();
    parts.iter().sum()
}

/// `int_A f` with an error estimate from halving the resolution.
fn grid_estimate(domain: &PolygonDomain, spec: &QuadratureSpec, f: impl Fn(Complex64) -> f64 + Sync) -> Result<Estimate> {
    spec.validate()?;
    match spec.method {
        QuadMethod::MonteCarlo => {
            let sampler = DomainSampler::new(domain);
            let area = domain.area();
            let acc = mc_batches(spec.resolution as usize, rng::derive_seed(spec.seed, 1), |r| {
                Complex64::new(area * f(sampler.sample(r)), 0.0)
            });
            spec.check(acc.estimate().re(), 4.0)
        }
        _ => {
            let fine = integrate_smooth(domain, spec.resolution, &f);
            let coarse = integrate_smooth(domain, 0.5 * spec.resolution, &f);
            spec.check(Estimate { value: fine, std_error: (fine - coarse).abs() }, 2.0)
        }
    }
}

/// First intensity integral and its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    /// `N int_A S_N(sqrt(N) z, sqrt(N) z) dz`.
    pub integral: Estimate,
    /// `(N / pi) area(A)`.
    pub leading: f64,
    /// `integral - leading`.
    pub defect: f64,
    /// `-(1 / 4 pi) int_A Im(z)^{-2} dz`, the limit of the defect.
    pub correction: f64,
}

/// `int_A Im(z)^{-2} dz`.
pub fn inverse_square_height_integral(domain: &PolygonDomain, resolution: f64) -> f64 {
    integrate_smooth(domain, resolution, |z| 1.0 / (z.im * z.im))
}

pub fn intensity_integral(domain: &PolygonDomain, n: usize, spec: &QuadratureSpec) -> Result<IntensityEstimate> {
    // surface kernel errors before the parallel sweep
    kernel::intensity_scaled(domain.centroid(), n)?;
    let integral = grid_estimate(domain, spec, |z| kernel::intensity_scaled(z, n).unwrap_or(f64::NAN))?;
    if !integral.value.is_finite() {
        return Err(Error::Overflow { index: n, log_magnitude: f64::INFINITY });
    }
    let leading = n as f64 / PI * domain.area();
    let res = if spec.method == QuadMethod::MonteCarlo { 16.0 } else { spec.resolution };
    Ok(IntensityEstimate {
        integral,
        leading,
        defect: integral.value - leading,
        correction: -inverse_square_height_integral(domain, res) / (4.0 * PI),
    })
}

// ---------------------------------------------------------------------------
// Boundary layer

/// Tail of a radial profile, `Psi(t) = int_t^inf J(s) s ds`, vanishing
/// beyond `t_max`.
pub trait Tail: Sync {
    fn psi(&self, t: f64) -> f64;
    fn t_max(&self) -> f64;
    /// Points in `(0, t_max)` where `Psi` is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `J(s) = exp(-s^2)`, so `Psi(t) = exp(-t^2) / 2`.
pub struct GaussianTail;

impl Tail for GaussianTail {
    fn psi(&self, t: f64) -> f64 {
        0.5 * (-t * t).exp()
    }
    fn t_max(&self) -> f64 {
        // Psi < 1e-18 beyond
        6.5
    }
}

const EDGE_ORDER: usize = 12;

/// `int_{A^c} J(sqrt(N) |w - z|) dw * N` for `z` in `A`, as a sum of signed
/// angular integrals over the edges seen from `z`. Valid for any simple
/// polygon: edges facing away from `z` enter with a negative sign.
fn complement_integral(domain: &PolygonDomain, z: Complex64, sqrt_n: f64, tail: &dyn Tail, rule: &Rule) -> f64 {
    let t_max = tail.t_max();
    let mut total = 0.0;
    for (a, b) in domain.edges() {
        let e = b - a;
        let len = e.norm();
        let t_hat = e / len;
        let n_hat = Complex64::new(t_hat.im, -t_hat.re);
        let da = a - z;
        let d = da.re * n_hat.re + da.im * n_hat.im;
        let delta = d.abs() * sqrt_n;
        if d == 0.0 || delta >= t_max {
            continue;
        }
        let sa = da.re * t_hat.re + da.im * t_hat.im;
        let sb = sa + len;
        // rays with |psi| > psi_c reach the edge line beyond t_max
        let psi_c = (delta / t_max).acos();
        let lo = (sa / d.abs()).atan().max(-psi_c);
        let hi = (sb / d.abs()).atan().min(psi_c);
        if hi <= lo {
            continue;
        }
        let mut cuts = vec![lo];
        // grade toward psi_c, where delta / cos(psi) sweeps from delta to t_max
        let mut arg = 2.0 * delta;
        while arg < t_max {
            let p = (delta / arg).acos();
            for c in [-p, p] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
            arg *= 2.0;
        }
        for k in tail.kinks() {
            if k > delta {
                let p = (delta / k).acos();
                for c in [-p, p] {
                    if c > lo && c < hi {
                        cuts.push(c);
                    }
                }
            }
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let mut part = 0.0;
        for w in cuts.windows(2) {
            part += rule.integrate(w[0], w[1], |psi| tail.psi(delta / psi.cos()));
        }
        total += d.signum() * part;
    }
    total
}

fn band_distance(domain: &PolygonDomain, t: &[Complex64; 3]) -> (f64, f64) {
    let c = (t[0] + t[1] + t[2]) / 3.0;
    let radius = t.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    (domain.distance_to_boundary(c), radius)
}

/// `int_A int_{A^c} J(sqrt(N)|z - w|) dw dz * N^{3/2}` for the profile with
/// tail `tail`, with an error estimate from two outer rule orders.
fn boundary_layer(domain: &PolygonDomain, n: usize, leaf_per_scale: f64, tail: &dyn Tail) -> Estimate {
    let sqrt_n = (n as f64).sqrt();
    let band = tail.t_max() / sqrt_n;
    let leaf = 1.0 / (sqrt_n * leaf_per_scale);
    let mut leaves = Vec::new();
    let mut stack: Vec<[Complex64; 3]> = domain.triangulate();
    while let Some(t) = stack.pop() {
        let (dist, radius) = band_distance(domain, &t);
        if dist - radius > band {
            continue;
        }
        if 2.0 * radius <= leaf {
            leaves.push(t);
        } else {
            stack.extend(split4(&t));
        }
    }
    // deterministic order regardless of stack traversal
    leaves.sort_by(|a, b| {
        let ka = (a[0] + a[1] + a[2]) / 3.0;
        let kb = (b[0] + b[1] + b[2]) / 3.0;
        ka.re.total_cmp(&kb.re).then(ka.im.total_cmp(&kb.im))
    });
    let edge_rule = gauss_legendre(EDGE_ORDER);
    let hi = gauss_legendre(6);
    let lo = gauss_legendre(4);
    let parts: Vec<(f64, f64)> = leaves
        .par_iter()
        .map(|t| {
            let mut f = |z: Complex64| complement_integral(domain, z, sqrt_n, tail, &edge_rule);
            (integrate_triangle(t, &hi, &mut f), integrate_triangle(t, &lo, &mut f))
        })
        .collect();
    let (a, b) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    Estimate { value: a * sqrt_n, std_error: (a - b).abs() * sqrt_n }
}

/// Default leaf cells per `1/sqrt(N)` for the boundary band.
pub const DEFAULT_BAND_RESOLUTION: f64 = 2.0;

/// Variance of the eigenvalue count,
/// `(N^2 / pi^2) int_A int_{A^c} exp(-N |z - w|^2) dw dz`.
pub fn variance_integral(domain: &PolygonDomain, n: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::OutOfDomain("N must be positive".into()));
    }
    let per_scale = match spec.method {
        QuadMethod::MonteCarlo => {
            return Err(Error::Unsupported("variance_integral uses deterministic boundary refinement".into()))
        }
        _ => spec.resolution,
    };
    let layer = boundary_layer(domain, n, per_scale, &GaussianTail);
    // layer = N^{3/2} int int exp(-N|z-w|^2)
    let f = (n as f64).sqrt() / (PI * PI);
    spec.check(Estimate { value: layer.value * f, std_error: layer.std_error * f }, 2.0)
}

/// The same variance from `(N / pi) area(A) - (N^2 / pi^2) int_A int_A exp(-N|z-w|^2)`,
/// with the double integral over `A x A` written through the covariogram
/// `area(A intersect (A + v))`. Convex domains only.
pub fn variance_integral_covariogram(domain: &PolygonDomain, n: usize) -> Result<Estimate> {
    if !domain.is_convex() {
        return Err(Error::Unsupported("covariogram route needs a convex domain".into()));
    }
    let nf = n as f64;
    let a = domain.area();
    let verts = domain.vertices();
    let s_max = 6.5;
    let eval = |s_order: usize, th_order: usize| -> f64 {
        let s_rule = gauss_legendre(s_order);
        let th_rule = gauss_legendre(th_order);
        // Radial pieces change order along vertex-difference directions.
        let mut cuts: Vec<f64> = vec![0.0, 2.0 * PI];
        for p in verts {
            for q in verts {
                if p != q {
                    cuts.push((q - p).arg().rem_euclid(2.0 * PI));
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += th_rule.integrate(w[0], w[1], |th| {
                let dir = Complex64::from_polar(1.0, th);
                // Along the ray the overlap is piecewise quadratic, with breaks
                // where a vertex of one copy crosses an edge line of the other.
                let mut breaks = vec![0.0, s_max];
                for (a, b) in domain.edges() {
                    let c = cross(b - a, dir);
                    if c.abs() < 1e-300 {
                        continue;
                    }
                    for &p in verts {
                        let t = cross(b - a, p - a) / c;
                        for u in [t, -t] {
                            let s = u * nf.sqrt();
                            if s > 0.0 && s < s_max {
                                breaks.push(s);
                            }
                        }
                    }
                }
                breaks.sort_by(f64::total_cmp);
                breaks
                    .windows(2)
                    .map(|ab| {
                        s_rule.integrate(ab[0], ab[1], |s| {
                            let v = dir * (s / nf.sqrt());
                            (-s * s).exp() * s * overlap_area(domain, v)
                        })
                    })
                    .sum::<f64>()
            });
        }
        // int exp(-N|v|^2) gamma(v) dv = (1/N) int dtheta int exp(-s^2) gamma s ds
        total / nf
    };
    let fine = eval(24, 16);
    let coarse = eval(16, 12);
    let pref = nf * nf / (PI * PI);
    let value = nf / PI * a - pref * fine;
    Ok(Estimate { value, std_error: pref * (fine - coarse).abs() + 64.0 * f64::EPSILON * nf / PI * a })
}

/// `area(A intersect (A + v))` for convex `A` (Sutherland-Hodgman clipping).
pub fn overlap_area(domain: &PolygonDomain, v: Complex64) -> f64 {
    let mut poly: Vec<Complex64> = domain.vertices().iter().map(|p| p + v).collect();
    for (a, b) in domain.edges() {
        if poly.is_empty() {
            break;
        }
        let inside = |p: Complex64| cross(b - a, p - a) >= 0.0;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (ci, pi_) = (inside(cur), inside(prev));
            if ci != pi_ {
                let d1 = cross(b - a, prev - a);
                let d2 = cross(b - a, cur - a);
                out.push(prev + (cur - prev) * (d1 / (d1 - d2)));
            }
            if ci {
                out.push(cur);
            }
        }
        poly = out;
    }
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        s += cross(poly[i], poly[(i + 1) % poly.len()]);
    }
    0.5 * s.abs()
}

/// Midpoint-grid value of `int_C exp(-N |z - w|^2) dz / (pi / N)`.
pub fn gaussian_normalization_check(n: usize, w: Complex64, cells: usize) -> f64 {
    let nf = n as f64;
    let half = 8.0 / nf.sqrt();
    let h = 2.0 * half / cells as f64;
    let mut sum = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let z = w + Complex64::new(-half + (i as f64 + 0.5) * h, -half + (j as f64 + 0.5) * h);
            sum += (-nf * (z - w).norm_sqr()).exp();
        }
    }
    sum * h * h / (PI / nf)
}

// ---------------------------------------------------------------------------
// Radial profiles

/// Nonnegative radially symmetric profile `J(r)`, up to normalization.
pub trait RadialProfile: Sync {
    fn value(&self, r: f64) -> f64;
    /// Radius beyond which `J` vanishes, if compactly supported.
    fn support(&self) -> Option<f64> {
        None
    }
    /// Radii where `J` is discontinuous or not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `J(r) = exp(-alpha r^2)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianProfile {
    pub alpha: f64,
}

impl RadialProfile for GaussianProfile {
    fn value(&self, r: f64) -> f64 {
        (-self.alpha * r * r).exp()
    }
}

/// Indicator of `r <= radius`.
#[derive(Debug, Clone, Copy)]
pub struct DiskProfile {
    pub radius: f64,
}

impl RadialProfile for DiskProfile {
    fn value(&self, r: f64) -> f64 {
        if r <= self.radius {
            1.0
        } else {
            0.0
        }
    }
    fn support(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Profile from a closure.
pub struct FnProfile<F: Fn(f64) -> f64 + Sync>(pub F);

impl<F: Fn(f64) -> f64 + Sync> RadialProfile for FnProfile<F> {
    fn value(&self, r: f64) -> f64 {
        (self.0)(r)
    }
}

/// Profile rescaled so that `int_C J(|z|) |z| dz = 1`, with its tail
/// `Psi(t) = c int_t^R J(s) s ds` tabulated for cubic Hermite interpolation.
pub struct NormalizedProfile {
    /// Normalizing factor `c`.
    pub scale: f64,
    /// Cutoff radius `R`.
    pub cutoff: f64,
    knots: Vec<f64>,
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    kinks: Vec<f64>,
}

const PROFILE_TABLE: usize = 4096;
const PROFILE_MAX_RADIUS: f64 = 1e4;

impl NormalizedProfile {
    pub fn new(profile: &dyn RadialProfile) -> Result<Self> {
        let cutoff = match profile.support() {
            Some(r) if r > 0.0 && r.is_finite() => r,
            Some(r) => return Err(Error::Profile(format!("support radius {r} is not positive"))),
            None => Self::find_cutoff(profile)?,
        };
        // sample for sign and finiteness
        for i in 0..=2000 {
            let r = cutoff * i as f64 / 2000.0;
            let v = profile.value(r);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Profile(format!("J({r}) = {v} is not a finite nonnegative number")));
            }
        }
        let mut kinks: Vec<f64> = profile.breakpoints().into_iter().filter(|&b| b > 0.0 && b < cutoff).collect();
        kinks.sort_by(f64::total_cmp);
        let rule = gauss_legendre(16);
        let h = cutoff / PROFILE_TABLE as f64;
        let mut knots: Vec<f64> = (0..=PROFILE_TABLE).map(|i| i as f64 * h).collect();
        knots.extend(&kinks);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        // Psi at knots, accumulated from the cutoff inward
        let mut psi = vec![0.0; knots.len()];
        let mut moment = 0.0;
        for i in (0..knots.len() - 1).rev() {
            let (a, b) = (knots[i], knots[i + 1]);
            psi[i] = psi[i + 1] + rule.integrate(a, b, |s| profile.value(s) * s);
            moment += rule.integrate(a, b, |s| profile.value(s) * s * s);
        }
        let moment = 2.0 * PI * moment;
        if !(moment > 0.0) || !moment.is_finite() {
            return Err(Error::Profile(format!("radial moment {moment} cannot be normalized")));
        }
        let scale = 1.0 / moment;
        let n = knots.len();
        let dpsi: Vec<f64> = knots
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                // one-sided value at the right end of the support
                let tt = if i == n - 1 { t * (1.0 - 1e-12) } else { t };
                -scale * profile.value(tt) * t
            })
            .collect();
        let psi = psi.into_iter().map(|p| p * scale).collect();
        Ok(Self { scale, cutoff, knots, psi, dpsi, kinks })
    }

    fn find_cutoff(profile: &dyn RadialProfile) -> Result<f64> {
        // scan outward until J(r) r^3 is negligible relative to its peak
        let mut peak = 0.0f64;
        let mut r = 1e-3;
        let mut last_big = 0.0;
        while r <= PROFILE_MAX_RADIUS {
            let v = profile.value(r) * r * r * r;
            if !v.is_finite() {
                return Err(Error::Profile(format!("J({r}) is not finite")));
            }
            peak = peak.max(v);
            if v > 1e-20 * peak {
                last_big = r;
            }
            if r > 4.0 * last_big.max(1.0) {
                return Ok(last_big.max(1e-3) * 1.25);
            }
            r *= 1.05;
        }
        Err(Error::Profile("radial moment int J(r) r^2 dr does not converge".into()))
    }

    fn locate(&self, t: f64) -> usize {
        match self.knots.binary_search_by(|k| k.total_cmp(&t)) {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }
}

impl Tail for NormalizedProfile {
    fn psi(&self, t: f64) -> f64 {
        if t >= self.cutoff {
            return 0.0;
        }
        let t = t.max(0.0);
        let i = self.locate(t);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let s = (t - x0) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * self.psi[i] + h10 * h * self.dpsi[i] + h01 * self.psi[i + 1] + h11 * h * self.dpsi[i + 1]
    }
    fn t_max(&self) -> f64 {
        self.cutoff
    }
    fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }
}

/// `N^{3/2} int_A int_{A^c} J(sqrt(N)(z - w)) dw dz` for `J` rescaled so that
/// `int J(|z|) |z| dz = 1`.
pub fn lin_limit(domain: &PolygonDomain, profile: &dyn RadialProfile, n: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    let tail = NormalizedProfile::new(profile)?;
    let est = boundary_layer(domain, n, spec.resolution, &tail);
    spec.check(est, 2.0)
}

// ---------------------------------------------------------------------------
// Monte Carlo

/// Uniform sampler on a polygon through its triangulation.
pub struct DomainSampler {
    tris: Vec<[Complex64; 3]>,
    cumulative: Vec<f64>,
}

impl DomainSampler {
    pub fn new(domain: &PolygonDomain) -> Self {
        let tris = domain.triangulate();
        let mut acc = 0.0;
        let cumulative = tris
            .iter()
            .map(|t| {
                acc += tri_area(t);
                acc
            })
            .collect();
        Self { tris, cumulative }
    }

    pub fn sample(&self, r: &mut ChaCha8Rng) -> Complex64 {
        let total = *self.cumulative.last().unwrap();
        let u = rng::next_unit(r) * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.tris.len() - 1);
        let t = &self.tris[i];
        let s = rng::next_unit(r).sqrt();
        let v = rng::next_unit(r);
        t[0] * (1.0 - s) + t[1] * (s * (1.0 - v)) + t[2] * (s * v)
    }
}

/// Gaussian law of the chain `z_2 - z_1, ..., z_m - z_1` with density
/// proportional to `exp(-(N/2) sum_cycle |z_i - z_{i+1}|^2)`; the precision
/// matrix is `N` times the cycle Laplacian with vertex 1 removed.
pub struct CycleGaussian {
    m: usize,
    chol: Vec<Vec<f64>>,
    /// `int_{C^{m-1}} exp(-(N/2) sum |z_i - z_{i+1}|^2) = (2 pi / N)^{m-1} / m`.
    pub normalizer: f64,
}

impl CycleGaussian {
    pub fn new(m: usize, n: usize) -> Self {
        assert!(m >= 1);
        let d = m - 1;
        let nf = n as f64;
        // reduced Laplacian of the m-cycle (a path for m = 2 has a doubled edge)
        let mut lap = vec![vec![0.0; d]; d];
        let edges: Vec<(usize, usize)> = (0..m).map(|i| (i, (i + 1) % m)).collect();
        for (a, b) in edges {
            for (p, q) in [(a, b), (b, a)] {
                if p > 0 {
                    lap[p - 1][p - 1] += 1.0;
                    if q > 0 {
                        lap[p - 1][q - 1] -= 1.0;
                    }
                }
            }
        }
        let cov: Vec<Vec<f64>> = invert(&lap).into_iter().map(|r| r.into_iter().map(|v| v / nf).collect()).collect();
        let chol = cholesky(&cov);
        let normalizer = (2.0 * PI / nf).powi(d as i32) / m as f64;
        Self { m, chol, normalizer }
    }

    /// Displacements `z_i - z_1` for `i = 2..=m`.
    pub fn sample(&self, r: &mut ChaCha8Rng, out: &mut Vec<Complex64>) {
        let d = self.m - 1;
        out.clear();
        let xs: Vec<f64> = (0..d).map(|_| rng::next_normal(r)).collect();
        let ys: Vec<f64> = (0..d).map(|_| rng::next_normal(r)).collect();
        for i in 0..d {
            let mut re = 0.0;
            let mut im = 0.0;
            for j in 0..=i {
                re += self.chol[i][j] * xs[j];
                im += self.chol[i][j] * ys[j];
            }
            out.push(Complex64::new(re, im));
        }
    }
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs())).unwrap();
        m.swap(k, p);
        inv.swap(k, p);
        let piv = m[k][k];
        for j in 0..n {
            m[k][j] /= piv;
            inv[k][j] /= piv;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                for j in 0..n {
                    m[i][j] -= f * m[k][j];
                    inv[i][j] -= f * inv[k][j];
                }
            }
        }
    }
    inv
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Running sums of a complex Monte Carlo weight.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    pub count: u64,
    pub sum: Complex64,
    pub sum_sq_re: f64,
    pub sum_sq_im: f64,
}

impl Accumulator {
    pub fn push(&mut self, w: Complex64) {
        self.count += 1;
        self.sum += w;
        self.sum_sq_re += w.re * w.re;
        self.sum_sq_im += w.im * w.im;
    }

    pub fn merge(&mut self, o: &Accumulator) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq_re += o.sum_sq_re;
        self.sum_sq_im += o.sum_sq_im;
    }

    pub fn estimate(&self) -> ComplexEstimate {
        let m = self.count as f64;
        let mean = self.sum / m;
        let var = |sq: f64, mu: f64| ((sq / m - mu * mu).max(0.0) * m / (m - 1.0).max(1.0) / m).sqrt();
        ComplexEstimate { value: mean, std_error_re: var(self.sum_sq_re, mean.re), std_error_im: var(self.sum_sq_im, mean.im) }
    }
}

impl ComplexEstimate {
    pub fn re(&self) -> Estimate {
        Estimate { value: self.value.re, std_error: self.std_error_re }
    }
}

/// Samples per batch; batch `b` draws from stream `b` of the run seed.
pub const MC_BATCH: usize = 8192;

/// Sums `weight` over `samples` draws in fixed batches. The result depends
/// only on `(samples, seed)`.
pub fn mc_batches(samples: usize, seed: u64, weight: impl Fn(&mut ChaCha8Rng) -> Complex64 + Sync) -> Accumulator {
    let batches = samples.div_ceil(MC_BATCH);
    let parts: Vec<Accumulator> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, b as u64);
            let count = MC_BATCH.min(samples - b * MC_BATCH);
            let mut acc = Accumulator::default();
            for _ in 0..count {
                acc.push(weight(&mut r));
            }
            acc
        })
        .collect();
    let mut total = Accumulator::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

pub const R_MAX_M: usize = 3;

/// `R_m = N^m int_{A^m} prod_i S_N(sqrt(N) z_i, sqrt(N) z_{i+1}) dz` with
/// `z_{m+1} = z_1`.
pub fn r_m_integral(domain: &PolygonDomain, m: usize, n: usize, spec: &QuadratureSpec) -> Result<ComplexEstimate> {
    if m == 0 || m > R_MAX_M {
        return Err(Error::Range { what: "cycle length m", value: m, max: R_MAX_M });
    }
    if m == 1 {
        let grid_spec = if spec.method == QuadMethod::MonteCarlo { QuadratureSpec::grid(16.0) } else { *spec };
        let e = intensity_integral(domain, n, &grid_spec)?.integral;
        return Ok(ComplexEstimate { value: Complex64::new(e.value, 0.0), std_error_re: e.std_error, std_error_im: 0.0 });
    }
    spec.validate()?;
    let samples = spec.resolution as usize;
    if samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples });
    }
    let nf = n as f64;
    let sampler = DomainSampler::new(domain);
    let chain = CycleGaussian::new(m, n);
    let pref = domain.area() * chain.normalizer * nf.powi(m as i32);
    kernel::s_scaled(domain.centroid(), domain.centroid(), n, Backend::Exact)?;
    let acc = mc_batches(samples, rng::derive_seed(spec.seed, 100 + m as u64), |r| {
        let z1 = sampler.sample(r);
        let mut u = Vec::with_capacity(m);
        chain.sample(r, &mut u);
        let mut pts = Vec::with_capacity(m);
        pts.push(z1);
        pts.extend(u.iter().map(|d| z1 + d));
        if !pts.iter().all(|&p| domain.contains(p)) {
            return Complex64::new(0.0, 0.0);
        }
        let mut prod = Complex64::new(1.0, 0.0);
        let mut quad = 0.0;
        for i in 0..m {
            let (a, b) = (pts[i], pts[(i + 1) % m]);
            prod *= kernel::s_scaled(a, b, n, Backend::Exact).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            quad += (a - b).norm_sqr();
        }
        prod * (pref * (0.5 * nf * quad).exp())
    });
    let est = acc.estimate();
    if !est.value.re.is_finite() {
        return Err(Error::Overflow { index: n, log_magnitude: f64::INFINITY });
    }
    spec.check(est.re(), 4.0)?;
    Ok(est)
}

/// Outcome of the `I_0` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct I0Estimate {
    pub i0: Estimate,
    /// `pi^{k-1} N^{1-k} area(A)`.
    pub closed_form: f64,
    pub ratio: Estimate,
}

pub const I0_MAX_K: usize = 4;

/// Monte Carlo value of
/// `I_0 = int_A int_{C^{k-1}} exp(-(N/2) sum |z_i - z_{i+1}|^2 + i N sum Im(conj(z_i) z_{i+1}))`
/// against its closed form.
pub fn i0_check(domain: &PolygonDomain, k: usize, n: usize, spec: &QuadratureSpec) -> Result<I0Estimate> {
    if !(2..=I0_MAX_K).contains(&k) {
        return Err(Error::Range { what: "chain length k", value: k, max: I0_MAX_K });
    }
    spec.validate()?;
    let samples = spec.resolution as usize;
    if samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples });
    }
    let nf = n as f64;
    let sampler = DomainSampler::new(domain);
    let chain = CycleGaussian::new(k, n);
    let area = domain.area();
    let acc = mc_batches(samples, rng::derive_seed(spec.seed, 200 + k as u64), |r| {
        let z1 = sampler.sample(r);
        let mut u = Vec::with_capacity(k);
        chain.sample(r, &mut u);
        let mut pts = vec![z1];
        pts.extend(u.iter().map(|d| z1 + d));
        let phase: f64 = (0..k).map(|i| (pts[i].conj() * pts[(i + 1) % k]).im).sum::<f64>() * nf;
        Complex64::from_polar(1.0, phase)
    });
    let e = acc.estimate().re();
    let f = area * chain.normalizer;
    let closed_form = PI.powi(k as i32 - 1) * nf.powi(1 - k as i32) * area;
    let i0 = Estimate { value: e.value * f, std_error: e.std_error * f };
    let ratio = Estimate { value: i0.value / closed_form, std_error: i0.std_error / closed_form };
    spec.check(i0, 4.0)?;
    Ok(I0Estimate { i0, closed_form, ratio })
}
