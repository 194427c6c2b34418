//! The GinOE 2x2 block kernel.
//!
//! `S_N`, `D_N`, `I_N` share one shape: a Gaussian factor, a linear factor, the
//! product `G(z, w)` of erfc square roots, and `s_N` at a quadratic argument.
//! Each piece is carried as a logarithm and the pieces are merged before one
//! final `exp`, so the exponentially large `s_N` outside the Szego curve and
//! the exponentially small Gaussian and `G` factors never meet as floats.
//!
//! The `*_scaled` functions evaluate at `sqrt(N) z, sqrt(N) w` from the
//! unit-disk arguments, passing `N z w` (or `N z conj(w)`) straight to `s_N`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::specfun::{self, AsymptoticSn, SAFE_LOG_MAGNITUDE};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// How `s_N` and `erfc` are evaluated inside the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Truncated exponential summed exactly, `erfc` to full precision.
    #[default]
    Exact,
    /// Two-term large-`N` form of `s_N` and the asymptotic series of `erfc`.
    Asymptotic,
}

/// Terms of the `erfc` series used by [`Backend::Asymptotic`].
pub const ASYMPTOTIC_ERFC_TERMS: usize = 4;

/// `G(z, w) = sqrt(erfc(sqrt 2 Im z) erfc(sqrt 2 Im w))`.
pub fn g_factor(z: Complex64, w: Complex64) -> f64 {
    ln_g_factor(z, w).exp()
}

/// `ln G(z, w)`.
pub fn ln_g_factor(z: Complex64, w: Complex64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    0.5 * (specfun::ln_erfc(s2 * z.im) + specfun::ln_erfc(s2 * w.im))
}

fn ln_g_asymptotic(z: Complex64, w: Complex64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let f = |y: f64| {
        let x = s2 * y;
        if x > 0.0 {
            specfun::ln_erfc_asymptotic(x, ASYMPTOTIC_ERFC_TERMS)
        } else {
            specfun::ln_erfc(x)
        }
    };
    0.5 * (f(z.im) + f(w.im))
}

/// One kernel entry before exponentiation:
/// `lin * exp(gauss + ln_g) * s_N(arg) / sqrt(2 pi)`, with `arg = n * unit_arg`.
struct Entry {
    gauss: Complex64,
    lin: Complex64,
    ln_g: f64,
    arg: Complex64,
    unit_arg: Complex64,
}

fn evaluate(e: Entry, n: usize, backend: Backend) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::OutOfDomain("kernel needs N >= 1".into()));
    }
    if e.lin == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let pre = e.gauss + e.ln_g;
    let (base, log_scale, mantissa, index) = match backend {
        Backend::Exact => {
            let p = specfun::sn_parts(e.arg, n);
            (p.base, p.log_scale, p.mantissa, p.peak_index)
        }
        Backend::Asymptotic => {
            let cfg = AsymptoticSn { delta_min: 1e-3, ..AsymptoticSn::default() };
            if (1.0 - e.unit_arg).norm() < cfg.delta_min {
                return Err(Error::OutOfDomain(format!("s_N argument {} too close to N", e.arg)));
            }
            if e.unit_arg == Complex64::new(0.0, 0.0) {
                (1.0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0)
            } else {
                (1.0, specfun::sn_correction_log(e.unit_arg, n), Complex64::new(-1.0, 0.0), n)
            }
        }
    };
    let mut total = Complex64::new(0.0, 0.0);
    if base != 0.0 {
        if pre.re > SAFE_LOG_MAGNITUDE {
            return Err(Error::Overflow { index: 0, log_magnitude: pre.re });
        }
        total += base * pre.exp();
    }
    if mantissa != Complex64::new(0.0, 0.0) {
        let l = pre + log_scale;
        let log_mag = l.re + mantissa.norm().ln();
        if log_mag > SAFE_LOG_MAGNITUDE {
            return Err(Error::Overflow { index, log_magnitude: log_mag });
        }
        total += l.exp() * mantissa;
    }
    Ok(INV_SQRT_2PI * e.lin * total)
}

fn ln_g_for(z: Complex64, w: Complex64, backend: Backend) -> f64 {
    match backend {
        Backend::Exact => ln_g_factor(z, w),
        Backend::Asymptotic => ln_g_asymptotic(z, w),
    }
}

/// `S_N(z, w)` at raw arguments.
pub fn s_kernel(z: Complex64, w: Complex64, n: usize, backend: Backend) -> Result<Complex64> {
    let d = z - w.conj();
    let arg = z * w.conj();
    let e = Entry { gauss: -0.5 * d * d, lin: I * (w.conj() - z), ln_g: ln_g_for(z, w, backend), arg, unit_arg: arg / n as f64 };
    evaluate(e, n, backend)
}

/// `D_N(z, w)` at raw arguments.
pub fn d_kernel(z: Complex64, w: Complex64, n: usize) -> Result<Complex64> {
    let d = z - w;
    let arg = z * w;
    let e = Entry { gauss: -0.5 * d * d, lin: w - z, ln_g: ln_g_factor(z, w), arg, unit_arg: arg / n as f64 };
    evaluate(e, n, Backend::Exact)
}

/// `I_N(z, w)` at raw arguments.
pub fn i_kernel(z: Complex64, w: Complex64, n: usize) -> Result<Complex64> {
    let d = z.conj() - w.conj();
    let arg = z.conj() * w.conj();
    let e = Entry { gauss: -0.5 * d * d, lin: d, ln_g: ln_g_factor(z, w), arg, unit_arg: arg / n as f64 };
    evaluate(e, n, Backend::Exact)
}

fn scaled_ln_g(z: Complex64, w: Complex64, n: usize, backend: Backend) -> f64 {
    let r = (n as f64).sqrt();
    ln_g_for(z * r, w * r, backend)
}

/// `S_N(sqrt(N) z, sqrt(N) w)`.
pub fn s_scaled(z: Complex64, w: Complex64, n: usize, backend: Backend) -> Result<Complex64> {
    let nf = n as f64;
    let d = z - w.conj();
    let u = z * w.conj();
    let e = Entry {
        gauss: -0.5 * nf * d * d,
        lin: I * nf.sqrt() * (w.conj() - z),
        ln_g: scaled_ln_g(z, w, n, backend),
        arg: nf * u,
        unit_arg: u,
    };
    evaluate(e, n, backend)
}

/// `D_N(sqrt(N) z, sqrt(N) w)`.
pub fn d_scaled(z: Complex64, w: Complex64, n: usize) -> Result<Complex64> {
    let nf = n as f64;
    let d = z - w;
    let u = z * w;
    let e = Entry { gauss: -0.5 * nf * d * d, lin: nf.sqrt() * (w - z), ln_g: scaled_ln_g(z, w, n, Backend::Exact), arg: nf * u, unit_arg: u };
    evaluate(e, n, Backend::Exact)
}

/// `I_N(sqrt(N) z, sqrt(N) w)`.
pub fn i_scaled(z: Complex64, w: Complex64, n: usize) -> Result<Complex64> {
    let nf = n as f64;
    let d = z.conj() - w.conj();
    let u = z.conj() * w.conj();
    let e = Entry { gauss: -0.5 * nf * d * d, lin: nf.sqrt() * d, ln_g: scaled_ln_g(z, w, n, Backend::Exact), arg: nf * u, unit_arg: u };
    evaluate(e, n, Backend::Exact)
}

/// The four entries of `K(z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelBlock {
    pub d: Complex64,
    pub s_fwd: Complex64,
    pub s_rev: Complex64,
    pub i: Complex64,
    pub at: (Complex64, Complex64),
}

impl KernelBlock {
    /// `[[D, S(z, w)], [-S(w, z), I]]`.
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.d, self.s_fwd], [-self.s_rev, self.i]]
    }
}

/// `K(z, w)`; with `scaled` the arguments are `sqrt(N) z, sqrt(N) w`.
pub fn kernel_block(z: Complex64, w: Complex64, n: usize, scaled: bool) -> Result<KernelBlock> {
    if scaled {
        Ok(KernelBlock {
            d: d_scaled(z, w, n)?,
            s_fwd: s_scaled(z, w, n, Backend::Exact)?,
            s_rev: s_scaled(w, z, n, Backend::Exact)?,
            i: i_scaled(z, w, n)?,
            at: (z, w),
        })
    } else {
        Ok(KernelBlock {
            d: d_kernel(z, w, n)?,
            s_fwd: s_kernel(z, w, n, Backend::Exact)?,
            s_rev: s_kernel(w, z, n, Backend::Exact)?,
            i: i_kernel(z, w, n)?,
            at: (z, w),
        })
    }
}

/// The `2k x 2k` matrix of blocks `K(z_i, z_j)`, row-major.
pub fn block_matrix(points: &[Complex64], n: usize, scaled: bool) -> Result<Vec<Vec<Complex64>>> {
    let k = points.len();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); 2 * k]; 2 * k];
    for a in 0..k {
        for b in a..k {
            let blk = kernel_block(points[a], points[b], n, scaled)?.matrix();
            for r in 0..2 {
                for c in 0..2 {
                    m[2 * a + r][2 * b + c] = blk[r][c];
                    if a != b {
                        m[2 * b + c][2 * a + r] = -blk[r][c];
                    }
                }
            }
        }
    }
    Ok(m)
}

/// `N S_N(sqrt(N) z, sqrt(N) z)`, the scaled first intensity at `z`.
pub fn intensity_scaled(z: Complex64, n: usize) -> Result<f64> {
    Ok(n as f64 * s_scaled(z, z, n, Backend::Exact)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::erfc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(k: usize) -> Vec<Complex64> {
        let mut pts = Vec::new();
        for a in 0..k {
            for b in 0..k {
                let h = 0.4 / (k - 1) as f64;
                pts.push(c(0.1 + a as f64 * h, 0.3 + b as f64 * h));
            }
        }
        pts
    }

    #[test]
    fn g_on_real_axis_is_one() {
        assert_eq!(g_factor(c(0.3, 0.0), c(-2.0, 0.0)), 1.0);
        let (z, w) = (c(0.2, 0.7), c(-0.4, 1.3));
        assert_eq!(g_factor(z, w), g_factor(w, z));
        let direct = (erfc(2f64.sqrt() * 0.7) * erfc(2f64.sqrt() * 1.3)).sqrt();
        assert!((g_factor(z, w) - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn g_scaled_matches_two_term_erfc() {
        let n = 100.0f64;
        let z = c(0.3, 0.5) * n.sqrt();
        let x = 2f64.sqrt() * z.im;
        let approx = (-x * x).exp() / (std::f64::consts::PI.sqrt() * x) * (1.0 - 0.5 / (x * x));
        let g = g_factor(z, z);
        assert!((g / approx - 1.0).abs() < 0.01);
    }

    #[test]
    fn d_and_i_vanish_on_the_diagonal() {
        let z = c(0.3, 0.45);
        assert_eq!(d_scaled(z, z, 80).unwrap(), c(0.0, 0.0));
        assert_eq!(i_scaled(z, z, 80).unwrap(), c(0.0, 0.0));
        assert_eq!(d_kernel(z, z, 5).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn raw_and_scaled_entry_points_agree() {
        let (z, w) = (c(0.25, 0.4), c(0.3, 0.35));
        let n = 60;
        let r = (n as f64).sqrt();
        let a = s_scaled(z, w, n, Backend::Exact).unwrap();
        let b = s_kernel(z * r, w * r, n, Backend::Exact).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm());
        let a = d_scaled(z, w, n).unwrap();
        let b = d_kernel(z * r, w * r, n).unwrap();
        assert!((a - b).norm() < 1e-9 * a.norm());
    }

    #[test]
    fn raw_kernel_matches_literal_formula() {
        // small N: every factor is O(1) so the textbook expression is safe
        let (z, w) = (c(0.4, 0.9), c(-0.3, 0.5));
        let n = 6;
        let x = z * w.conj();
        let mut sum = c(0.0, 0.0);
        let mut t = c(1.0, 0.0);
        for j in 0..n {
            if j > 0 {
                t *= x / j as f64;
            }
            sum += t;
        }
        let sn = (-x).exp() * sum;
        let d = z - w.conj();
        let lit = I * (-0.5 * d * d).exp() * INV_SQRT_2PI * (w.conj() - z) * g_factor(z, w) * sn;
        let got = s_kernel(z, w, n, Backend::Exact).unwrap();
        assert!((got - lit).norm() < 1e-13 * lit.norm());
    }

    #[test]
    fn s_is_hermitian() {
        let pts = grid(6);
        for &z in &pts {
            for &w in &pts {
                let a = s_scaled(z, w, 150, Backend::Exact).unwrap();
                let b = s_scaled(w, z, 150, Backend::Exact).unwrap();
                assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1e-300), "{z} {w}");
            }
        }
    }

    #[test]
    fn diagonal_is_real_and_positive() {
        for &z in &grid(10) {
            let s = s_scaled(z, z, 200, Backend::Exact).unwrap();
            assert!(s.re > 0.0);
            assert!(s.im.abs() <= 1e-12 * s.re);
            // 1/pi up to O(1/N) corrections
            assert!((s.re * std::f64::consts::PI - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn scaled_block_entries() {
        let b = kernel_block(c(0.2, 0.4), c(0.25, 0.45), 100, true).unwrap();
        assert!(b.d.norm() < 1e-8 && b.i.norm() < 1e-8);
        assert!(b.s_fwd.norm() > 0.01 && b.s_fwd.norm() < 10.0);
        let b = kernel_block(c(0.3, 0.5), c(0.3, 0.5), 100, true).unwrap();
        assert_eq!(b.d, c(0.0, 0.0));
        assert_eq!(b.s_fwd, b.s_rev);
    }

    #[test]
    fn block_matrix_is_skew() {
        let pts = [c(0.2, 0.4), c(0.35, 0.5), c(0.3, 0.62)];
        for &scaled in &[true, false] {
            let m = block_matrix(&pts, 30, scaled).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert!((m[i][j] + m[j][i]).norm() <= 1e-12 * (1.0 + m[i][j].norm()));
                }
            }
        }
    }

    #[test]
    fn asymptotic_backend_tracks_exact() {
        let pts = grid(5);
        let mut worst = 0.0f64;
        for &z in &pts {
            for &w in &pts {
                let e = s_scaled(z, w, 200, Backend::Exact).unwrap();
                let a = s_scaled(z, w, 200, Backend::Asymptotic).unwrap();
                worst = worst.max((a - e).norm() / envelope(z, w, 200));
            }
        }
        assert!(worst < 5.0 / 200.0, "worst relative deviation {worst}");
    }

    /// Size of the two asymptotic pieces of `S_N(sqrt N z, sqrt N w)`; the
    /// natural scale for comparing the backends, since `s_N` has zeros.
    pub(crate) fn envelope(z: Complex64, w: Complex64, n: usize) -> f64 {
        let nf = n as f64;
        let u = z * w.conj();
        let lead = (nf.sqrt() * (w.conj() - z)).norm() * INV_SQRT_2PI
            * (-0.5 * nf * (z - w).norm_sqr()).exp()
            / (2.0 * std::f64::consts::PI * nf * z.im * w.im).sqrt();
        let corr = specfun::sn_correction_log(u, n).re.exp();
        lead * (1.0 + corr)
    }
}
