use std::f64::consts::PI;

use ginoe_core::cumulants::*;
use ginoe_core::ensemble::k_statistics;
use ginoe_core::kernel::{self, Backend};
use ginoe_core::pfaffian::{self, SkewMatrix};
use ginoe_core::quadrature::{self, QuadratureSpec};
use ginoe_core::specfun::{ln_factorial, sn_exact};
use ginoe_core::{rng, Complex64, PolygonDomain};
use proptest::prelude::*;

/// Star-shaped polygon around `c`: sorted angles, radii in `[r/2, r]`.
fn star(c: Complex64, r: f64, angles: &[f64], radii: &[f64]) -> Option<PolygonDomain> {
    let mut a: Vec<f64> = angles.to_vec();
    a.sort_by(f64::total_cmp);
    a.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
    if a.len() < 3 {
        return None;
    }
    let v = a.iter().zip(radii).map(|(t, s)| c + Complex64::from_polar(r * (0.5 + 0.5 * s), *t)).collect();
    PolygonDomain::new(v).ok()
}

fn winding(d: &PolygonDomain, z: Complex64) -> i32 {
    let total: f64 = d.edges().map(|(a, b)| ((b - z) / (a - z)).arg()).sum();
    (total / (2.0 * PI)).round() as i32
}

fn polygon() -> impl Strategy<Value = Option<PolygonDomain>> {
    (
        -0.3f64..0.3,
        0.35f64..0.6,
        0.05f64..0.25,
        prop::collection::vec(0.0f64..2.0 * PI, 3..12),
        prop::collection::vec(0.0f64..1.0, 12),
    )
        .prop_map(|(x, y, r, angles, radii)| star(Complex64::new(x, y), r, &angles, &radii))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn contains_matches_winding_number(d in polygon(), seed in any::<u64>()) {
        let Some(d) = d else { return Ok(()) };
        let (x0, x1, y0, y1) = d.bounding_box();
        let mut r = rng::stream(seed, 0);
        for _ in 0..10_000 {
            let z = Complex64::new(
                x0 - 0.05 + (x1 - x0 + 0.1) * rng::next_unit(&mut r),
                y0 - 0.05 + (y1 - y0 + 0.1) * rng::next_unit(&mut r),
            );
            prop_assert_eq!(d.contains(z), winding(&d, z) != 0, "z = {}", z);
        }
    }

    #[test]
    fn accepted_polygons_are_sane(d in polygon()) {
        let Some(d) = d else { return Ok(()) };
        prop_assert!(d.area() > 0.0 && d.perimeter() > 0.0);
        prop_assert!(d.perimeter().powi(2) >= 4.0 * PI * d.area());
        if d.is_admissible(0.05) {
            prop_assert!(d.halfdisk_distance().d_a >= 0.05);
        }
    }

    #[test]
    fn sn_recurrence(re in -150.0f64..150.0, im in -150.0f64..150.0, n in 1usize..200) {
        let z = Complex64::new(re, im);
        prop_assume!(z.norm() <= 150.0);
        let a = sn_exact(z, n).unwrap().value;
        let b = sn_exact(z, n + 1).unwrap().value;
        let step = (z.ln() * n as f64 - ln_factorial(n as u64) - z).exp();
        let scale = a.norm().max(b.norm()).max(step.norm());
        prop_assert!((b - a - step).norm() <= 1e-10 * scale, "{} {}", b - a, step);
    }

    #[test]
    fn pfaffian_permutation_and_scaling(seed in any::<u64>(), half in 1usize..6, c_re in -2.0f64..2.0) {
        let dim = 2 * half;
        let mut r = rng::stream(seed, 1);
        let upper: Vec<Complex64> = (0..dim * (dim - 1) / 2)
            .map(|_| Complex64::new(rng::next_normal(&mut r), rng::next_normal(&mut r)))
            .collect();
        let m = SkewMatrix::from_upper(dim, &upper).unwrap();
        let pf = pfaffian::pfaffian(&m);
        // Random permutation by Fisher-Yates; track its sign.
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut sign = 1.0;
        for i in (1..dim).rev() {
            let j = (rng::next_unit(&mut r) * (i + 1) as f64) as usize;
            if i != j {
                perm.swap(i, j);
                sign = -sign;
            }
        }
        let p = pfaffian::pfaffian(&m.permuted(&perm));
        prop_assert!((p - sign * pf).norm() <= 1e-10 * pf.norm().max(1.0));
        let c = Complex64::new(c_re, 0.5);
        let scaled = SkewMatrix::from_upper(dim, &upper.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap();
        let want = pf * c.powi(half as i32);
        prop_assert!((pfaffian::pfaffian(&scaled) - want).norm() <= 1e-10 * want.norm().max(1.0));
    }

    #[test]
    fn kernel_pair_symmetry(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0, n in 10usize..300) {
        let z = Complex64::new(-0.5 + a, 0.1 + 0.6 * b);
        let w = Complex64::new(-0.5 + c, 0.1 + 0.6 * d);
        prop_assume!(z.norm() < 0.95 && w.norm() < 0.95);
        let s1 = kernel::s_scaled(z, w, n, Backend::Exact).unwrap();
        let s2 = kernel::s_scaled(w, z, n, Backend::Exact).unwrap();
        prop_assert!((s1.norm() - s2.norm()).abs() <= 1e-10 * s1.norm().max(1e-300));
        let blk = kernel::block_matrix(&[z, w], n, true).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((blk[i][j] + blk[j][i]).norm() <= 1e-12 * (blk[i][j].norm() + 1e-300));
            }
        }
    }

    #[test]
    fn cumulant_conversions_round_trip(k in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let m = cumulants_to_moments(&k);
        let back = moments_to_cumulants(&m);
        let scale = m.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        for (a, b) in k.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
        let j = raw_to_factorial_moments(&m).unwrap();
        let m2 = factorial_to_raw_moments(&j).unwrap();
        for (a, b) in m.iter().zip(&m2) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn k_statistics_shift_invariance(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut r = rng::stream(seed, 2);
        let data: Vec<f64> = (0..500).map(|_| rng::next_normal(&mut r).powi(2)).collect();
        let moved: Vec<f64> = data.iter().map(|x| x + shift).collect();
        let (a, b) = (k_statistics(&data).unwrap(), k_statistics(&moved).unwrap());
        prop_assert!((b.k[0] - a.k[0] - shift).abs() < 1e-9 * (1.0 + shift.abs()));
        for i in 1..4 {
            prop_assert!((a.k[i] - b.k[i]).abs() < 1e-8 * (1.0 + a.k[i].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn variance_routes_agree_on_rectangles(x in -0.4f64..0.2, y in 0.1f64..0.4, w in 0.1f64..0.3, h in 0.1f64..0.3, n in 64usize..1024) {
        let d = PolygonDomain::rectangle(x, x + w, y, y + h).unwrap();
        let a = quadrature::variance_integral(&d, n, &QuadratureSpec::boundary(2.0)).unwrap().value;
        let b = quadrature::variance_integral_covariogram(&d, n).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-5 * b, "{} vs {}", a, b);
    }
}
