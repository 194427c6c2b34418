//! Pfaffians of skew-symmetric complex matrices and the correlation
//! functions built from them.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{self, Backend};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Absolute tolerance on `M + M^T` and on the checkerboard zeros.
pub const SKEW_TOL: f64 = 1e-12;
/// Pivots below this fraction of the largest entry count as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-13;
/// Largest dimension accepted by the matching-sum backend.
pub const MATCHING_MAX_DIM: usize = 16;
/// Largest `k` accepted by [`rho_k`].
pub const RHO_MAX_K: usize = 6;

/// Even-dimensional skew-symmetric complex matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl SkewMatrix {
    pub fn new(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Degenerate("matrix is not square".into()));
        }
        if dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        let data: Vec<Complex64> = rows.into_iter().flatten().collect();
        let m = Self { dim, data };
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in i..dim {
                worst = worst.max((m.get(i, j) + m.get(j, i)).norm());
            }
        }
        if !(worst <= SKEW_TOL) {
            return Err(Error::NotSkew(worst));
        }
        Ok(m)
    }

    /// Builds from the strict upper triangle, listed row by row.
    pub fn from_upper(dim: usize, upper: &[Complex64]) -> Result<Self> {
        if dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        if upper.len() != dim * dim.saturating_sub(1) / 2 {
            return Err(Error::Degenerate(format!("expected {} upper entries, got {}", dim * (dim - 1) / 2, upper.len())));
        }
        let mut rows = vec![vec![ZERO; dim]; dim];
        let mut it = upper.iter();
        for i in 0..dim {
            for j in i + 1..dim {
                let v = *it.next().unwrap();
                rows[i][j] = v;
                rows[j][i] = -v;
            }
        }
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// `P M P^T` for the permutation sending index `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                data[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Self { dim: n, data }
    }

    fn scale(&mut self, f: f64) {
        for v in &mut self.data {
            *v *= f;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PfaffianMethod {
    /// Signed sum over perfect matchings; `dim <= 16`.
    Matching,
    /// Skew `L T L^T` elimination with full pivoting.
    #[default]
    Elimination,
}

pub fn pfaffian(m: &SkewMatrix) -> Complex64 {
    pfaffian_with(m, PfaffianMethod::Elimination).expect("elimination accepts any even dimension")
}

pub fn pfaffian_with(m: &SkewMatrix, method: PfaffianMethod) -> Result<Complex64> {
    match method {
        PfaffianMethod::Matching => {
            if m.dim > MATCHING_MAX_DIM {
                return Err(Error::Range { what: "matching-sum dimension", value: m.dim, max: MATCHING_MAX_DIM });
            }
            let idx: Vec<usize> = (0..m.dim).collect();
            Ok(matching_sum(m, &idx))
        }
        PfaffianMethod::Elimination => Ok(pfaffian_elimination(m)),
    }
}

/// Expansion along the first remaining index:
/// `Pf = sum_j (-1)^{j+1} m_{0 j} Pf(M without 0, j)`.
fn matching_sum(m: &SkewMatrix, idx: &[usize]) -> Complex64 {
    if idx.is_empty() {
        return ONE;
    }
    let first = idx[0];
    let mut total = ZERO;
    let mut rest: Vec<usize> = Vec::with_capacity(idx.len() - 2);
    for pos in 1..idx.len() {
        let a = m.get(first, idx[pos]);
        if a == ZERO {
            continue;
        }
        rest.clear();
        rest.extend(idx[1..].iter().enumerate().filter(|&(p, _)| p + 1 != pos).map(|(_, &v)| v));
        let sub = matching_sum(m, &rest);
        if pos % 2 == 1 {
            total += a * sub;
        } else {
            total -= a * sub;
        }
    }
    total
}

fn swap_sym(a: &mut [Complex64], n: usize, p: usize, q: usize) {
    if p == q {
        return;
    }
    for c in 0..n {
        a.swap(p * n + c, q * n + c);
    }
    for r in 0..n {
        a.swap(r * n + p, r * n + q);
    }
}

fn pfaffian_elimination(m: &SkewMatrix) -> Complex64 {
    let n = m.dim;
    if n == 0 {
        return ONE;
    }
    let mut a = m.data.clone();
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return ZERO;
    }
    let mut pf = ONE;
    for k in (0..n - 1).step_by(2) {
        // largest entry of the trailing block moves to (k, k+1)
        let (mut bp, mut bq, mut best) = (k, k + 1, -1.0);
        for p in k..n {
            for q in p + 1..n {
                let v = a[p * n + q].norm();
                if v > best {
                    best = v;
                    bp = p;
                    bq = q;
                }
            }
        }
        if best <= PIVOT_THRESHOLD * scale {
            return ZERO;
        }
        if bp != k {
            swap_sym(&mut a, n, k, bp);
            pf = -pf;
            if bq == k {
                bq = bp;
            }
        }
        if bq != k + 1 {
            swap_sym(&mut a, n, k + 1, bq);
            pf = -pf;
        }
        let piv = a[k * n + k + 1];
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<Complex64> = (k + 2..n).map(|j| a[k * n + j] / piv).collect();
            let col: Vec<Complex64> = (k + 2..n).map(|i| a[i * n + k + 1]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[i * n + j] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
    }
    pf
}

/// Determinant by LU with partial pivoting. Rows must be square.
pub fn determinant(rows: &[Vec<Complex64>]) -> Complex64 {
    let n = rows.len();
    let mut a: Vec<Complex64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let mut det = ONE;
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| a[x * n + k].norm().total_cmp(&a[y * n + k].norm())).unwrap();
        if a[p * n + k] == ZERO {
            return ZERO;
        }
        if p != k {
            for c in 0..n {
                a.swap(p * n + c, k * n + c);
            }
            det = -det;
        }
        let piv = a[k * n + k];
        det *= piv;
        for i in k + 1..n {
            let f = a[i * n + k] / piv;
            if f == ZERO {
                continue;
            }
            for c in k + 1..n {
                let v = a[k * n + c];
                a[i * n + c] -= f * v;
            }
        }
    }
    det
}

/// `Pf(M) = det(M~)` with `M~_ij = M_{2i, 2j+1}` (zero-based), for `M` with
/// `M_ij = 0` whenever `i = j mod 2`.
pub fn pfaffian_checkerboard(m: &SkewMatrix) -> Result<Complex64> {
    let n = m.dim / 2;
    let mut worst = 0.0f64;
    for i in 0..m.dim {
        for j in (i % 2..m.dim).step_by(2) {
            worst = worst.max(m.get(i, j).norm());
        }
    }
    if worst > SKEW_TOL {
        return Err(Error::Structure(worst));
    }
    let reduced: Vec<Vec<Complex64>> = (0..n).map(|i| (0..n).map(|j| m.get(2 * i, 2 * j + 1)).collect()).collect();
    Ok(determinant(&reduced))
}

fn check_points(points: &[Complex64]) -> Result<()> {
    if points.is_empty() || points.len() > RHO_MAX_K {
        return Err(Error::Range { what: "correlation order k", value: points.len(), max: RHO_MAX_K });
    }
    for (a, z) in points.iter().enumerate() {
        if z.im == 0.0 {
            return Err(Error::OutOfDomain(format!("point {z} lies on the real axis")));
        }
        for w in &points[a + 1..] {
            if z == w {
                return Err(Error::Degenerate(format!("coincident points at {z}")));
            }
        }
    }
    Ok(())
}

/// `k`-point correlation function as the Pfaffian of the block kernel. With
/// `scaled` this is `N^k rho_k(sqrt(N) z_1, ..., sqrt(N) z_k)`, the correlation
/// function of the eigenvalues of `G / sqrt(N)`.
pub fn rho_k(points: &[Complex64], n: usize, scaled: bool) -> Result<f64> {
    check_points(points)?;
    let mut m = SkewMatrix::new(kernel::block_matrix(points, n, scaled)?)?;
    if scaled {
        m.scale(n as f64);
    }
    let v = pfaffian(&m);
    check_real(v)
}

/// `det Q^{(k)}` with `Q_ij = S_N(z_i, z_j)`; scaled like [`rho_k`]. This is
/// the Pfaffian of the kernel with the `D` and `I` entries dropped.
pub fn rho_k_determinantal(points: &[Complex64], n: usize, scaled: bool) -> Result<f64> {
    check_points(points)?;
    let k = points.len();
    let mut q = vec![vec![ZERO; k]; k];
    for i in 0..k {
        for j in 0..k {
            q[i][j] = if scaled {
                n as f64 * kernel::s_scaled(points[i], points[j], n, Backend::Exact)?
            } else {
                kernel::s_kernel(points[i], points[j], n, Backend::Exact)?
            };
        }
    }
    check_real(determinant(&q))
}

fn check_real(v: Complex64) -> Result<f64> {
    if v.im.abs() > 1e-8 * v.norm() + f64::MIN_POSITIVE {
        return Err(Error::Degenerate(format!("correlation value {v} is not real")));
    }
    Ok(v.re)
}
