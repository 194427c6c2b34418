//! Polygonal domains in the upper half-disk.
//!
//! A [`PolygonDomain`] is a simple polygon stored counterclockwise. Geometric
//! validity is checked on construction; admissibility (closure strictly inside
//! the open upper half-disk, with a configurable margin) is a separate gate,
//! because several identities are also useful on polygons that touch the real
//! axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default admissibility margin `delta_min` for `d_A`.
pub const DEFAULT_DELTA_MIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainFile", into = "DomainFile")]
pub struct PolygonDomain {
    vertices: Vec<Complex64>,
}

/// On-disk form: `{"vertices": [[re, im], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainFile {
    pub vertices: Vec<[f64; 2]>,
}

impl TryFrom<DomainFile> for PolygonDomain {
    type Error = Error;

    fn try_from(file: DomainFile) -> Result<Self> {
        Self::new(file.vertices.iter().map(|v| Complex64::new(v[0], v[1])).collect())
    }
}

impl From<PolygonDomain> for DomainFile {
    fn from(d: PolygonDomain) -> Self {
        d.to_file()
    }
}

/// Distances from a domain to the boundary of the upper half-disk and to the
/// point 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfDiskDistance {
    /// `min over A of min(1 - |z|, Im z)`.
    pub d_a: f64,
    /// `min over A of |z - 1|`.
    pub d_tilde: f64,
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    cross(b - a, c - a)
}

fn on_segment(a: Complex64, b: Complex64, p: Complex64) -> bool {
    p.re >= a.re.min(b.re) && p.re <= a.re.max(b.re) && p.im >= a.im.min(b.im) && p.im <= a.im.max(b.im)
}

fn segments_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

impl PolygonDomain {
    /// Builds a polygon from its vertices. Clockwise input is reversed so the
    /// stored orientation is always counterclockwise.
    pub fn new(mut vertices: Vec<Complex64>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain(format!("need at least 3 vertices, got {}", vertices.len())));
        }
        if vertices.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidDomain("non-finite vertex".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::InvalidDomain(format!("repeated vertex at index {i}")));
            }
        }
        let signed = signed_area(&vertices);
        if signed.abs() <= 1e-15 {
            return Err(Error::InvalidDomain("polygon has zero area".into()));
        }
        if signed < 0.0 {
            vertices.reverse();
        }
        let domain = Self { vertices };
        domain.check_simple()?;
        Ok(domain)
    }

    /// Builds a polygon and rejects it unless `d_A >= delta_min`.
    pub fn admissible(vertices: Vec<Complex64>, delta_min: f64) -> Result<Self> {
        let domain = Self::new(vertices)?;
        domain.check_admissible(delta_min)?;
        Ok(domain)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DomainFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidDomain(format!("bad domain JSON: {e}")))?;
        Self::try_from(file)
    }

    pub fn to_file(&self) -> DomainFile {
        DomainFile { vertices: self.vertices.iter().map(|v| [v.re, v.im]).collect() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("domain serializes")
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Self::new(vec![
            Complex64::new(x0, y0),
            Complex64::new(x1, y0),
            Complex64::new(x1, y1),
            Complex64::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    /// Edges `(a, b)` in counterclockwise order, closing back to the first vertex.
    pub fn edges(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area; positive by construction.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn centroid(&self) -> Complex64 {
        let mut c = Complex64::new(0.0, 0.0);
        let mut a2 = 0.0;
        for (p, q) in self.edges() {
            let w = cross(p, q);
            a2 += w;
            c += (p + q) * w;
        }
        c / (3.0 * a2)
    }

    /// `(min_re, max_re, min_im, max_im)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), v| (a.min(v.re), b.max(v.re), c.min(v.im), d.max(v.im)),
        )
    }

    /// Point membership by ray casting towards `+x`.
    ///
    /// Boundary points belong to the domain exactly when the interior lies on
    /// their `+x` side (or `+y` side for horizontal edges), i.e. edges whose
    /// outward normal points into the `-x`/`-y` half-planes are closed. Tiling
    /// polygons therefore count every point once.
    pub fn contains(&self, z: Complex64) -> bool {
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a.im > z.im) != (b.im > z.im) {
                let x_cross = a.re + (z.im - a.im) * (b.re - a.re) / (b.im - a.im);
                if z.re < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Distance from `z` to the polygon boundary.
    pub fn distance_to_boundary(&self, z: Complex64) -> f64 {
        self.edges().map(|(a, b)| segment_distance(z, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// `d_A` and `d~_A`.
    ///
    /// `min(1 - |z|, Im z)` is concave, so its minimum over the closed polygon
    /// sits at a vertex; `|z - 1|` is convex, so its minimum sits on an edge.
    pub fn halfdisk_distance(&self) -> HalfDiskDistance {
        let d_a = self.vertices.iter().map(|v| (1.0 - v.norm()).min(v.im)).fold(f64::INFINITY, f64::min);
        let one = Complex64::new(1.0, 0.0);
        let d_tilde = self.edges().map(|(a, b)| segment_distance(one, a, b)).fold(f64::INFINITY, f64::min);
        HalfDiskDistance { d_a, d_tilde }
    }

    pub fn check_admissible(&self, delta_min: f64) -> Result<()> {
        let d = self.halfdisk_distance().d_a;
        if d > 0.0 && d >= delta_min {
            Ok(())
        } else {
            Err(Error::NotAdmissible { distance: d, delta_min })
        }
    }

    pub fn is_admissible(&self, delta_min: f64) -> bool {
        self.check_admissible(delta_min).is_ok()
    }

    /// Scales the polygon by `factor` about its centroid.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let c = self.centroid();
        Self::new(self.vertices.iter().map(|v| c + (v - c) * factor).collect())
    }

    pub fn translated(&self, shift: Complex64) -> Result<Self> {
        Self::new(self.vertices.iter().map(|v| v + shift).collect())
    }

    /// Mirror image across the real axis.
    pub fn reflected(&self) -> Self {
        let mut v: Vec<Complex64> = self.vertices.iter().map(|v| v.conj()).collect();
        v.reverse();
        Self { vertices: v }
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| orient(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]) >= 0.0)
    }

    /// Ear-clipping triangulation. Triangles are counterclockwise.
    pub fn triangulate(&self) -> Vec<[Complex64; 3]> {
        let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
        let v = &self.vertices;
        let mut out = Vec::with_capacity(idx.len() - 2);
        while idx.len() > 3 {
            let m = idx.len();
            let mut clipped = false;
            for k in 0..m {
                let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
                let (a, b, c) = (v[ia], v[ib], v[ic]);
                if orient(a, b, c) <= 0.0 {
                    continue;
                }
                let blocked = idx.iter().any(|&j| {
                    j != ia && j != ib && j != ic && {
                        let p = v[j];
                        orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
                    }
                });
                if !blocked {
                    out.push([a, b, c]);
                    idx.remove(k);
                    clipped = true;
                    break;
                }
            }
            // Collinear leftovers: drop a zero-area vertex and carry on.
            if !clipped {
                idx.remove(0);
            }
        }
        out.push([v[idx[0]], v[idx[1]], v[idx[2]]]);
        out
    }

    /// Short content hash of the vertex list, used to tag reports.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            h.update(v.re.to_le_bytes());
            h.update(v.im.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn check_simple(&self) -> Result<()> {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    // Adjacent edges share one vertex; they overlap only when
                    // the path folds back on itself.
                    let (first, second) = if j == i + 1 { (edges[i], edges[j]) } else { (edges[j], edges[i]) };
                    let (u, v) = (first.1 - first.0, second.1 - second.0);
                    if cross(u, v) == 0.0 && u.re * v.re + u.im * v.im < 0.0 {
                        return Err(Error::InvalidDomain(format!("edges {i} and {j} overlap")));
                    }
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return Err(Error::InvalidDomain(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }
}

fn signed_area(v: &[Complex64]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>()
}
