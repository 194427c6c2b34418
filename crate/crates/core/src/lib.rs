//! Numerical laboratory for the complex eigenvalues of the real Ginibre
//! ensemble (GinOE).
//!
//! The crate checks the Gaussian fluctuation law of eigenvalue counts in
//! polygonal regions of the upper half-disk by three independent routes:
//!
//! * [`ensemble`]: sample matrices, solve spectra, count eigenvalues;
//! * [`kernel`], [`pfaffian`], [`quadrature`], [`cumulants`]: integrate the
//!   Pfaffian correlation kernel and assemble (pseudo-)cumulants;
//! * [`cumulants::clt_prediction`]: the boundary-length closed form
//!   `perimeter / (2 pi^{3/2})` for `Var[X_A] / sqrt(N)`.

pub mod cumulants;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod pfaffian;
pub mod quadrature;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
pub use geometry::PolygonDomain;

pub use num_complex::Complex64;

/// Side-0.4 square `[0.1, 0.5] x [0.3, 0.7]` used as the reference domain
/// throughout the tests and the CLI examples.
pub fn reference_square() -> PolygonDomain {
    PolygonDomain::new(vec![
        Complex64::new(0.1, 0.3),
        Complex64::new(0.5, 0.3),
        Complex64::new(0.5, 0.7),
        Complex64::new(0.1, 0.7),
    ])
    .expect("reference square is a valid polygon")
}
