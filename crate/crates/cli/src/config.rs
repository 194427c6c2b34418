//! Run configuration: tolerances, resolutions and the admissibility gate.

use std::path::Path;

use ginoe_core::ensemble::{Verification, DEFAULT_EIG_RESIDUAL_TOL};
use ginoe_core::geometry::DEFAULT_DELTA_MIN;
use ginoe_core::quadrature::DEFAULT_BAND_RESOLUTION;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Minimum distance from a domain to the boundary of the upper half-disk.
    pub delta_min: f64,
    /// Eigenpair residual bound relative to `||W||_F`.
    pub eig_residual_tol: f64,
    /// Eigen-verification mode; chosen from the dimension when absent.
    pub verification: Option<Verification>,
    /// Cells per unit length for smooth integrals over a domain.
    pub grid_resolution: f64,
    /// Leaf cells per `1/sqrt(N)` in the boundary layer.
    pub band_resolution: f64,
    /// Default Monte Carlo sample count for `rk` and `report`.
    pub mc_samples: usize,
    /// Largest accepted quadrature error estimate.
    pub error_target: Option<f64>,
    /// Relative tolerance of the empirical variance against the prediction.
    pub clt_rel_tol: f64,
    pub max_abs_skewness: f64,
    pub max_abs_excess_kurtosis: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            delta_min: DEFAULT_DELTA_MIN,
            eig_residual_tol: DEFAULT_EIG_RESIDUAL_TOL,
            verification: None,
            grid_resolution: 32.0,
            band_resolution: DEFAULT_BAND_RESOLUTION,
            mc_samples: 1 << 20,
            error_target: None,
            clt_rel_tol: 0.10,
            max_abs_skewness: 0.1,
            max_abs_excess_kurtosis: 0.2,
        }
    }
}

impl Config {
    /// Reads TOML (by `.toml` extension) or JSON.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg: Config = if is_toml {
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?
        } else {
            serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("delta_min", self.delta_min),
            ("eig_residual_tol", self.eig_residual_tol),
            ("grid_resolution", self.grid_resolution),
            ("band_resolution", self.band_resolution),
            ("clt_rel_tol", self.clt_rel_tol),
            ("max_abs_skewness", self.max_abs_skewness),
            ("max_abs_excess_kurtosis", self.max_abs_excess_kurtosis),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.mc_samples < 2 {
            return Err("mc_samples must be at least 2".into());
        }
        if let Some(t) = self.error_target {
            if !(t > 0.0) {
                return Err(format!("error_target must be positive, got {t}"));
            }
        }
        Ok(())
    }
}
