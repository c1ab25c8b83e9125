use std::path::{Path, PathBuf};

use kdvmh::maps::{self, admissible_box};
use kdvmh::quad::QuadratureSpec;
use kdvmh::{Family, MapParams, PhasePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::Format;

/// Environment variable that may replace the configured output directory.
pub const OUT_DIR_ENV: &str = "KDVMH_OUT_DIR";

fn d_iterations() -> usize {
    10_000
}
fn d_depth() -> usize {
    3
}
fn d_quad_abs() -> f64 {
    1e-13
}
fn d_quad_rel() -> f64 {
    1e-13
}
fn d_ode() -> f64 {
    1e-11
}
fn d_samples() -> usize {
    20
}
fn d_check_steps() -> usize {
    100
}
fn d_sweep_min() -> f64 {
    0.2
}
fn d_sweep_max() -> f64 {
    1.0
}
fn d_sweep_points() -> usize {
    9
}

/// Flat JSON experiment description. Only `family`, `period` and `rng_seed` are required.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub period: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    /// Canonical coordinates for the explicit maps, reduced `[X.., Y..]` otherwise.
    /// Drawn from `rng_seed` when absent.
    #[serde(default)]
    pub seed_point: Option<Vec<f64>>,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    /// BCH depth / truncation order for mh-compare.
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default)]
    pub gradings: Option<Vec<f64>>,
    #[serde(default = "d_quad_abs")]
    pub quad_abs_tol: f64,
    #[serde(default = "d_quad_rel")]
    pub quad_rel_tol: f64,
    #[serde(default = "d_ode")]
    pub ode_tol: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    pub rng_seed: u64,
    /// Random points per check in `verify`.
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Orbit length for orbit-based checks in `verify`.
    #[serde(default = "d_check_steps")]
    pub check_steps: usize,
    /// Grading used to iterate the map in `verify`, when it should differ from the
    /// one the checks assume (negative control).
    #[serde(default)]
    pub map_grading: Option<f64>,
    #[serde(default = "d_sweep_min")]
    pub sweep_min: f64,
    #[serde(default = "d_sweep_max")]
    pub sweep_max: f64,
    #[serde(default = "d_sweep_points")]
    pub sweep_points: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        for (name, v) in [("quad_abs_tol", self.quad_abs_tol), ("quad_rel_tol", self.quad_rel_tol), ("ode_tol", self.ode_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(1..=kdvmh::mh::MAX_DEPTH).contains(&self.depth) {
            return bad(format!("depth must be in 1..={}, got {}", kdvmh::mh::MAX_DEPTH, self.depth));
        }
        if self.samples < 1 || self.check_steps < 1 {
            return bad("samples and check_steps must be at least 1".into());
        }
        if let Some(g) = &self.gradings {
            if g.len() < 2 || g.iter().any(|x| !x.is_finite() || *x == 0.0) {
                return bad("gradings needs at least two finite nonzero values".into());
            }
        }
        if self.sweep_points < 2 || !(self.sweep_min < self.sweep_max) {
            return bad("sweep needs sweep_points >= 2 and sweep_min < sweep_max".into());
        }
        match self.family {
            Family::KdV if self.rho.is_some() => return bad("rho is an MKdV parameter".into()),
            Family::MKdV if self.epsilon.is_some() || self.delta.is_some() => return bad("epsilon/delta are KdV parameters".into()),
            _ => {}
        }
        self.params()?;
        Ok(())
    }

    pub fn params(&self) -> Result<MapParams, CliError> {
        let p = match self.family {
            Family::KdV => MapParams::kdv(self.period, self.epsilon.unwrap_or(2.0), self.delta.unwrap_or(0.05)),
            Family::MKdV => MapParams::mkdv(self.period, self.rho.unwrap_or(1.1)),
        };
        p.map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parameters the map is iterated with in `verify`.
    pub fn map_params(&self) -> Result<MapParams, CliError> {
        let p = self.params()?;
        Ok(self.map_grading.map_or(p, |g| p.with_grading(g)))
    }

    pub fn quad(&self) -> QuadratureSpec {
        QuadratureSpec { abs_tol: self.quad_abs_tol, rel_tol: self.quad_rel_tol, max_subdivisions: 400, ..Default::default() }
    }

    pub fn gradings(&self) -> Vec<f64> {
        self.gradings.clone().unwrap_or_else(|| match self.family {
            Family::KdV => vec![0.1, 0.05, 0.02, 0.01],
            Family::MKdV => vec![0.2, 0.1, 0.05, 0.02],
        })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    /// Whether the explicit canonical map exists for this family and period.
    pub fn canonical(&self) -> bool {
        matches!((self.family, self.period), (Family::KdV, 2) | (Family::KdV, 3) | (Family::MKdV, 2))
    }

    pub fn random_point(&self, params: &MapParams, rng: &mut ChaCha8Rng) -> PhasePoint {
        if self.canonical() {
            PhasePoint::canonical(maps::sample_admissible(params, rng))
        } else {
            maps::sample_reduced(self.period, 0.5 * admissible_box(params), rng)
        }
    }

    /// Seed point, checked for shape and admissibility (one map step and the invariants succeed).
    pub fn seed(&self, params: &MapParams) -> Result<PhasePoint, CliError> {
        let z = match &self.seed_point {
            Some(c) => {
                let want = if self.canonical() { 2 * params.npairs() } else { 2 * self.period };
                if c.len() != want {
                    return Err(CliError::Config(format!("seed_point needs {want} coordinates, got {}", c.len())));
                }
                if self.canonical() {
                    PhasePoint::canonical(c.clone())
                } else {
                    PhasePoint::reduced(c.clone())
                }
            }
            None => self.random_point(params, &mut self.rng()),
        };
        maps::apply(params, &z)?;
        crate::commands::invariants_of(&z, params)?;
        Ok(z)
    }

    /// Output directory: `--out`, then the environment, then the config, then `.`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}
