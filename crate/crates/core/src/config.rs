//! TOML configuration for the command-line studies.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biot_savart::{PlaneQuadrature, QuadratureResolution, VorticityProfile};
use crate::corrector::LemmaResolution;
use crate::geometry::{ObstacleShape, ShapeKind};
use crate::{Error, Result};

/// Obstacle as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    Disk,
    Ellipse { a: f64, b: f64 },
}

impl ShapeConfig {
    pub fn build(&self) -> Result<ObstacleShape> {
        match *self {
            ShapeConfig::Disk => Ok(ObstacleShape::unit_disk()),
            ShapeConfig::Ellipse { a, b } => ObstacleShape::ellipse(a, b),
        }
    }

    /// Parses `disk` or `ellipse:a,b`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown shape `{s}`, expected `disk` or `ellipse:a,b`"));
        if s == "disk" {
            return Ok(ShapeConfig::Disk);
        }
        let rest = s.strip_prefix("ellipse:").ok_or_else(bad)?;
        let (a, b) = rest.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = b.trim().parse().map_err(|_| bad())?;
        let c = ShapeConfig::Ellipse { a, b };
        c.build()?;
        Ok(c)
    }
}

impl From<ObstacleShape> for ShapeConfig {
    fn from(s: ObstacleShape) -> Self {
        match s.kind {
            ShapeKind::UnitDisk => ShapeConfig::Disk,
            ShapeKind::Ellipse { a, b } => ShapeConfig::Ellipse { a, b },
        }
    }
}

/// How `eps` follows `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    /// `eps = factor * C1 * nu`; the coupled regime needs `factor <= 1`.
    #[serde(default = "default_factor")]
    pub factor: f64,
    /// Skip the measurement of `C1` and use this value.
    #[serde(default)]
    pub c1: Option<f64>,
    /// Explicit `eps` per `nu`, outside the coupled regime.
    #[serde(default)]
    pub eps_override: Option<Vec<f64>>,
}

fn default_factor() -> f64 {
    0.95
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling { factor: default_factor(), c1: None, eps_override: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsGridConfig {
    pub r_out: f64,
    pub ds: f64,
    pub n_theta: usize,
    pub dt_max: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.5
}

impl Default for NsGridConfig {
    fn default() -> Self {
        NsGridConfig { r_out: 12.0, ds: 0.03, n_theta: 256, dt_max: 5e-3, cfl: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerGridConfig {
    pub half_width: f64,
    pub n: usize,
    pub dt: f64,
}

impl Default for EulerGridConfig {
    fn default() -> Self {
        EulerGridConfig { half_width: 16.0, n: 768, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub obstacle: ShapeConfig,
    pub vorticity: VorticityProfile,
    pub nu: Vec<f64>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_outputs")]
    pub n_outputs: usize,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default)]
    pub ns: NsGridConfig,
    #[serde(default)]
    pub euler: EulerGridConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_t_final() -> f64 {
    0.5
}

fn default_outputs() -> usize {
    10
}

impl SweepConfig {
    /// The desk-scale sweep: disk, offset bump, four viscosities.
    pub fn desk_scale() -> Self {
        SweepConfig {
            obstacle: ShapeConfig::Disk,
            vorticity: VorticityProfile::single_bump([1.0, 0.0], 10.0, 0.5).expect("valid bump"),
            nu: vec![0.04, 0.02, 0.01, 0.005],
            t_final: default_t_final(),
            n_outputs: default_outputs(),
            coupling: Coupling::default(),
            ns: NsGridConfig::default(),
            euler: EulerGridConfig::default(),
            output_dir: None,
        }
    }

    /// Checks everything that does not need `C1`.
    pub fn validate(&self) -> Result<()> {
        let shape = self.obstacle.build()?;
        self.vorticity.validate()?;
        if self.nu.is_empty() {
            return Err(Error::Config("empty sweep".into()));
        }
        if let Some(v) = self.nu.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("viscosity {v} must be positive")));
        }
        let mut sorted = self.nu.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("viscosities must be distinct".into()));
        }
        if !(self.t_final > 0.0) || self.n_outputs == 0 {
            return Err(Error::Config("need T > 0 and at least one output".into()));
        }
        let c = &self.coupling;
        if !(c.factor > 0.0) {
            return Err(Error::Config("coupling factor must be positive".into()));
        }
        if let Some(c1) = c.c1 {
            if !(c1 > 0.0) {
                return Err(Error::Config("C1 must be positive".into()));
            }
        }
        if let Some(e) = &c.eps_override {
            if e.len() != self.nu.len() {
                return Err(Error::Config(format!("{} eps values for {} viscosities", e.len(), self.nu.len())));
            }
            for &eps in e {
                self.check_eps(&shape, eps)?;
            }
        }
        let support = self.vorticity.outer_radius();
        let g = &self.ns;
        if !(g.ds > 0.0 && g.dt_max > 0.0 && g.cfl > 0.0) || g.n_theta < 8 || !g.n_theta.is_multiple_of(4) {
            return Err(Error::Config("NS grid needs ds, dt_max, cfl > 0 and n_theta a multiple of 4".into()));
        }
        if g.r_out < crate::euler::MIN_BOX_RATIO * support {
            return Err(Error::Config(format!(
                "r_out = {} must be at least {} times the support radius {support}",
                g.r_out,
                crate::euler::MIN_BOX_RATIO
            )));
        }
        let e = &self.euler;
        if !(e.dt > 0.0) || e.n < 16 || !e.n.is_multiple_of(2) {
            return Err(Error::Config("Euler grid needs dt > 0 and an even n >= 16".into()));
        }
        if e.half_width < g.r_out {
            return Err(Error::Config("the Euler box must cover the NS grid".into()));
        }
        Ok(())
    }

    /// `eps (R + 2)` must stay below the inner support radius.
    pub fn check_eps(&self, shape: &ObstacleShape, eps: f64) -> Result<()> {
        let reach = eps * (shape.bounding_radius + 2.0);
        if !(eps > 0.0) || reach >= self.vorticity.inner_radius() {
            return Err(Error::Config(format!(
                "eps = {eps} puts the collar at {reach}, past the inner support radius {}",
                self.vorticity.inner_radius()
            )));
        }
        Ok(())
    }

    /// `eps` for each `nu` given `C1`, and whether the coupling
    /// `eps <= C1 nu` holds for all of them.
    pub fn eps_list(&self, c1: f64) -> Result<(Vec<f64>, bool)> {
        let shape = self.obstacle.build()?;
        let eps: Vec<f64> = match &self.coupling.eps_override {
            Some(e) => e.clone(),
            None => self.nu.iter().map(|nu| self.coupling.factor * c1 * nu).collect(),
        };
        for &e in &eps {
            self.check_eps(&shape, e)?;
        }
        let coupled = eps.iter().zip(&self.nu).all(|(e, nu)| *e <= c1 * nu * (1.0 + 1e-12));
        Ok((eps, coupled))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataConfig {
    pub obstacle: ShapeConfig,
    pub vorticity: VorticityProfile,
    pub eps: Vec<f64>,
    /// `alpha - m`; non-zero adds a fixed multiple of the harmonic field.
    #[serde(default)]
    pub extra_circulation: f64,
    #[serde(default)]
    pub quadrature: Option<QuadratureResolution>,
    #[serde(default)]
    pub plane: Option<PlaneQuadrature>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl InitialDataConfig {
    pub fn validate(&self) -> Result<()> {
        self.obstacle.build()?;
        self.vorticity.validate()?;
        if self.eps.len() < 3 {
            return Err(Error::Config("need at least 3 values of eps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConfig {
    pub obstacle: ShapeConfig,
    pub vorticity: VorticityProfile,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub resolution: Option<LemmaResolution>,
    /// Sample the evolving Euler flow at these many times in `[0, T]`
    /// instead of treating the vorticity as a steady vortex.
    #[serde(default)]
    pub euler: Option<EulerSamples>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerSamples {
    pub t_final: f64,
    pub n_samples: usize,
    #[serde(flatten)]
    pub grid: EulerGridConfig,
}

impl LemmaConfig {
    pub fn validate(&self) -> Result<()> {
        self.obstacle.build()?;
        self.vorticity.validate()?;
        if self.eps.len() < 3 {
            return Err(Error::Config("need at least 3 values of eps".into()));
        }
        if let Some(e) = &self.euler {
            if !(e.t_final > 0.0) || e.n_samples < 2 {
                return Err(Error::Config("Euler sampling needs T > 0 and at least two samples".into()));
            }
        }
        Ok(())
    }
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}
