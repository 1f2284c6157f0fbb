//! Experiment configuration: a TOML file with a fixed schema. Unknown keys are
//! rejected at every level.
//!
//! ```toml
//! horizon = 1.9           # T
//! resolution = 64         # cells across the longest side of Ω's bounding box
//! surface_order = 16      # Gauss-Legendre points per angle on ∂Ω
//! seed = 1
//! output_dir = "out/demo"
//! calibration = "simulated"   # or "analytic"
//!
//! [omega]
//! kind = "ball"
//! center = [0.0, 0.0, 0.0]
//! radius = 1.0
//!
//! [obstacle]              # omit for blind inversion of a recorded trace
//! kind = "ball"           # "ball", "box", "union" or "none"
//! center = [0.0, 0.0, 0.0]
//! radius = 0.3
//!
//! [pulse]
//! center = [0.0, 0.0, 0.0]
//! eta = 0.9
//!
//! [tau]
//! min = 2.0
//! max = 40.0
//! count = 16
//! spacing = "log"         # or "linear"
//!
//! [fit]                   # optional
//! window = "trailing_run" # "trailing_run", "upper_fraction" or "fixed"
//! fraction = 0.5          # for upper_fraction
//! lo = 10.0               # for fixed
//! hi = 40.0
//! model = "exponential"   # or "exponential_with_power"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use enclosure_core::extraction::{FitModel, FitOptions, WindowPolicy};
use enclosure_core::geometry::BallSpec;
use enclosure_core::indicator::TauGrid;
use enclosure_core::pipeline::CalibrationMode;
use enclosure_core::{DomainSpec, SourcePulse, Vec3};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub omega: ShapeConfig,
    #[serde(default)]
    pub obstacle: Option<ShapeConfig>,
    pub pulse: PulseConfig,
    pub horizon: f64,
    pub tau: TauConfig,
    pub resolution: usize,
    #[serde(default = "default_surface_order")]
    pub surface_order: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_calibration")]
    pub calibration: String,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_surface_order() -> usize {
    16
}

fn default_calibration() -> String {
    "simulated".to_string()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Ball {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Union {
        balls: Vec<BallConfig>,
    },
    /// Empty obstacle; only meaningful for `[obstacle]`.
    None,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub center: [f64; 3],
    pub eta: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: String,
}

fn default_spacing() -> String {
    "log".to_string()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_window")]
    pub window: String,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default = "default_model")]
    pub model: String,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            fraction: None,
            lo: None,
            hi: None,
            model: default_model(),
        }
    }
}

fn default_window() -> String {
    "trailing_run".to_string()
}

fn default_model() -> String {
    "exponential".to_string()
}

/// What the obstacle section says.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    /// No `[obstacle]` table: the obstacle is unknown.
    Unknown,
    Empty,
    Known(DomainSpec),
}

impl Obstacle {
    pub fn domain(&self) -> Option<&DomainSpec> {
        match self {
            Obstacle::Known(d) => Some(d),
            _ => None,
        }
    }

    /// Obstacle to put in the solver grid, if the obstacle is specified at all.
    pub fn for_solver(&self) -> Option<Option<&DomainSpec>> {
        match self {
            Obstacle::Unknown => None,
            Obstacle::Empty => Some(None),
            Obstacle::Known(d) => Some(Some(d)),
        }
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl ShapeConfig {
    fn to_domain(&self, what: &str) -> Result<Option<DomainSpec>> {
        let d = match self {
            ShapeConfig::Ball { center, radius } => DomainSpec::ball(vec3(*center), *radius),
            ShapeConfig::Box { min, max } => DomainSpec::cuboid(vec3(*min), vec3(*max)),
            ShapeConfig::Union { balls } => {
                let members = balls
                    .iter()
                    .map(|b| BallSpec::new(vec3(b.center), b.radius))
                    .collect::<Result<Vec<_>, _>>()
                    .with_context(|| format!("[{what}] union member"))?;
                DomainSpec::union(members)
            }
            ShapeConfig::None => return Ok(None),
        };
        d.map(Some)
            .with_context(|| format!("invalid [{what}] shape"))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes)
            .with_context(|| format!("config {} is not UTF-8", path.display()))?;
        let cfg = Self::from_toml(text).with_context(|| format!("parsing {}", path.display()))?;
        Ok((cfg, bytes))
    }

    pub fn omega(&self) -> Result<DomainSpec> {
        self.omega
            .to_domain("omega")?
            .ok_or_else(|| anyhow!("[omega] cannot be empty"))
    }

    pub fn obstacle(&self) -> Result<Obstacle> {
        match &self.obstacle {
            None => Ok(Obstacle::Unknown),
            Some(s) => Ok(match s.to_domain("obstacle")? {
                Some(d) => Obstacle::Known(d),
                None => Obstacle::Empty,
            }),
        }
    }

    pub fn pulse(&self) -> Result<SourcePulse> {
        SourcePulse::try_new(vec3(self.pulse.center), self.pulse.eta).ok_or_else(|| {
            anyhow!(
                "[pulse] eta must be positive and finite, got {}",
                self.pulse.eta
            )
        })
    }

    pub fn tau_grid(&self) -> Result<TauGrid> {
        let t = &self.tau;
        let grid = match t.spacing.as_str() {
            "log" => TauGrid::log(t.min, t.max, t.count),
            "linear" => TauGrid::linear(t.min, t.max, t.count),
            other => bail!("[tau] spacing must be \"log\" or \"linear\", got {other:?}"),
        };
        grid.with_context(|| {
            format!(
                "[tau] min = {}, max = {}, count = {}",
                t.min, t.max, t.count
            )
        })
    }

    pub fn calibration(&self) -> Result<CalibrationMode> {
        self.calibration.parse().map_err(|e: String| anyhow!(e))
    }

    pub fn fit_options(&self) -> Result<FitOptions> {
        let f = &self.fit;
        let window = match f.window.as_str() {
            "trailing_run" => WindowPolicy::TrailingRun,
            "upper_fraction" => {
                let fraction = f.fraction.unwrap_or(0.5);
                if !(fraction > 0.0 && fraction <= 1.0) {
                    bail!("[fit] fraction must be in (0, 1], got {fraction}");
                }
                WindowPolicy::UpperFraction(fraction)
            }
            "fixed" => {
                let (Some(lo), Some(hi)) = (f.lo, f.hi) else {
                    bail!("[fit] window = \"fixed\" needs lo and hi");
                };
                WindowPolicy::Fixed { lo, hi }
            }
            other => bail!("[fit] unknown window {other:?}"),
        };
        let model = match f.model.as_str() {
            "exponential" => FitModel::Exponential,
            "exponential_with_power" => FitModel::ExponentialWithPower,
            other => bail!("[fit] unknown model {other:?}"),
        };
        Ok(FitOptions { window, model })
    }

    /// Parses every derived value once so that errors surface at load time.
    pub fn check(&self) -> Result<()> {
        self.omega()?;
        self.obstacle()?;
        self.pulse()?;
        self.tau_grid()?;
        self.calibration()?;
        self.fit_options()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            bail!("horizon must be positive and finite, got {}", self.horizon);
        }
        if self.resolution < 4 {
            bail!("resolution must be at least 4, got {}", self.resolution);
        }
        Ok(())
    }
}
