//! Run configuration: JSON file, defaults, and flag overrides.

use clap::Args;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use crossview::geometry::{PanoramaGeometry, SatelliteCamera};
use crossview::oracle::SceneRecipe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cylinder stack around the street camera, composited far to near.
    Depthwise,
    /// Horizontal plane stack swept away from the horizon.
    Heightwise,
    /// Flat baseline: every satellite pixel assumed on the ground plane.
    Ground,
    /// Flat baseline: plain polar resampling of the satellite image.
    Polar,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Depthwise => "depthwise",
            Mode::Heightwise => "heightwise",
            Mode::Ground => "ground",
            Mode::Polar => "polar",
        };
        f.write_str(s)
    }
}

/// One run's parameters. Loaded from JSON (all fields optional, defaults
/// below), then individually overridable from the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Satellite ground resolution in pixels per meter.
    pub scale: f64,
    /// Satellite raster size (square) used when synthesizing scenes.
    pub sat_size: usize,
    pub pano_width: usize,
    pub pano_height: usize,
    /// "cvact-180" (theta in [0, pi]) or "cvusa-90" ([pi/4, 3 pi/4]).
    /// Mutually exclusive with explicit theta bounds.
    pub fov_preset: Option<String>,
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    /// Street camera height above the ground in meters.
    pub camera_height: f64,
    /// Number of satellite height planes (includes the ground plane).
    pub n_planes: usize,
    /// Number of street-side cylinders for the depthwise renderer.
    pub m_planes: usize,
    /// Outermost cylinder radius in meters; defaults to the satellite
    /// half extent, image_size / (2 * scale).
    pub max_radius: Option<f64>,
    /// Height of the top satellite plane in meters above the camera.
    pub max_height: f32,
    pub mode: Mode,
    /// Satellite pixel of the street camera; defaults to the raster center.
    pub center_u: Option<f64>,
    pub center_v: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scale: 10.0,
            sat_size: 256,
            pano_width: 512,
            pano_height: 128,
            fov_preset: None,
            theta_min: None,
            theta_max: None,
            camera_height: 2.0,
            n_planes: 64,
            m_planes: 64,
            max_radius: None,
            max_height: 6.0,
            mode: Mode::Depthwise,
            center_u: None,
            center_v: None,
        }
    }
}

/// Command-line overrides for individual [`RunConfig`] fields.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; flags below override individual fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Satellite resolution in pixels per meter.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Satellite raster size for synthesized scenes.
    #[arg(long)]
    pub sat_size: Option<usize>,
    #[arg(long)]
    pub pano_width: Option<usize>,
    #[arg(long)]
    pub pano_height: Option<usize>,
    /// FoV preset: "cvact-180" or "cvusa-90".
    #[arg(long, conflicts_with_all = ["theta_min", "theta_max"])]
    pub fov: Option<String>,
    /// Custom FoV lower bound in radians (requires --theta-max).
    #[arg(long, requires = "theta_max")]
    pub theta_min: Option<f64>,
    /// Custom FoV upper bound in radians (requires --theta-min).
    #[arg(long, requires = "theta_min")]
    pub theta_max: Option<f64>,
    /// Street camera height in meters.
    #[arg(long)]
    pub camera_height: Option<f64>,
    /// Satellite height planes, ground included.
    #[arg(long)]
    pub n_planes: Option<usize>,
    /// Street-side cylinder count.
    #[arg(long)]
    pub m_planes: Option<usize>,
    /// Outermost cylinder radius in meters.
    #[arg(long)]
    pub max_radius: Option<f64>,
    /// Top satellite plane height in meters.
    #[arg(long)]
    pub max_height: Option<f32>,
    /// Projection mode.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Street camera column in satellite pixels.
    #[arg(long)]
    pub center_u: Option<f64>,
    /// Street camera row in satellite pixels.
    #[arg(long)]
    pub center_v: Option<f64>,
}

fn preset_bounds(name: &str) -> Result<(f64, f64), String> {
    match name {
        "cvact-180" => Ok((0.0, PI)),
        "cvusa-90" => Ok((FRAC_PI_4, 3.0 * FRAC_PI_4)),
        other => Err(format!(
            "unknown FoV preset {other:?} (expected \"cvact-180\" or \"cvusa-90\")"
        )),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn apply(&mut self, o: &ConfigArgs) {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = o.$field { self.$field = Some(v); } )* };
        }
        if let Some(v) = o.scale {
            self.scale = v;
        }
        if let Some(v) = o.sat_size {
            self.sat_size = v;
        }
        if let Some(v) = o.pano_width {
            self.pano_width = v;
        }
        if let Some(v) = o.pano_height {
            self.pano_height = v;
        }
        if let Some(p) = &o.fov {
            self.fov_preset = Some(p.clone());
            self.theta_min = None;
            self.theta_max = None;
        }
        if o.theta_min.is_some() || o.theta_max.is_some() {
            self.fov_preset = None;
            self.theta_min = o.theta_min;
            self.theta_max = o.theta_max;
        }
        if let Some(v) = o.camera_height {
            self.camera_height = v;
        }
        if let Some(v) = o.n_planes {
            self.n_planes = v;
        }
        if let Some(v) = o.m_planes {
            self.m_planes = v;
        }
        if let Some(v) = o.max_height {
            self.max_height = v;
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        take!(max_radius, center_u, center_v);
    }

    pub fn theta_bounds(&self) -> Result<(f64, f64), String> {
        match (&self.fov_preset, self.theta_min, self.theta_max) {
            (Some(p), None, None) => preset_bounds(p),
            (None, Some(a), Some(b)) => Ok((a, b)),
            (None, None, None) => preset_bounds("cvact-180"),
            (Some(_), _, _) => {
                Err("give either fov_preset or explicit theta bounds, not both".into())
            }
            _ => Err("theta_min and theta_max must be given together".into()),
        }
    }

    /// Panorama geometry at the configured output size.
    pub fn geometry(&self) -> Result<PanoramaGeometry<f64>, String> {
        self.geometry_for(self.pano_width, self.pano_height)
    }

    /// Panorama geometry for an existing image's dimensions.
    pub fn geometry_for(
        &self,
        width: usize,
        height: usize,
    ) -> Result<PanoramaGeometry<f64>, String> {
        let (tmin, tmax) = self.theta_bounds()?;
        PanoramaGeometry::new(width, height, tmin, tmax, self.camera_height)
            .map_err(|e| e.to_string())
    }

    /// Satellite camera for a raster of the given dimensions.
    pub fn camera_for(&self, width: usize, height: usize) -> Result<SatelliteCamera<f64>, String> {
        match (self.center_u, self.center_v) {
            (None, None) => SatelliteCamera::centered(width, height, self.scale),
            (cu, cv) => SatelliteCamera::new(
                cu.unwrap_or((width as f64 - 1.0) / 2.0),
                cv.unwrap_or((height as f64 - 1.0) / 2.0),
                self.scale,
            ),
        }
        .map_err(|e| e.to_string())
    }

    /// Scene recipe matching this configuration's plane grid.
    pub fn recipe(&self) -> SceneRecipe {
        SceneRecipe {
            half_extent: self.sat_size as f64 / (2.0 * self.scale),
            ground_z: -(self.camera_height as f32),
            max_height: self.max_height,
            n_planes: self.n_planes,
        }
    }

    /// Outermost cylinder radius for a satellite raster of `width` pixels.
    pub fn max_radius_for(&self, width: usize) -> f64 {
        self.max_radius.unwrap_or(width as f64 / (2.0 * self.scale))
    }
}
