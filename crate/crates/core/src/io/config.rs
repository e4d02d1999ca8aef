use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{fmt_f64, key_values, DepthAdapter, FormatError};
use crate::fusion::{FusionConfig, SamplingGrid};
use crate::geometry::CameraIntrinsics;
use crate::synth::{NoiseSpec, SceneConfig};
use crate::types::Plane;

/// Every configuration key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("fx", "horizontal focal length in pixels"),
    ("fy", "vertical focal length in pixels"),
    ("cx", "principal point column in pixels"),
    ("cy", "principal point row in pixels"),
    ("image_width", "depth image width in pixels"),
    ("image_height", "depth image height in pixels"),
    ("projection_resolution", "side of the square projected views in pixels"),
    ("heatmap_size", "side of the square heat-maps in pixels"),
    ("heatmap_sigma", "standard deviation of synthesized heat-map blobs, heat-map pixels"),
    ("grid_n", "fusion sampling grid points per axis"),
    ("grid_inflation", "fusion grid half-size relative to the OBB half-extents"),
    ("support_fraction", "fusion moments use grid points above this fraction of the peak product"),
    ("components", "number of prior principal components"),
    ("prior", "path of the MVPP prior file (empty: none)"),
    ("noise_sigma", "additive Gaussian heat-map noise standard deviation"),
    ("hotspot_probability", "per-scene probability of a spurious heat-map hotspot"),
    ("hotspot_view", "view receiving spurious hotspots (xy, yz, zx)"),
    ("hotspot_offset_mm", "hotspot displacement along the view's u axis in mm"),
    ("hotspot_amplitude", "peak value of spurious hotspots"),
    ("seed", "master random seed"),
    ("frames", "number of synthetic frames"),
    ("point_density", "synthetic cloud points per mm of bone"),
    ("capsule_radius", "synthetic finger radius in mm"),
    ("max_attempts", "synthetic pose draws before a frame fails"),
    ("input", "input path (empty: none)"),
    ("output", "output path (empty: none)"),
    ("adapter", "depth file adapter (canonical, msra_like)"),
];

/// A parsed configuration value, as produced by [`RunConfig::get`].
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Float(f64),
    Int(u64),
    Text(String),
}

impl Display for ConfigValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigValue::Float(x) => f.write_str(&fmt_f64(*x)),
            ConfigValue::Int(n) => write!(f, "{n}"),
            ConfigValue::Text(s) => f.write_str(s),
        }
    }
}

/// Everything a CLI run depends on besides its input files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub intrinsics: CameraIntrinsics,
    pub projection_resolution: usize,
    pub heatmap_size: usize,
    pub heatmap_sigma: f64,
    pub grid_n: usize,
    pub grid_inflation: f64,
    pub support_fraction: f64,
    pub components: usize,
    pub prior: Option<PathBuf>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub frames: usize,
    pub point_density: f64,
    pub capsule_radius: f64,
    pub max_attempts: usize,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub adapter: DepthAdapter,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        let fusion = FusionConfig::default();
        Self {
            intrinsics: CameraIntrinsics { fx: 475.0, fy: 475.0, cx: 160.0, cy: 120.0, image_width: 320, image_height: 240 },
            projection_resolution: scene.resolution,
            heatmap_size: scene.heatmap_size,
            heatmap_sigma: scene.heatmap_sigma,
            grid_n: fusion.grid.n,
            grid_inflation: fusion.grid.inflation,
            support_fraction: fusion.support_fraction,
            components: crate::defaults::PRIOR_COMPONENTS,
            prior: None,
            noise: NoiseSpec::none(),
            seed: 0,
            frames: 10,
            point_density: scene.density,
            capsule_radius: scene.radius,
            max_attempts: scene.max_attempts,
            input: None,
            output: None,
            adapter: DepthAdapter::Canonical,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| format!("{key}: `{value}`: {e}"))
}

fn path_value(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_text(p: &Option<PathBuf>) -> ConfigValue {
    ConfigValue::Text(p.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
}

impl RunConfig {
    /// Current value of `key`.
    pub fn get(&self, key: &str) -> Option<ConfigValue> {
        use ConfigValue::{Float, Int, Text};
        let v = match key {
            "fx" => Float(self.intrinsics.fx),
            "fy" => Float(self.intrinsics.fy),
            "cx" => Float(self.intrinsics.cx),
            "cy" => Float(self.intrinsics.cy),
            "image_width" => Int(self.intrinsics.image_width as u64),
            "image_height" => Int(self.intrinsics.image_height as u64),
            "projection_resolution" => Int(self.projection_resolution as u64),
            "heatmap_size" => Int(self.heatmap_size as u64),
            "heatmap_sigma" => Float(self.heatmap_sigma),
            "grid_n" => Int(self.grid_n as u64),
            "grid_inflation" => Float(self.grid_inflation),
            "support_fraction" => Float(self.support_fraction),
            "components" => Int(self.components as u64),
            "prior" => path_text(&self.prior),
            "noise_sigma" => Float(self.noise.gaussian_sigma),
            "hotspot_probability" => Float(self.noise.hotspot_probability),
            "hotspot_view" => Text(self.noise.hotspot_view.name().to_string()),
            "hotspot_offset_mm" => Float(self.noise.hotspot_offset_mm),
            "hotspot_amplitude" => Float(self.noise.hotspot_amplitude),
            "seed" => Int(self.seed),
            "frames" => Int(self.frames as u64),
            "point_density" => Float(self.point_density),
            "capsule_radius" => Float(self.capsule_radius),
            "max_attempts" => Int(self.max_attempts as u64),
            "input" => path_text(&self.input),
            "output" => path_text(&self.output),
            "adapter" => Text(
                match self.adapter {
                    DepthAdapter::Canonical => "canonical",
                    DepthAdapter::MsraLike => "msra_like",
                }
                .to_string(),
            ),
            _ => return None,
        };
        Some(v)
    }

    /// Sets `key` from its text form. Errors name the key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "fx" => self.intrinsics.fx = parse(key, value)?,
            "fy" => self.intrinsics.fy = parse(key, value)?,
            "cx" => self.intrinsics.cx = parse(key, value)?,
            "cy" => self.intrinsics.cy = parse(key, value)?,
            "image_width" => self.intrinsics.image_width = parse(key, value)?,
            "image_height" => self.intrinsics.image_height = parse(key, value)?,
            "projection_resolution" => self.projection_resolution = parse(key, value)?,
            "heatmap_size" => self.heatmap_size = parse(key, value)?,
            "heatmap_sigma" => self.heatmap_sigma = parse(key, value)?,
            "grid_n" => self.grid_n = parse(key, value)?,
            "grid_inflation" => self.grid_inflation = parse(key, value)?,
            "support_fraction" => self.support_fraction = parse(key, value)?,
            "components" => self.components = parse(key, value)?,
            "prior" => self.prior = path_value(value),
            "noise_sigma" => self.noise.gaussian_sigma = parse(key, value)?,
            "hotspot_probability" => self.noise.hotspot_probability = parse(key, value)?,
            "hotspot_view" => self.noise.hotspot_view = parse::<Plane>(key, value)?,
            "hotspot_offset_mm" => self.noise.hotspot_offset_mm = parse(key, value)?,
            "hotspot_amplitude" => self.noise.hotspot_amplitude = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "point_density" => self.point_density = parse(key, value)?,
            "capsule_radius" => self.capsule_radius = parse(key, value)?,
            "max_attempts" => self.max_attempts = parse(key, value)?,
            "input" => self.input = path_value(value),
            "output" => self.output = path_value(value),
            "adapter" => self.adapter = parse(key, value)?,
            other => return Err(format!("unknown configuration key `{other}`")),
        }
        Ok(())
    }

    /// Flat `key = value` text listing every key, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, doc) in CONFIG_KEYS {
            let value = self.get(key).expect("documented key");
            out.push_str(&format!("# {doc}\n{key} = {value}\n"));
        }
        out
    }

    /// Parses `key = value` text over the defaults; later lines win.
    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), FormatError> {
        for (line, key, value) in key_values(text)? {
            self.set(&key, &value).map_err(|m| FormatError::parse(line, m))?;
        }
        Ok(())
    }

    /// Range checks that the type system does not enforce.
    pub fn validate(&self) -> Result<(), String> {
        self.intrinsics.validate().map_err(|e| e.to_string())?;
        let positive = [
            ("projection_resolution", self.projection_resolution),
            ("heatmap_size", self.heatmap_size),
            ("components", self.components),
            ("max_attempts", self.max_attempts),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(format!("{key} must be positive"));
            }
        }
        if self.projection_resolution < 8 {
            return Err("projection_resolution must be at least 8".into());
        }
        if self.grid_n < 2 {
            return Err("grid_n must be at least 2".into());
        }
        let floats = [
            ("heatmap_sigma", self.heatmap_sigma, false),
            ("grid_inflation", self.grid_inflation, false),
            ("point_density", self.point_density, false),
            ("capsule_radius", self.capsule_radius, false),
            ("noise_sigma", self.noise.gaussian_sigma, true),
            ("hotspot_amplitude", self.noise.hotspot_amplitude, true),
        ];
        for (key, v, zero_ok) in floats {
            if !v.is_finite() || v < 0.0 || (v == 0.0 && !zero_ok) {
                return Err(format!("{key} out of range: {v}"));
            }
        }
        if !self.noise.hotspot_offset_mm.is_finite() {
            return Err("hotspot_offset_mm must be finite".into());
        }
        for (key, v) in [("support_fraction", self.support_fraction), ("hotspot_probability", self.noise.hotspot_probability)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{key} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::to_text`] with the
    /// input and output paths cleared, so relocating a run keeps its hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.input = None;
        canonical.output = None;
        let digest = Sha256::digest(canonical.to_text().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            resolution: self.projection_resolution,
            heatmap_size: self.heatmap_size,
            heatmap_sigma: self.heatmap_sigma,
            density: self.point_density,
            radius: self.capsule_radius,
            max_attempts: self.max_attempts,
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            grid: SamplingGrid { n: self.grid_n, inflation: self.grid_inflation },
            support_fraction: self.support_fraction,
        }
    }
}
