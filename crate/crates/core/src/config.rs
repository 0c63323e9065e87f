//! Run configuration: sensor, numerics, sampling and training in one TOML file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::casimir::{FiberGeometry, SphereSpec};
use crate::dataset::SamplingSpec;
use crate::error::{Error, Result};
use crate::gas::{SpeciesDb, BUILTIN_SPECIES};
use crate::materials::{MaterialDb, BUILTIN_MATERIALS};
use crate::nn::{TrainOptions, TrainSchedule};
use crate::trap::{LaserSpec, Numerics, SensorConfig, SensorModel};

/// The shipped configuration (also at `config/default.toml` in the repository).
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    pub wavelength: f64,
    pub beam_radius: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSection {
    pub material: String,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub temperature: f64,
    pub fiber: String,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub laser: LaserSection,
    pub spheres: Vec<SphereSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub cap_pa: f64,
    pub target: String,
    /// Upper end of the target range in the `set2` preset.
    pub set2_target_max_pa: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            cap_pa: 2e4,
            target: "CO2".into(),
            set2_target_max_pa: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub hidden_layers: usize,
    pub width: usize,
    pub validation_fraction: f64,
    pub schedule: TrainSchedule,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            hidden_layers: 12,
            width: 288,
            validation_fraction: 0.2,
            schedule: TrainSchedule::default(),
        }
    }
}

/// Dataset sampling presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Every species, the target included, uniform on the simplex.
    Set1,
    /// Target uniform on `[0, set2_target_max_pa]`, the rest on the simplex.
    Set2,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Set1 => "set1",
            Preset::Set2 => "set2",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "set1" => Ok(Preset::Set1),
            "set2" => Ok(Preset::Set2),
            _ => Err(Error::Config(format!("unknown preset '{s}' (valid: set1, set2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_db: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_db: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub sensor: SensorSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub training: TrainingSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The shipped configuration, relative paths resolved against `base_dir`.
    pub fn builtin(base_dir: impl Into<PathBuf>) -> Self {
        Self::parse(DEFAULT_CONFIG, base_dir).expect("shipped config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                t.validation_fraction
            )));
        }
        if t.hidden_layers == 0 || t.width == 0 {
            return Err(Error::Config("network needs >= 1 hidden layer of width >= 1".into()));
        }
        t.schedule.validate()?;
        self.numerics.quadrature.validate()?;
        if self.sensor.spheres.is_empty() {
            return Err(Error::Config("sensor.spheres is empty".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    fn material_source(&self) -> Result<(String, String)> {
        match &self.material_db {
            None => Ok((BUILTIN_MATERIALS.to_string(), "<builtin materials.toml>".into())),
            Some(p) => {
                let p = self.resolve(p);
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Ok((text, p.display().to_string()))
            }
        }
    }

    fn species_source(&self) -> Result<(String, String)> {
        match &self.species_db {
            None => Ok((BUILTIN_SPECIES.to_string(), "<builtin species.toml>".into())),
            Some(p) => {
                let p = self.resolve(p);
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Ok((text, p.display().to_string()))
            }
        }
    }

    pub fn material_db(&self) -> Result<MaterialDb> {
        let (text, origin) = self.material_source()?;
        MaterialDb::parse(&text, &origin)
    }

    pub fn species_db(&self) -> Result<SpeciesDb> {
        let (text, origin) = self.species_source()?;
        SpeciesDb::parse(&text, &origin)
    }

    pub fn sensor_config(&self, materials: &MaterialDb) -> Result<SensorConfig> {
        let s = &self.sensor;
        let spheres = s
            .spheres
            .iter()
            .map(|sp| SphereSpec::new(materials.get(&sp.material)?.clone(), sp.radius))
            .collect::<Result<Vec<_>>>()?;
        let cfg = SensorConfig {
            geometry: FiberGeometry::new(s.inner_radius, s.outer_radius)?,
            fiber: materials.get(&s.fiber)?.clone(),
            laser: LaserSpec::new(s.laser.wavelength, s.laser.beam_radius, s.laser.power)?,
            spheres,
            temperature: s.temperature,
            numerics: self.numerics,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cached forward model valid for mixtures up to `max_pressure` Pa.
    pub fn build_model(&self, max_pressure: f64) -> Result<SensorModel> {
        let materials = self.material_db()?;
        SensorModel::build(self.sensor_config(&materials)?, self.species_db()?, max_pressure)
    }

    pub fn sampling_spec(&self, preset: Preset, species: &SpeciesDb, seed: u64) -> SamplingSpec {
        let names = species.names().into_iter().map(String::from).collect();
        let s = &self.sampling;
        match preset {
            Preset::Set1 => SamplingSpec::set1(names, &s.target, s.cap_pa, seed),
            Preset::Set2 => SamplingSpec::set2(names, &s.target, s.cap_pa, s.set2_target_max_pa, seed),
        }
    }

    pub fn train_options(&self, rows: usize, seed: u64) -> TrainOptions {
        let t = &self.training;
        TrainOptions {
            hidden_layers: t.hidden_layers,
            width: t.width,
            schedule: t.schedule.clone(),
            seed,
            validation_rows: ((rows as f64) * t.validation_fraction).round() as usize,
        }
    }

    /// SHA-256 over the sensor, numerics and sampling sections and the
    /// contents of both databases. Seed, paths and training settings are
    /// excluded.
    pub fn config_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Physics<'a> {
            sensor: &'a SensorSection,
            numerics: &'a Numerics,
            sampling: &'a SamplingSection,
        }
        let canon = toml::to_string(&Physics {
            sensor: &self.sensor,
            numerics: &self.numerics,
            sampling: &self.sampling,
        })
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        let mut h = Sha256::new();
        for part in [canon, self.material_source()?.0, self.species_source()?.0] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
