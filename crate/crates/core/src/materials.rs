//! Dielectric response of solids on the imaginary frequency axis.
//!
//! Two model kinds are supported: a sum of undamped Lorentz oscillators,
//! evaluated in closed form, and real-axis absorption data `Im eps(omega)`
//! carried to the imaginary axis with the Kramers-Kronig relation
//!
//! ```text
//! eps(i xi) = 1 + (2/pi) Int_0^inf omega Im eps(omega) / (omega^2 + xi^2) d omega
//! ```

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One Lorentz term `strength / (1 + (xi / resonance)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillator {
    pub strength: f64,
    /// rad/s
    pub resonance: f64,
}

impl Oscillator {
    #[inline]
    pub fn at(&self, xi: f64) -> f64 {
        let r = xi / self.resonance;
        self.strength / (1.0 + r * r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorModel {
    terms: Vec<Oscillator>,
}

impl OscillatorModel {
    pub fn new(terms: Vec<Oscillator>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("oscillator model needs at least one term".into()));
        }
        for (j, t) in terms.iter().enumerate() {
            if !(t.strength > 0.0 && t.strength.is_finite()) {
                return Err(Error::Config(format!(
                    "oscillator term {j}: strength must be positive, got {}",
                    t.strength
                )));
            }
            if !(t.resonance > 0.0 && t.resonance.is_finite()) {
                return Err(Error::Config(format!(
                    "oscillator term {j}: resonance must be positive, got {}",
                    t.resonance
                )));
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Oscillator] {
        &self.terms
    }

    /// `sum_j c_j / (1 + (xi/omega_j)^2)`, without the vacuum 1.
    pub fn response(&self, xi: f64) -> f64 {
        self.terms.iter().map(|t| t.at(xi)).sum()
    }

    pub fn static_response(&self) -> f64 {
        self.terms.iter().map(|t| t.strength).sum()
    }
}

/// Real-axis absorption samples `(omega_k, Im eps(omega_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedResponse {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedResponse {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Config("empty absorption table".into()));
        }
        if grid.len() != values.len() {
            return Err(Error::Config(format!(
                "table has {} frequencies but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.len() < 2 {
            return Err(Error::Config("absorption table needs at least 2 points".into()));
        }
        if grid[0] <= 0.0 {
            return Err(Error::Config("table frequencies must be positive".into()));
        }
        if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "table frequencies not strictly ascending at row {}: {} then {}",
                k + 1,
                grid[k],
                grid[k + 1]
            )));
        }
        if let Some(k) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!(
                "table row {k}: Im eps must be finite and non-negative, got {}",
                values[k]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation, zero outside the tabulated range.
    pub fn im_eps(&self, omega: f64) -> f64 {
        let n = self.grid.len();
        if omega < self.grid[0] || omega > self.grid[n - 1] {
            return 0.0;
        }
        let k = self.grid.partition_point(|&g| g <= omega);
        if k == 0 {
            return self.values[0];
        }
        if k >= n {
            return self.values[n - 1];
        }
        let (x0, x1) = (self.grid[k - 1], self.grid[k]);
        let t = (omega - x0) / (x1 - x0);
        self.values[k - 1] + t * (self.values[k] - self.values[k - 1])
    }
}

/// Resolution of the log-spaced Kramers-Kronig quadrature.
pub const DEFAULT_KK_POINTS_PER_DECADE: usize = 400;

/// `eps(i xi)` from tabulated absorption with the default resolution.
pub fn kk_transform(tab: &TabulatedResponse, xi: f64) -> Result<f64> {
    kk_transform_with(tab, xi, DEFAULT_KK_POINTS_PER_DECADE)
}

/// Trapezoid rule in `ln omega` over the table range widened by one decade on
/// each side (zero padded).
pub fn kk_transform_with(tab: &TabulatedResponse, xi: f64, points_per_decade: usize) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("imaginary frequency must be >= 0, got {xi}")));
    }
    if points_per_decade < 2 {
        return Err(Error::Config("Kramers-Kronig grid needs >= 2 points per decade".into()));
    }
    let lo = (tab.grid[0] / 10.0).ln();
    let hi = (tab.grid[tab.grid.len() - 1] * 10.0).ln();
    let decades = (hi - lo) / std::f64::consts::LN_10;
    let n = (decades * points_per_decade as f64).ceil() as usize;
    let du = (hi - lo) / n as f64;
    let xi2 = xi * xi;
    let mut sum = 0.0;
    for k in 0..=n {
        let omega = (lo + du * k as f64).exp();
        let w2 = omega * omega;
        // d omega = omega du
        let f = w2 * tab.im_eps(omega) / (w2 + xi2);
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        sum += weight * f;
    }
    Ok(1.0 + 2.0 / PI * sum * du)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseModel {
    Oscillator(OscillatorModel),
    Tabulated(TabulatedResponse),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialResponse {
    pub name: String,
    pub model: ResponseModel,
    /// kg/m^3
    pub mass_density: f64,
    pub source: String,
    /// Documented data range for tabulated records.
    pub range: Option<String>,
}

impl MaterialResponse {
    pub fn new(name: impl Into<String>, model: ResponseModel, mass_density: f64) -> Result<Self> {
        let name = name.into();
        if !(mass_density > 0.0 && mass_density.is_finite()) {
            return Err(Error::Config(format!(
                "material '{name}': mass density must be positive, got {mass_density}"
            )));
        }
        Ok(Self {
            name,
            model,
            mass_density,
            source: String::new(),
            range: None,
        })
    }

    pub fn oscillators(name: impl Into<String>, terms: Vec<Oscillator>, mass_density: f64) -> Result<Self> {
        Self::new(name, ResponseModel::Oscillator(OscillatorModel::new(terms)?), mass_density)
    }

    /// `eps(i xi)`; always >= 1 and non-increasing in `xi`.
    pub fn permittivity(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::Domain(format!(
                "material '{}': imaginary frequency must be >= 0, got {xi}",
                self.name
            )));
        }
        match &self.model {
            ResponseModel::Oscillator(m) => Ok(1.0 + m.response(xi)),
            ResponseModel::Tabulated(t) => kk_transform(t, xi),
        }
    }
}

/// The set of solids a sensor can be built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDb {
    materials: Vec<MaterialResponse>,
}

pub const BUILTIN_MATERIALS: &str = include_str!("../data/materials.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    material: Vec<MaterialRecord>,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Oscillator,
    Tabulated,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialRecord {
    name: String,
    kind: ModelKind,
    mass_density: f64,
    source: String,
    range: Option<String>,
    oscillators: Option<Vec<OscillatorRecord>>,
    table: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatorRecord {
    strength: f64,
    resonance: f64,
}

impl MaterialDb {
    pub fn new(materials: Vec<MaterialResponse>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &materials {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate material name '{}'", m.name)));
            }
        }
        Ok(Self { materials })
    }

    /// The database shipped with the crate (fiber SiO2 plus ten sphere materials).
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MATERIALS, "<builtin materials.toml>").expect("builtin material db is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: MaterialFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        let mut out = Vec::with_capacity(file.material.len());
        for (idx, rec) in file.material.into_iter().enumerate() {
            let ctx = |msg: String| Error::Config(format!("{origin}: material record {idx} ('{}'): {msg}", rec.name));
            let model = match rec.kind {
                ModelKind::Oscillator => {
                    if rec.table.is_some() {
                        return Err(ctx("oscillator record must not carry a table".into()));
                    }
                    let terms = rec
                        .oscillators
                        .as_ref()
                        .ok_or_else(|| ctx("missing field 'oscillators'".into()))?
                        .iter()
                        .map(|o| Oscillator {
                            strength: o.strength,
                            resonance: o.resonance,
                        })
                        .collect();
                    ResponseModel::Oscillator(OscillatorModel::new(terms).map_err(|e| ctx(e.to_string()))?)
                }
                ModelKind::Tabulated => {
                    if rec.oscillators.is_some() {
                        return Err(ctx("tabulated record must not carry oscillators".into()));
                    }
                    let table = rec.table.as_ref().ok_or_else(|| ctx("missing field 'table'".into()))?;
                    let grid = table.iter().map(|r| r[0]).collect();
                    let values = table.iter().map(|r| r[1]).collect();
                    ResponseModel::Tabulated(TabulatedResponse::new(grid, values).map_err(|e| ctx(e.to_string()))?)
                }
            };
            let mut m = MaterialResponse::new(rec.name.clone(), model, rec.mass_density).map_err(|e| ctx(e.to_string()))?;
            m.source = rec.source;
            m.range = rec.range;
            out.push(m);
        }
        Self::new(out).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn get(&self, name: &str) -> Result<&MaterialResponse> {
        self.materials.iter().find(|m| m.name == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown material '{name}'; valid names: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.materials.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterialResponse> {
        self.materials.iter()
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }
}
