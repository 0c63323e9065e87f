//! Gas polarizabilities, ideal-gas mixing and the effective medium permittivity.
//!
//! Species polarizabilities are polarizability volumes (m^3), so the number
//! density weighted sum `sum_i P_i alpha_i / (k_B T)` is dimensionless and feeds
//! `eps_M = (1 + 2 alpha_mix) / (1 - alpha_mix)` directly.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::constants::{BOLTZMANN, CUBIC_ANGSTROM, RAD_PER_S_PER_EV};
use crate::error::{Error, Result};
use crate::materials::Oscillator;

#[derive(Debug, Clone, PartialEq)]
pub struct GasSpecies {
    pub name: String,
    /// strengths in m^3, resonances in rad/s
    terms: Vec<Oscillator>,
    pub source: String,
}

impl GasSpecies {
    pub fn new(name: impl Into<String>, terms: Vec<Oscillator>) -> Result<Self> {
        let name = name.into();
        if terms.is_empty() {
            return Err(Error::Config(format!("species '{name}' has no oscillator terms")));
        }
        for t in &terms {
            if !(t.strength > 0.0 && t.strength.is_finite() && t.resonance > 0.0 && t.resonance.is_finite()) {
                return Err(Error::Config(format!(
                    "species '{name}': strengths and resonances must be positive (got {} m^3 at {} rad/s)",
                    t.strength, t.resonance
                )));
            }
        }
        Ok(Self {
            name,
            terms,
            source: String::new(),
        })
    }

    pub fn terms(&self) -> &[Oscillator] {
        &self.terms
    }

    /// Polarizability volume `alpha(i xi)` in m^3.
    pub fn alpha(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::Domain(format!(
                "species '{}': imaginary frequency must be >= 0, got {xi}",
                self.name
            )));
        }
        Ok(self.alpha_unchecked(xi))
    }

    #[inline]
    pub(crate) fn alpha_unchecked(&self, xi: f64) -> f64 {
        self.terms.iter().map(|t| t.at(xi)).sum()
    }

    pub fn static_alpha(&self) -> f64 {
        self.terms.iter().map(|t| t.strength).sum()
    }
}

/// Partial pressures (Pa) by species name, plus temperature (K).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pressures: BTreeMap<String, f64>,
    temperature: f64,
}

impl MixtureState {
    pub fn new<I, S>(pressures: I, temperature: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        let mut map = BTreeMap::new();
        for (name, p) in pressures {
            let name = name.into();
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("partial pressure of {name} must be >= 0, got {p}")));
            }
            *map.entry(name).or_insert(0.0) += p;
        }
        Ok(Self {
            pressures: map,
            temperature,
        })
    }

    pub fn vacuum(temperature: f64) -> Result<Self> {
        Self::new(std::iter::empty::<(String, f64)>(), temperature)
    }

    /// Mixture from a pressure vector ordered like `db`.
    pub fn from_aligned(db: &SpeciesDb, pressures: &[f64], temperature: f64) -> Result<Self> {
        if pressures.len() != db.len() {
            return Err(Error::Config(format!(
                "pressure vector has {} entries, species db has {}",
                pressures.len(),
                db.len()
            )));
        }
        Self::new(db.iter().map(|s| s.name.clone()).zip(pressures.iter().copied()), temperature)
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn pressure(&self, name: &str) -> f64 {
        self.pressures.get(name).copied().unwrap_or(0.0)
    }

    pub fn total_pressure(&self) -> f64 {
        self.pressures.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.pressures.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Pressure vector in `db` order; errors on species missing from `db`.
    pub fn aligned(&self, db: &SpeciesDb) -> Result<Vec<f64>> {
        for name in self.pressures.keys() {
            db.index_of(name)?;
        }
        Ok(db.iter().map(|s| self.pressure(&s.name)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesDb {
    species: Vec<GasSpecies>,
}

pub const BUILTIN_SPECIES: &str = include_str!("../data/species.toml");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesFile {
    species: Vec<SpeciesRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesRecord {
    name: String,
    strength_unit: String,
    resonance_unit: String,
    source: String,
    oscillators: Vec<TermRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRecord {
    strength: f64,
    resonance: f64,
}

impl SpeciesDb {
    pub fn new(species: Vec<GasSpecies>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &species {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate species name '{}'", s.name)));
            }
        }
        Ok(Self { species })
    }

    /// The ten-gas database shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SPECIES, "<builtin species.toml>").expect("builtin species db is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: SpeciesFile = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        let mut out = Vec::with_capacity(file.species.len());
        for (idx, rec) in file.species.into_iter().enumerate() {
            let ctx = |msg: String| Error::Config(format!("{origin}: species record {idx} ('{}'): {msg}", rec.name));
            let c_scale = match rec.strength_unit.as_str() {
                "m3" => 1.0,
                "A3" => CUBIC_ANGSTROM,
                other => return Err(ctx(format!("unknown strength_unit '{other}' (expected m3 or A3)"))),
            };
            let w_scale = match rec.resonance_unit.as_str() {
                "rad/s" => 1.0,
                "eV" => RAD_PER_S_PER_EV,
                other => return Err(ctx(format!("unknown resonance_unit '{other}' (expected rad/s or eV)"))),
            };
            let terms = rec
                .oscillators
                .iter()
                .map(|t| Oscillator {
                    strength: t.strength * c_scale,
                    resonance: t.resonance * w_scale,
                })
                .collect();
            let mut s = GasSpecies::new(rec.name.clone(), terms).map_err(|e| ctx(e.to_string()))?;
            s.source = rec.source;
            out.push(s);
        }
        Self::new(out).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GasSpecies> {
        self.species.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.species.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.species.iter().position(|s| s.name == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown species '{name}'; valid names: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn get(&self, name: &str) -> Result<&GasSpecies> {
        Ok(&self.species[self.index_of(name)?])
    }

    /// `alpha_mix(i xi)` for a pressure vector in db order.
    pub fn alpha_mix_aligned(&self, pressures: &[f64], temperature: f64, xi: f64) -> f64 {
        let kt = BOLTZMANN * temperature;
        self.species
            .iter()
            .zip(pressures)
            .map(|(s, &p)| p * s.alpha_unchecked(xi))
            .sum::<f64>()
            / kt
    }
}

/// Dimensionless mixture polarizability `sum_i P_i alpha_i(i xi) / (k_B T)`.
pub fn mixture_alpha(mix: &MixtureState, db: &SpeciesDb, xi: f64) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("imaginary frequency must be >= 0, got {xi}")));
    }
    let kt = BOLTZMANN * mix.temperature;
    let mut sum = 0.0;
    for (name, p) in mix.iter() {
        sum += p * db.get(name)?.alpha_unchecked(xi);
    }
    Ok(sum / kt)
}

/// `(1 + 2 alpha) / (1 - alpha)`.
pub fn permittivity_from_alpha(alpha_mix: f64) -> Result<f64> {
    if !(alpha_mix < 1.0) {
        return Err(Error::Singularity(format!(
            "mixture polarizability {alpha_mix} >= 1: effective medium diverges (unphysical density)"
        )));
    }
    Ok((1.0 + 2.0 * alpha_mix) / (1.0 - alpha_mix))
}

pub fn effective_permittivity(mix: &MixtureState, db: &SpeciesDb, xi: f64) -> Result<f64> {
    permittivity_from_alpha(mixture_alpha(mix, db, xi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_term(c: f64, w: f64) -> GasSpecies {
        GasSpecies::new("X", vec![Oscillator { strength: c, resonance: w }]).unwrap()
    }

    #[test]
    fn species_alpha_limits() {
        let s = one_term(2e-30, 2e16);
        assert_eq!(s.alpha(0.0).unwrap(), 2e-30);
        assert_eq!(s.alpha(2e16).unwrap(), 1e-30);
        assert!(s.alpha(1e22).unwrap() < 1e-41);
        assert!(matches!(s.alpha(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn builtin_species_db() {
        let db = SpeciesDb::builtin();
        assert_eq!(db.len(), 10);
        assert_eq!(db.names()[0], "CO2");
        // CO2 static polarizability volume: 2.911 A^3
        assert_relative_eq!(db.get("CO2").unwrap().static_alpha(), 2.911e-30, max_relative = 1e-12);
        for s in db.iter() {
            let a0 = s.alpha(0.0).unwrap();
            assert!(a0 > 1e-30 && a0 < 5e-30, "{} {a0}", s.name);
        }
    }

    #[test]
    fn vacuum_and_linearity() {
        let db = SpeciesDb::builtin();
        let vac = MixtureState::vacuum(300.0).unwrap();
        assert_eq!(mixture_alpha(&vac, &db, 1e15).unwrap(), 0.0);
        assert_eq!(effective_permittivity(&vac, &db, 1e15).unwrap(), 1.0);
        let m1 = MixtureState::new([("N2", 1e4)], 300.0).unwrap();
        let m2 = MixtureState::new([("N2", 2e4)], 300.0).unwrap();
        let a1 = mixture_alpha(&m1, &db, 3e14).unwrap();
        let a2 = mixture_alpha(&m2, &db, 3e14).unwrap();
        assert_relative_eq!(a2, 2.0 * a1, max_relative = 1e-15);
    }

    #[test]
    fn co2_at_fifth_of_a_bar() {
        // 2e4 Pa * 2.911e-30 m^3 / (1.380649e-23 J/K * 300 K), done by hand
        let expected = 2e4 * 2.911e-30 / (1.380649e-23 * 300.0);
        let db = SpeciesDb::builtin();
        let m = MixtureState::new([("CO2", 2e4)], 300.0).unwrap();
        let a = mixture_alpha(&m, &db, 0.0).unwrap();
        assert_relative_eq!(a, expected, max_relative = 1e-12);
        assert_relative_eq!(a, 1.405619e-5, max_relative = 1e-6);
    }

    #[test]
    fn unknown_species_is_config_error() {
        let db = SpeciesDb::builtin();
        let m = MixtureState::new([("Xe", 1.0)], 300.0).unwrap();
        assert!(matches!(mixture_alpha(&m, &db, 0.0), Err(Error::Config(_))));
        assert!(m.aligned(&db).is_err());
    }

    #[test]
    fn effective_medium_values() {
        assert_eq!(permittivity_from_alpha(0.0).unwrap(), 1.0);
        assert_relative_eq!(permittivity_from_alpha(0.001).unwrap(), 1.002 / 0.999, max_relative = 1e-15);
        assert!(matches!(permittivity_from_alpha(1.0), Err(Error::Singularity(_))));
        assert!(matches!(permittivity_from_alpha(1.5), Err(Error::Singularity(_))));
        // first order: eps - 1 = 3 alpha + O(alpha^2); remainder is 3 alpha^2/(1-alpha)
        for a in [1e-3, 1e-5, 1e-7] {
            let eps = permittivity_from_alpha(a).unwrap();
            let rem = (eps - 1.0 - 3.0 * a) / (a * a);
            assert!((rem - 3.0).abs() < 0.01, "{a} {rem}");
        }
    }

    #[test]
    fn mixture_rejects_bad_state() {
        assert!(MixtureState::new([("CO2", -1.0)], 300.0).is_err());
        assert!(MixtureState::vacuum(0.0).is_err());
        let db = SpeciesDb::builtin();
        assert!(MixtureState::from_aligned(&db, &[0.0; 3], 300.0).is_err());
    }

    #[test]
    fn unit_parsing() {
        let text = r#"
[[species]]
name = "A"
strength_unit = "m3"
resonance_unit = "rad/s"
source = "t"
oscillators = [{ strength = 1e-30, resonance = 1e16 }]
"#;
        let db = SpeciesDb::parse(text, "t").unwrap();
        assert_eq!(db.get("A").unwrap().static_alpha(), 1e-30);
        assert!(SpeciesDb::parse(&text.replace("\"m3\"", "\"cm3\""), "t").is_err());
        assert!(SpeciesDb::parse(&text.replace("source", "extra = 1\nsource"), "t").is_err());
        let dup = format!("{text}{text}");
        assert!(SpeciesDb::parse(&dup, "t").is_err());
    }
}
