//! Optical standing-wave trap plus Casimir-Polder softening: axial and radial
//! trapping frequencies of every sphere in the sensor.

use std::f64::consts::PI;

use crate::casimir::{
    cp_prefactor, hard_sphere_alpha, local_field_factor, CpSetup, FiberGeometry, GreenRule, MatsubaraGrid,
    QuadratureSpec, SphereSpec,
};
use crate::constants::{SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};
use crate::gas::{permittivity_from_alpha, MixtureState, SpeciesDb};
use crate::materials::MaterialResponse;
use crate::quadrature::Chebyshev;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserSpec {
    /// m
    pub wavelength: f64,
    /// Gaussian radius R of the `exp(-2 r^2 / R^2)` field profile, m.
    pub beam_radius: f64,
    /// W
    pub power: f64,
}

impl LaserSpec {
    pub fn new(wavelength: f64, beam_radius: f64, power: f64) -> Result<Self> {
        for (what, v) in [("wavelength", wavelength), ("beam radius", beam_radius), ("power", power)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("laser {what} must be positive, got {v}")));
            }
        }
        Ok(Self {
            wavelength,
            beam_radius,
            power,
        })
    }

    /// `omega_bar = 2 pi c / lambda`.
    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.wavelength
    }

    pub fn field(&self, eps_medium: f64) -> LaserField {
        LaserField {
            amplitude: e0_from_power(self.power, self.beam_radius, eps_medium),
            angular_frequency: self.angular_frequency(),
            beam_radius: self.beam_radius,
        }
    }
}

/// Peak field of a beam carrying `power` with an `exp(-2 r^2/R^2)` amplitude
/// profile: `E0 = sqrt(8 P / (pi R^2 eps0 c sqrt(eps_M)))`.
pub fn e0_from_power(power: f64, beam_radius: f64, eps_medium: f64) -> f64 {
    (8.0 * power / (PI * beam_radius * beam_radius * VACUUM_PERMITTIVITY * SPEED_OF_LIGHT * eps_medium.sqrt())).sqrt()
}

/// Standing wave `E = E0 exp(-2 r^2/R^2) cos(omega_bar z / c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserField {
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub beam_radius: f64,
}

impl LaserField {
    /// `U_EM = -alpha E^2 / 2`.
    pub fn potential(&self, r: f64, z: f64, alpha: f64) -> f64 {
        let radial = (-2.0 * r * r / (self.beam_radius * self.beam_radius)).exp();
        let e = self.amplitude * radial * (self.angular_frequency * z / SPEED_OF_LIGHT).cos();
        -0.5 * alpha * e * e
    }

    /// `d^2 U_EM / dz^2` at the origin: `alpha E0^2 omega_bar^2 / c^2`.
    pub fn axial_curvature(&self, alpha: f64) -> f64 {
        let k = self.angular_frequency / SPEED_OF_LIGHT;
        alpha * self.amplitude * self.amplitude * k * k
    }

    /// `d^2 U_EM / dr^2` at the origin: `4 alpha E0^2 / R^2`.
    pub fn radial_curvature(&self, alpha: f64) -> f64 {
        4.0 * alpha * self.amplitude * self.amplitude / (self.beam_radius * self.beam_radius)
    }
}

pub fn optical_potential(r: f64, z: f64, alpha: f64, field: &LaserField) -> f64 {
    field.potential(r, z, alpha)
}

/// `omega = sqrt(curvature / m)`; non-positive curvature is an instability.
pub fn harmonic_frequency(curvature: f64, mass: f64) -> Option<f64> {
    if curvature > 0.0 && mass > 0.0 && curvature.is_finite() {
        Some((curvature / mass).sqrt())
    } else {
        None
    }
}

/// `omega_z = (E0 omega_bar / c) sqrt(alpha / m)`.
pub fn axial_omega(alpha: f64, mass: f64, field: &LaserField) -> Result<f64> {
    let k = field.axial_curvature(alpha);
    harmonic_frequency(k, mass).ok_or_else(|| Error::Numeric(format!("axial curvature {k:.6e} J/m^2 is not positive")))
}

/// `omega_r = sqrt((4 alpha E0^2/R^2 + d^2 U_CP/dr^2) / m)`.
pub fn radial_omega(alpha: f64, mass: f64, field: &LaserField, cp_curvature: f64) -> Result<f64> {
    let k = field.radial_curvature(alpha) + cp_curvature;
    harmonic_frequency(k, mass).ok_or_else(|| {
        Error::Numeric(format!(
            "radial curvature {k:.6e} J/m^2 is not positive (Casimir-Polder softening exceeds optical stiffness)"
        ))
    })
}

/// Numerical settings of the forward model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub quadrature: QuadratureSpec,
    pub matsubara_rel_tol: f64,
    /// Finite-difference step for the radial Casimir-Polder curvature, m.
    pub fd_step: f64,
    /// Chebyshev nodes per Matsubara term in the kappa cache.
    pub cache_nodes: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            matsubara_rel_tol: 1e-8,
            fd_step: 5e-9,
            cache_nodes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub geometry: FiberGeometry,
    pub fiber: MaterialResponse,
    pub laser: LaserSpec,
    pub spheres: Vec<SphereSpec>,
    pub temperature: f64,
    pub numerics: Numerics,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spheres.is_empty() {
            return Err(Error::Config("sensor needs at least one sphere".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.laser.beam_radius > self.geometry.inner_radius {
            return Err(Error::Config(format!(
                "beam radius {} m exceeds fiber inner radius {} m",
                self.laser.beam_radius, self.geometry.inner_radius
            )));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if s.radius > 0.1 * self.geometry.inner_radius {
                return Err(Error::Config(format!(
                    "sphere {i} radius {} m is not small against R_i = {} m",
                    s.radius, self.geometry.inner_radius
                )));
            }
            if self.spheres[..i].iter().any(|o| o.material.name == s.material.name) {
                return Err(Error::Config(format!("sphere material '{}' used twice", s.material.name)));
            }
        }
        self.numerics.quadrature.validate()?;
        let h = self.numerics.fd_step;
        if !(h > 0.0 && h < self.geometry.inner_radius / 4.0) {
            return Err(Error::Domain(format!("finite-difference step {h} m must lie in (0, R_i/4)")));
        }
        if self.numerics.cache_nodes < 2 {
            return Err(Error::Config("cache_nodes must be >= 2".into()));
        }
        Ok(())
    }

    pub fn matsubara_grid(&self) -> Result<MatsubaraGrid> {
        let mut g = MatsubaraGrid::new(self.temperature)?;
        g.rel_tol = self.numerics.matsubara_rel_tol;
        Ok(g)
    }
}

/// The 20-component sensor output: all axial then all radial frequencies (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    pub axial: Vec<f64>,
    pub radial: Vec<f64>,
}

impl FrequencyVector {
    pub fn to_vec(&self) -> Vec<f64> {
        self.axial.iter().chain(&self.radial).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.axial.len() + self.radial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axial.is_empty()
    }
}

/// Per-sphere breakdown of the trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereTrap {
    pub mass: f64,
    pub laser_alpha: f64,
    pub axial_curvature: f64,
    pub optical_radial_curvature: f64,
    pub cp_radial_curvature: f64,
}

impl SphereTrap {
    pub fn omega_z(&self) -> Option<f64> {
        harmonic_frequency(self.axial_curvature, self.mass)
    }

    pub fn omega_r(&self) -> Option<f64> {
        harmonic_frequency(self.optical_radial_curvature + self.cp_radial_curvature, self.mass)
    }

    /// Radial frequency without the Casimir-Polder term.
    pub fn omega_r_em_only(&self) -> Option<f64> {
        harmonic_frequency(self.optical_radial_curvature, self.mass)
    }
}

/// Precomputed data for one Matsubara frequency.
#[derive(Debug, Clone)]
struct MatsubaraTerm {
    xi: f64,
    eps_fiber: f64,
    eps_spheres: Vec<f64>,
    species_alpha: Vec<f64>,
    rule: GreenRule,
    /// `K(0, kappa)` and `K(h, kappa) - K(0, kappa)` over the cached kappa range
    k_axis: Chebyshev,
    k_step: Chebyshev,
}

/// The forward model with permittivities and Green-trace integrals cached.
///
/// The fiber integral `K(r_A, kappa)` depends on the gas only through
/// `kappa = sqrt(eps_M) xi / c`; for each Matsubara term it is tabulated as a
/// Chebyshev interpolant over the `kappa` range spanned by mixtures up to
/// `max_pressure`. Build once, then share read-only.
#[derive(Debug, Clone)]
pub struct SensorModel {
    config: SensorConfig,
    species: SpeciesDb,
    eps_laser_spheres: Vec<f64>,
    species_alpha_laser: Vec<f64>,
    terms: Vec<MatsubaraTerm>,
    max_pressure: f64,
}

impl SensorModel {
    pub fn build(config: SensorConfig, species: SpeciesDb, max_pressure: f64) -> Result<Self> {
        config.validate()?;
        if !(max_pressure >= 0.0 && max_pressure.is_finite()) {
            return Err(Error::Config(format!("max_pressure must be >= 0, got {max_pressure}")));
        }
        let t = config.temperature;
        let grid = config.matsubara_grid()?;
        let omega_bar = config.laser.angular_frequency();
        let eps_laser_spheres = config
            .spheres
            .iter()
            .map(|s| s.material.permittivity(omega_bar))
            .collect::<Result<Vec<_>>>()?;
        let species_alpha_laser = species.iter().map(|s| s.alpha(omega_bar)).collect::<Result<Vec<_>>>()?;

        // widest kappa span: every pascal in the most polarizable species
        let max_alpha = species.iter().map(|s| s.static_alpha()).fold(0.0, f64::max);
        let alpha_cap = max_pressure * max_alpha / (crate::constants::BOLTZMANN * t);
        let eps_cap = permittivity_from_alpha(alpha_cap)?;
        let kappa_stretch = eps_cap.sqrt() * (1.0 + 1e-9);

        let h = config.numerics.fd_step;
        let gap = config.geometry.inner_radius - h;
        let quad = config.numerics.quadrature;
        let nodes = config.numerics.cache_nodes;

        let mut model = Self {
            species,
            eps_laser_spheres,
            species_alpha_laser,
            terms: Vec::new(),
            max_pressure,
            config,
        };
        let n_spheres = model.config.spheres.len();
        let mut sums = vec![(0.0f64, 0.0f64); n_spheres];
        let mut quiet = 0usize;
        let vacuum = vec![0.0; model.species.len()];
        for n in 1..=crate::casimir::MATSUBARA_HARD_LIMIT {
            let xi = grid.xi(n);
            let kappa0 = xi / SPEED_OF_LIGHT;
            let kappa1 = kappa0 * kappa_stretch;
            let (rule, _) = GreenRule::converged(&model.config.geometry, &quad, gap, kappa0, &[0.0, h])?;
            let pts = Chebyshev::points(kappa0, kappa1, nodes);
            let mut axis = Vec::with_capacity(nodes);
            let mut step = Vec::with_capacity(nodes);
            for &k in &pts {
                let k0 = rule.trace_integral(0.0, k);
                let kh = rule.trace_integral(h, k);
                axis.push(k0);
                step.push(kh - k0);
            }
            let term = MatsubaraTerm {
                xi,
                eps_fiber: model.config.fiber.permittivity(xi)?,
                eps_spheres: model
                    .config
                    .spheres
                    .iter()
                    .map(|s| s.material.permittivity(xi))
                    .collect::<Result<Vec<_>>>()?,
                species_alpha: model.species.iter().map(|s| s.alpha(xi)).collect::<Result<Vec<_>>>()?,
                rule,
                k_axis: Chebyshev::from_values(kappa0, kappa1, &axis),
                k_step: Chebyshev::from_values(kappa0, kappa1, &step),
            };
            // vacuum contributions decide the truncation
            let contrib = model.term_contributions(&term, &vacuum)?;
            model.terms.push(term);
            let mut all_small = true;
            for (s, (u0, du)) in sums.iter_mut().zip(contrib) {
                s.0 += u0;
                s.1 += du;
                if !(u0.abs() < grid.rel_tol * s.0.abs() || s.0 == 0.0) || !(du.abs() < grid.rel_tol * s.1.abs() || s.1 == 0.0) {
                    all_small = false;
                }
            }
            quiet = if all_small { quiet + 1 } else { 0 };
            if quiet >= grid.consecutive {
                log::debug!("sensor model: Matsubara cut-off at n = {n}");
                return Ok(model);
            }
        }
        Err(Error::Accuracy("Matsubara sum did not converge while building the sensor model".into()))
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn species(&self) -> &SpeciesDb {
        &self.species
    }

    pub fn matsubara_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn max_pressure(&self) -> f64 {
        self.max_pressure
    }

    /// Per-sphere `(U_CP(0), U_CP(h) - U_CP(0))` contributions of one term.
    fn term_contributions(&self, term: &MatsubaraTerm, pressures: &[f64]) -> Result<Vec<(f64, f64)>> {
        let t = self.config.temperature;
        let alpha_mix = alpha_mix(&term.species_alpha, pressures, t);
        let eps_m = permittivity_from_alpha(alpha_mix)?;
        let factor = local_field_factor(term.eps_fiber, eps_m);
        let kappa = eps_m.sqrt() * term.xi / SPEED_OF_LIGHT;
        let h = self.config.numerics.fd_step;
        let (k0, dk) = if term.k_axis.contains(kappa) {
            (term.k_axis.eval(kappa), term.k_step.eval(kappa))
        } else {
            let k0 = term.rule.trace_integral(0.0, kappa);
            (k0, term.rule.trace_integral(h, kappa) - k0)
        };
        let pref = cp_prefactor(t) * term.xi.powi(4) * factor;
        self.config
            .spheres
            .iter()
            .zip(&term.eps_spheres)
            .map(|(s, &eps_np)| {
                let a = hard_sphere_alpha(eps_np, eps_m, s.radius)?;
                Ok((pref * a * k0, pref * a * dk))
            })
            .collect()
    }

    fn laser_field_and_alphas(&self, pressures: &[f64]) -> Result<(LaserField, Vec<f64>)> {
        let alpha_mix = alpha_mix(&self.species_alpha_laser, pressures, self.config.temperature);
        let eps_m = permittivity_from_alpha(alpha_mix)?;
        let field = self.config.laser.field(eps_m);
        let alphas = self
            .config
            .spheres
            .iter()
            .zip(&self.eps_laser_spheres)
            .map(|(s, &e)| hard_sphere_alpha(e, eps_m, s.radius))
            .collect::<Result<Vec<_>>>()?;
        Ok((field, alphas))
    }

    /// Cached evaluation for a pressure vector in species-db order (Pa).
    pub fn traps(&self, pressures: &[f64]) -> Result<Vec<SphereTrap>> {
        if pressures.len() != self.species.len() {
            return Err(Error::Config(format!(
                "pressure vector has {} entries, expected {}",
                pressures.len(),
                self.species.len()
            )));
        }
        let (field, alphas) = self.laser_field_and_alphas(pressures)?;
        let h = self.config.numerics.fd_step;
        let mut du = vec![0.0; self.config.spheres.len()];
        for term in &self.terms {
            for (acc, (_, d)) in du.iter_mut().zip(self.term_contributions(term, pressures)?) {
                *acc += d;
            }
        }
        Ok(self
            .config
            .spheres
            .iter()
            .zip(alphas)
            .zip(du)
            .map(|((s, a), d)| SphereTrap {
                mass: s.mass(),
                laser_alpha: a,
                axial_curvature: field.axial_curvature(a),
                optical_radial_curvature: field.radial_curvature(a),
                cp_radial_curvature: 2.0 * d / (h * h),
            })
            .collect())
    }

    /// Full recomputation without any cache: permittivities, adaptive fiber
    /// quadrature and adaptive Matsubara truncation for every sphere.
    pub fn traps_direct(&self, mix: &MixtureState) -> Result<Vec<SphereTrap>> {
        mix.aligned(&self.species)?;
        let omega_bar = self.config.laser.angular_frequency();
        let eps_m = crate::gas::effective_permittivity(mix, &self.species, omega_bar)?;
        let field = self.config.laser.field(eps_m);
        let grid = self.config.matsubara_grid()?;
        let setup = CpSetup {
            geometry: &self.config.geometry,
            fiber: &self.config.fiber,
            species: &self.species,
            grid: &grid,
            quad: &self.config.numerics.quadrature,
        };
        self.config
            .spheres
            .iter()
            .map(|s| {
                let a = hard_sphere_alpha(s.material.permittivity(omega_bar)?, eps_m, s.radius)?;
                Ok(SphereTrap {
                    mass: s.mass(),
                    laser_alpha: a,
                    axial_curvature: field.axial_curvature(a),
                    optical_radial_curvature: field.radial_curvature(a),
                    cp_radial_curvature: setup.radial_curvature(s, mix, self.config.numerics.fd_step)?,
                })
            })
            .collect()
    }

    pub fn frequencies(&self, traps: &[SphereTrap], context: &str) -> Result<FrequencyVector> {
        let mut axial = Vec::with_capacity(traps.len());
        let mut radial = Vec::with_capacity(traps.len());
        for (i, t) in traps.iter().enumerate() {
            let unstable = |curv: f64, what: &str| Error::Unstable {
                sphere: i,
                material: self.config.spheres[i].material.name.clone(),
                curvature: curv,
                detail: format!("({what}; mixture {context})"),
            };
            axial.push(t.omega_z().ok_or_else(|| unstable(t.axial_curvature, "axial"))?);
            radial.push(
                t.omega_r()
                    .ok_or_else(|| unstable(t.optical_radial_curvature + t.cp_radial_curvature, "radial"))?,
            );
        }
        Ok(FrequencyVector { axial, radial })
    }

    /// The 20 trapping frequencies for a pressure vector (species-db order, Pa).
    pub fn response(&self, pressures: &[f64]) -> Result<FrequencyVector> {
        let traps = self.traps(pressures)?;
        self.frequencies(&traps, &format!("{pressures:?} Pa"))
    }

    pub fn response_direct(&self, mix: &MixtureState) -> Result<FrequencyVector> {
        let traps = self.traps_direct(mix)?;
        self.frequencies(&traps, &format!("{:?}", mix.iter().collect::<Vec<_>>()))
    }
}

fn alpha_mix(species_alpha: &[f64], pressures: &[f64], temperature: f64) -> f64 {
    species_alpha.iter().zip(pressures).map(|(a, p)| a * p).sum::<f64>()
        / (crate::constants::BOLTZMANN * temperature)
}

/// `sensor_response(mix, model)`: the 20 trapping frequencies of a mixture.
pub fn sensor_response(mix: &MixtureState, model: &SensorModel) -> Result<FrequencyVector> {
    if (mix.temperature() - model.config.temperature).abs() > 1e-12 * model.config.temperature {
        return Err(Error::Config(format!(
            "mixture temperature {} K differs from sensor temperature {} K",
            mix.temperature(),
            model.config.temperature
        )));
    }
    model.response(&mix.aligned(&model.species)?)
}
