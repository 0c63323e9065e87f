//! Casimir-Polder potential of a nanosphere inside a hollow-core fiber.
//!
//! The scattering Green function is taken to first Born order over the fiber
//! volume with the local-field factor `chi / (1 + chi/3)`, `chi = eps_F - eps_M`.
//! On the imaginary axis the regular bulk Green function is real, and
//!
//! ```text
//! Tr[R(r,s) R(s,r)] = (kappa / 4 pi)^2 e^{-2 kappa rho} (3F^2 - 2FG + G^2)
//! F(x) = x + x^2 + x^3,  G(x) = x + 3x^2 + 3x^3,  x = 1/(kappa rho)
//! ```
//!
//! so `Tr G = -(xi^2/c^2) J` with `J = chi/(1+chi/3) * K` and
//! `K(r_A, kappa) = Int_V d^3s Tr[R R]`. The potential is summed over Matsubara
//! frequencies:
//!
//! ```text
//! U_CP = -(mu_0 k_B T / c^2) sum_{n>=1} xi_n^4 alpha*(i xi_n) J(r_A, xi_n)
//! ```
//!
//! The `n = 0` term carries an explicit `xi^2` prefactor and vanishes
//! identically; it is not evaluated.

use std::f64::consts::PI;

use crate::constants::{BOLTZMANN, HBAR, SPEED_OF_LIGHT, VACUUM_PERMEABILITY, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};
use crate::gas::{effective_permittivity, MixtureState, SpeciesDb};
use crate::materials::MaterialResponse;
use crate::quadrature::{composite_rule, geometric_edges, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberGeometry {
    /// m
    pub inner_radius: f64,
    /// m
    pub outer_radius: f64,
}

impl FiberGeometry {
    pub fn new(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && outer_radius > inner_radius && outer_radius.is_finite()) {
            return Err(Error::Config(format!(
                "fiber radii must satisfy 0 < R_i < R_o, got R_i = {inner_radius}, R_o = {outer_radius}"
            )));
        }
        Ok(Self {
            inner_radius,
            outer_radius,
        })
    }
}

/// A trapped sphere: radius plus material (permittivity and density).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSpec {
    pub radius: f64,
    pub material: MaterialResponse,
}

impl SphereSpec {
    pub fn new(material: MaterialResponse, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius, material })
    }

    /// kg
    pub fn mass(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3) * self.material.mass_density
    }
}

/// Node counts and tolerances for the fiber volume integral.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Trapezoid nodes over the full circle.
    pub angular_nodes: usize,
    /// Gauss-Legendre nodes per axial panel.
    pub axial_nodes: usize,
    /// Axial truncation `Z_max = axial_decay / (2 kappa)`.
    pub axial_decay: f64,
    /// Relative self-consistency demanded between successive node doublings.
    pub rel_tol: f64,
    pub max_doublings: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_nodes: 8,
            angular_nodes: 8,
            axial_nodes: 8,
            axial_decay: 30.0,
            rel_tol: 1e-3,
            max_doublings: 5,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 4 || self.angular_nodes < 4 || self.axial_nodes < 4 {
            return Err(Error::Config("quadrature node counts must all be >= 4".into()));
        }
        if !(self.axial_decay > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Config("axial_decay and rel_tol must be positive".into()));
        }
        Ok(())
    }

    /// Every node count multiplied by `2^level`.
    pub fn refined(&self, level: usize) -> Self {
        let f = 1usize << level;
        Self {
            radial_nodes: self.radial_nodes * f,
            angular_nodes: self.angular_nodes * f,
            axial_nodes: self.axial_nodes * f,
            ..*self
        }
    }
}

/// Matsubara frequencies `xi_n = 2 pi k_B T n / hbar` and the truncation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatsubaraGrid {
    pub temperature: f64,
    /// Fixed cut-off; `None` applies the convergence rule.
    pub n_max: Option<usize>,
    /// Stop once `|term_n| < rel_tol |sum|` ...
    pub rel_tol: f64,
    /// ... for this many consecutive terms.
    pub consecutive: usize,
}

/// Hard ceiling on the adaptive Matsubara sum.
pub const MATSUBARA_HARD_LIMIT: usize = 20_000;

impl MatsubaraGrid {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            temperature,
            n_max: None,
            rel_tol: 1e-8,
            consecutive: 3,
        })
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = Some(n_max);
        self
    }

    pub fn xi(&self, n: usize) -> f64 {
        matsubara_xi(self.temperature, n)
    }

    /// Sum `term(n)` for `n >= 1` under the truncation rule; returns the sum and
    /// the last index included.
    pub fn sum(&self, mut term: impl FnMut(usize, f64) -> Result<f64>) -> Result<(f64, usize)> {
        let mut total = 0.0;
        if let Some(n_max) = self.n_max {
            for n in 1..=n_max {
                total += term(n, self.xi(n))?;
            }
            return Ok((total, n_max));
        }
        let mut small = 0;
        for n in 1..=MATSUBARA_HARD_LIMIT {
            let t = term(n, self.xi(n))?;
            total += t;
            if t.abs() < self.rel_tol * total.abs() || (t == 0.0 && total == 0.0) {
                small += 1;
                if small >= self.consecutive {
                    return Ok((total, n));
                }
            } else {
                small = 0;
            }
        }
        Err(Error::Accuracy(format!(
            "Matsubara sum not converged after {MATSUBARA_HARD_LIMIT} terms"
        )))
    }
}

/// `xi_n = (2 pi k_B T / hbar) n`, rad/s.
pub fn matsubara_xi(temperature: f64, n: usize) -> f64 {
    2.0 * PI * BOLTZMANN * temperature / HBAR * n as f64
}

/// Medium-screened sphere polarizability (SI, C^2 m^2 / J):
/// `4 pi eps0 eps_M a^3 (eps_NP - eps_M) / (eps_NP + 2 eps_M)`.
pub fn hard_sphere_alpha(eps_np: f64, eps_m: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("sphere radius must be positive, got {radius}")));
    }
    let denom = eps_np + 2.0 * eps_m;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Singularity(format!(
            "Clausius-Mossotti denominator eps_NP + 2 eps_M = {denom}"
        )));
    }
    Ok(4.0 * PI * VACUUM_PERMITTIVITY * eps_m * radius.powi(3) * (eps_np - eps_m) / denom)
}

/// `Tr[R . R]` on the imaginary axis for wave number `kappa` and separation `rho`.
#[inline]
pub fn trace_rr_closed_form(kappa: f64, rho: f64) -> f64 {
    let x = 1.0 / (kappa * rho);
    let x2 = x * x;
    let f = x + x2 + x * x2;
    let gmf = 2.0 * (x2 + x * x2);
    // 3F^2 - 2FG + G^2 = 2F^2 + (G - F)^2
    let pref = kappa / (4.0 * PI);
    pref * pref * (-2.0 * kappa * rho).exp() * (2.0 * f * f + gmf * gmf)
}

/// `chi / (1 + chi/3)` with `chi = eps_F - eps_M`.
#[inline]
pub fn local_field_factor(eps_fiber: f64, eps_medium: f64) -> f64 {
    let chi = eps_fiber - eps_medium;
    chi / (1.0 + chi / 3.0)
}

/// A fixed node set for `K(r_A, kappa)` over the fiber volume.
///
/// Radial and axial panels grow geometrically away from the closest wall point,
/// starting at half the wall gap; the angular rule is the periodic trapezoid,
/// folded with the `phi -> -phi` symmetry.
#[derive(Debug, Clone)]
pub struct GreenRule {
    radial: Vec<(f64, f64)>,
    axial: Vec<(f64, f64)>,
    angular: Vec<(f64, f64)>,
}

impl GreenRule {
    /// `gap` is the smallest wall distance the rule must resolve; `kappa_min`
    /// sets the axial extent.
    pub fn new(geom: &FiberGeometry, quad: &QuadratureSpec, gap: f64, kappa_min: f64) -> Self {
        let first = 0.5 * gap;
        let shell = geom.outer_radius - geom.inner_radius;
        let radial_edges: Vec<f64> = geometric_edges(first, shell)
            .into_iter()
            .map(|e| geom.inner_radius + e)
            .collect();
        let radial = composite_rule(&radial_edges, &GaussLegendre::new(quad.radial_nodes));

        let z_max = quad.axial_decay / (2.0 * kappa_min);
        let axial_edges = geometric_edges(first, z_max);
        // integrand is even in z
        let axial = composite_rule(&axial_edges, &GaussLegendre::new(quad.axial_nodes))
            .into_iter()
            .map(|(z, w)| (z, 2.0 * w))
            .collect();

        let n = quad.angular_nodes.max(2);
        let n = n + n % 2;
        let dphi = 2.0 * PI / n as f64;
        let angular = (0..=n / 2)
            .map(|k| {
                let w = if k == 0 || k == n / 2 { dphi } else { 2.0 * dphi };
                ((k as f64 * dphi).cos(), w)
            })
            .collect();
        Self {
            radial,
            axial,
            angular,
        }
    }

    pub fn node_count(&self) -> usize {
        self.radial.len() * self.axial.len() * self.angular.len()
    }

    /// `K(r_A, kappa) = Int_V d^3 s Tr[R R]`, units 1/m.
    pub fn trace_integral(&self, r_a: f64, kappa: f64) -> f64 {
        let mut total = 0.0;
        for &(rs, wr) in &self.radial {
            let mut ring = 0.0;
            if r_a == 0.0 {
                let rs2 = rs * rs;
                for &(z, wz) in &self.axial {
                    ring += wz * trace_rr_closed_form(kappa, (rs2 + z * z).sqrt());
                }
                ring *= 2.0 * PI;
            } else {
                for &(cos_phi, wp) in &self.angular {
                    let planar = r_a * r_a + rs * rs - 2.0 * r_a * rs * cos_phi;
                    let mut line = 0.0;
                    for &(z, wz) in &self.axial {
                        line += wz * trace_rr_closed_form(kappa, (planar + z * z).sqrt());
                    }
                    ring += wp * line;
                }
            }
            total += wr * rs * ring;
        }
        total
    }

    /// Doubles all node counts until every probe offset is self-consistent to
    /// `quad.rel_tol`; returns the finer rule and the level reached.
    pub fn converged(
        geom: &FiberGeometry,
        quad: &QuadratureSpec,
        gap: f64,
        kappa: f64,
        probes: &[f64],
    ) -> Result<(Self, usize)> {
        let mut rule = Self::new(geom, quad, gap, kappa);
        let mut prev: Vec<f64> = probes.iter().map(|&r| rule.trace_integral(r, kappa)).collect();
        for level in 1..=quad.max_doublings {
            let finer = Self::new(geom, &quad.refined(level), gap, kappa);
            let next: Vec<f64> = probes.iter().map(|&r| finer.trace_integral(r, kappa)).collect();
            let ok = prev
                .iter()
                .zip(&next)
                .all(|(a, b)| (a - b).abs() <= quad.rel_tol * b.abs());
            rule = finer;
            if ok {
                return Ok((rule, level));
            }
            prev = next;
        }
        Err(Error::Accuracy(format!(
            "fiber volume quadrature not self-consistent to {} after {} doublings (kappa = {kappa:.4e} 1/m)",
            quad.rel_tol, quad.max_doublings
        )))
    }
}

/// `J(r_A, xi)` in metres: local-field weighted volume integral of `Tr[R R]`
/// at `kappa = sqrt(eps_M) xi / c`, adaptively converged.
pub fn reduced_green_trace(
    r_a: f64,
    xi: f64,
    eps_fiber: f64,
    eps_medium: f64,
    geom: &FiberGeometry,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_offset(r_a, geom)?;
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("reduced Green trace needs xi > 0, got {xi}")));
    }
    quad.validate()?;
    let factor = local_field_factor(eps_fiber, eps_medium);
    if factor == 0.0 {
        return Ok(0.0);
    }
    let kappa = eps_medium.sqrt() * xi / SPEED_OF_LIGHT;
    let gap = geom.inner_radius - r_a;
    let (rule, _) = GreenRule::converged(geom, quad, gap, kappa, &[r_a])?;
    Ok(factor * rule.trace_integral(r_a, kappa))
}

fn check_offset(r_a: f64, geom: &FiberGeometry) -> Result<()> {
    if !(r_a >= 0.0 && r_a < geom.inner_radius) {
        return Err(Error::Domain(format!(
            "radial offset {r_a} m must lie in [0, R_i = {})",
            geom.inner_radius
        )));
    }
    Ok(())
}

/// Prefactor `-mu_0 k_B T / c^2` of the Matsubara sum.
pub fn cp_prefactor(temperature: f64) -> f64 {
    -VACUUM_PERMEABILITY * BOLTZMANN * temperature / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
}

/// Result of a Matsubara-summed evaluation at several radial offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CpSum {
    /// Potential (J) at each requested offset.
    pub potentials: Vec<f64>,
    /// Last Matsubara index included.
    pub n_max: usize,
}

/// Everything the Casimir-Polder evaluation needs besides the sphere and gas.
#[derive(Debug, Clone, Copy)]
pub struct CpSetup<'a> {
    pub geometry: &'a FiberGeometry,
    pub fiber: &'a MaterialResponse,
    pub species: &'a SpeciesDb,
    pub grid: &'a MatsubaraGrid,
    pub quad: &'a QuadratureSpec,
}

impl CpSetup<'_> {
    /// `U_CP` at the given offsets, evaluated with one quadrature rule per
    /// Matsubara term so differences between offsets are consistent.
    pub fn potentials(&self, offsets: &[f64], sphere: &SphereSpec, mix: &MixtureState) -> Result<CpSum> {
        self.quad.validate()?;
        for &r in offsets {
            check_offset(r, self.geometry)?;
        }
        let max_offset = offsets.iter().copied().fold(0.0, f64::max);
        let gap = self.geometry.inner_radius - max_offset;
        let temperature = mix.temperature();
        let mut per_offset = vec![0.0; offsets.len()];
        // Truncation follows the term sequence at the first offset.
        let (_, n_max) = self.grid.sum(|_, xi| {
            let eps_m = effective_permittivity(mix, self.species, xi)?;
            let eps_f = self.fiber.permittivity(xi)?;
            let eps_np = sphere.material.permittivity(xi)?;
            let factor = local_field_factor(eps_f, eps_m);
            if factor == 0.0 {
                return Ok(0.0);
            }
            let alpha = hard_sphere_alpha(eps_np, eps_m, sphere.radius)?;
            let kappa = eps_m.sqrt() * xi / SPEED_OF_LIGHT;
            let (rule, _) = GreenRule::converged(self.geometry, self.quad, gap, kappa, offsets)?;
            let scale = cp_prefactor(temperature) * xi.powi(4) * alpha * factor;
            let mut first = 0.0;
            for (k, &r) in offsets.iter().enumerate() {
                let term = scale * rule.trace_integral(r, kappa);
                per_offset[k] += term;
                if k == 0 {
                    first = term;
                }
            }
            Ok(first)
        })?;
        if per_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Casimir-Polder potential".into()));
        }
        Ok(CpSum {
            potentials: per_offset,
            n_max,
        })
    }

    /// `U_CP(r_A)` in joules.
    pub fn potential(&self, r_a: f64, sphere: &SphereSpec, mix: &MixtureState) -> Result<f64> {
        Ok(self.potentials(&[r_a], sphere, mix)?.potentials[0])
    }

    /// `d^2 U_CP / dr^2` at the axis from `2 [U(h) - U(0)] / h^2` (U is even in r).
    pub fn radial_curvature(&self, sphere: &SphereSpec, mix: &MixtureState, h: f64) -> Result<f64> {
        self.check_step(h)?;
        let s = self.potentials(&[0.0, h], sphere, mix)?;
        Ok(2.0 * (s.potentials[1] - s.potentials[0]) / (h * h))
    }

    /// Five-point stencil `[-2U(2h) + 32U(h) - 30U(0)] / (12 h^2)` using evenness.
    pub fn radial_curvature_five_point(&self, sphere: &SphereSpec, mix: &MixtureState, h: f64) -> Result<f64> {
        self.check_step(2.0 * h)?;
        let s = self.potentials(&[0.0, h, 2.0 * h], sphere, mix)?;
        let [u0, u1, u2] = [s.potentials[0], s.potentials[1], s.potentials[2]];
        Ok((-2.0 * u2 + 32.0 * u1 - 30.0 * u0) / (12.0 * h * h))
    }

    fn check_step(&self, h: f64) -> Result<()> {
        if !(h > 0.0 && h < self.geometry.inner_radius / 4.0) {
            return Err(Error::Domain(format!(
                "finite-difference step {h} m must lie in (0, R_i/4 = {})",
                self.geometry.inner_radius / 4.0
            )));
        }
        Ok(())
    }
}

/// Convenience wrapper: `U_CP(r_A)`.
pub fn cp_potential(r_a: f64, sphere: &SphereSpec, mix: &MixtureState, setup: &CpSetup<'_>) -> Result<f64> {
    setup.potential(r_a, sphere, mix)
}

/// Convenience wrapper: `d^2 U_CP/dr^2 (0)` with step `h`.
pub fn cp_radial_curvature(sphere: &SphereSpec, mix: &MixtureState, setup: &CpSetup<'_>, h: f64) -> Result<f64> {
    setup.radial_curvature(sphere, mix, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matsubara_frequency_values() {
        // 2 pi * 1.380649e-23 * 300 / 1.054571817e-34
        assert_relative_eq!(matsubara_xi(300.0, 1), 2.4679e14, max_relative = 1e-4);
        assert_eq!(matsubara_xi(300.0, 0), 0.0);
        assert_relative_eq!(matsubara_xi(600.0, 3), 2.0 * matsubara_xi(300.0, 3), max_relative = 1e-15);
        assert_relative_eq!(matsubara_xi(300.0, 4), 4.0 * matsubara_xi(300.0, 1), max_relative = 1e-15);
    }

    #[test]
    fn hard_sphere_limits() {
        assert_eq!(hard_sphere_alpha(2.0, 2.0, 1e-8).unwrap(), 0.0);
        let a = 1e-8;
        let big = hard_sphere_alpha(1e15, 1.0, a).unwrap() / (4.0 * PI * VACUUM_PERMITTIVITY);
        assert_relative_eq!(big, 1e-24, max_relative = 1e-12);
        assert!(hard_sphere_alpha(1.5, 2.0, a).unwrap() < 0.0);
        assert!(matches!(hard_sphere_alpha(-2.0, 1.0, a), Err(Error::Singularity(_))));
        assert!(hard_sphere_alpha(2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn trace_rr_at_unit_argument() {
        // F(1) = 3, G(1) = 7: 27 - 42 + 49 = 34
        let kappa = 2.0;
        let rho = 0.5;
        let expected = (kappa / (4.0 * PI)).powi(2) * 34.0 * (-2.0f64).exp();
        assert_relative_eq!(trace_rr_closed_form(kappa, rho), expected, max_relative = 1e-15);
    }

    #[test]
    fn trace_rr_far_field_asymptote() {
        // x -> 0: 3F^2 - 2FG + G^2 -> 2x^2
        let kappa = 1.0;
        for rho in [50.0, 200.0] {
            let x: f64 = 1.0 / rho;
            let lead = 2.0 * x * x * (kappa / (4.0 * PI)).powi(2) * (-2.0 * rho).exp();
            let r = trace_rr_closed_form(kappa, rho) / lead;
            assert!((r - 1.0).abs() < 3.0 * x, "{rho} {r}");
        }
    }

    #[test]
    fn green_trace_vanishes_for_matched_fiber() {
        let g = FiberGeometry::new(500e-9, 1000e-9).unwrap();
        let q = QuadratureSpec::default();
        assert_eq!(reduced_green_trace(0.0, 2.5e14, 1.3, 1.3, &g, &q).unwrap(), 0.0);
    }

    #[test]
    fn green_trace_domain_errors() {
        let g = FiberGeometry::new(500e-9, 1000e-9).unwrap();
        let q = QuadratureSpec::default();
        assert!(matches!(reduced_green_trace(500e-9, 2.5e14, 2.0, 1.0, &g, &q), Err(Error::Domain(_))));
        assert!(matches!(reduced_green_trace(-1e-9, 2.5e14, 2.0, 1.0, &g, &q), Err(Error::Domain(_))));
        assert!(matches!(reduced_green_trace(0.0, 0.0, 2.0, 1.0, &g, &q), Err(Error::Domain(_))));
        let coarse = QuadratureSpec { radial_nodes: 2, ..q };
        assert!(matches!(reduced_green_trace(0.0, 2.5e14, 2.0, 1.0, &g, &coarse), Err(Error::Config(_))));
    }

    #[test]
    fn geometry_validation() {
        assert!(FiberGeometry::new(1e-6, 5e-7).is_err());
        assert!(FiberGeometry::new(0.0, 5e-7).is_err());
    }

    #[test]
    fn matsubara_rule_stops_on_geometric_series() {
        let grid = MatsubaraGrid::new(300.0).unwrap();
        let (s, n) = grid.sum(|n, _| Ok(0.5f64.powi(n as i32))).unwrap();
        assert_relative_eq!(s, 1.0, max_relative = 1e-7);
        // 0.5^n < 1e-8 first holds at n = 27; three in a row ends at 29
        assert_eq!(n, 29);
        let fixed = grid.with_n_max(5);
        assert_eq!(fixed.sum(|_, _| Ok(1.0)).unwrap(), (5.0, 5));
    }
}
