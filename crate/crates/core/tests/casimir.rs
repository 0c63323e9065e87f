use std::f64::consts::PI;

use cpsense::casimir::{
    matsubara_xi, reduced_green_trace, CpSetup, FiberGeometry, MatsubaraGrid, QuadratureSpec, SphereSpec,
};
use cpsense::constants::SPEED_OF_LIGHT;
use cpsense::gas::{MixtureState, SpeciesDb};
use cpsense::materials::{MaterialDb, MaterialResponse, ResponseModel, TabulatedResponse};

const RI: f64 = 500e-9;
const RO: f64 = 1000e-9;

fn geom() -> FiberGeometry {
    FiberGeometry::new(RI, RO).unwrap()
}

/// Independent kernel: 3F^2 - 2FG + G^2 written out term by term.
fn kernel(kappa: f64, rho: f64) -> f64 {
    let x = 1.0 / (kappa * rho);
    let f = x + x * x + x * x * x;
    let g = x + 3.0 * x * x + 3.0 * x * x * x;
    (kappa / (4.0 * PI)).powi(2) * (-2.0 * kappa * rho).exp() * (3.0 * f * f - 2.0 * f * g + g * g)
}

/// Midpoint in r, periodic trapezoid in phi, midpoint in s with z = L s/(1-s).
fn brute_force_k(r_a: f64, kappa: f64) -> f64 {
    let (nr, nphi, nz) = (300, 64, 4000);
    let l = 500e-9;
    let dr = (RO - RI) / nr as f64;
    let dphi = 2.0 * PI / nphi as f64;
    let ds = 1.0 / nz as f64;
    let mut total = 0.0;
    for i in 0..nr {
        let r = RI + (i as f64 + 0.5) * dr;
        let phis = if r_a == 0.0 { 1 } else { nphi };
        for j in 0..phis {
            let planar = r_a * r_a + r * r - 2.0 * r_a * r * (j as f64 * dphi).cos();
            let wphi = if r_a == 0.0 { 2.0 * PI } else { dphi };
            let mut line = 0.0;
            for k in 0..nz {
                let s = (k as f64 + 0.5) * ds;
                let z = l * s / (1.0 - s);
                let dz = l / ((1.0 - s) * (1.0 - s));
                line += kernel(kappa, (planar + z * z).sqrt()) * dz * ds;
            }
            total += 2.0 * line * wphi * r * dr;
        }
    }
    total
}

#[test]
fn green_trace_matches_dense_grid_and_grows_off_axis() {
    let xi = matsubara_xi(300.0, 1);
    let kappa = xi / SPEED_OF_LIGHT;
    let q = QuadratureSpec::default();
    // eps_F = 2, eps_M = 1: chi / (1 + chi/3) = 3/4
    let factor = 0.75;
    let mut j = Vec::new();
    for r_a in [0.0, 250e-9] {
        let got = reduced_green_trace(r_a, xi, 2.0, 1.0, &geom(), &q).unwrap();
        let oracle = factor * brute_force_k(r_a, kappa);
        assert!((got - oracle).abs() < 1e-3 * oracle, "r_A {r_a:e}: {got:e} vs {oracle:e}");
        j.push(got);
    }
    assert!(j[0] > 0.0 && j[0] < j[1], "{j:?}");
}

#[test]
fn green_trace_stable_under_node_doubling() {
    let q = QuadratureSpec::default();
    for n in [1, 4, 20] {
        let xi = matsubara_xi(300.0, n);
        for r_a in [0.0, 200e-9, 400e-9] {
            let a = reduced_green_trace(r_a, xi, 3.0, 1.0, &geom(), &q).unwrap();
            let b = reduced_green_trace(r_a, xi, 3.0, 1.0, &geom(), &q.refined(1)).unwrap();
            assert!((a - b).abs() < 1e-3 * b, "n {n} r {r_a:e}: {a:e} vs {b:e}");
        }
    }
}

#[test]
fn green_trace_non_decreasing_towards_wall() {
    let q = QuadratureSpec::default();
    let xi = matsubara_xi(300.0, 2);
    let mut prev = 0.0;
    for k in 0..=9 {
        let r_a = 0.1 * k as f64 * RI;
        let j = reduced_green_trace(r_a, xi, 3.0, 1.0, &geom(), &q).unwrap();
        assert!(j >= prev, "r_A {r_a:e}: {j:e} < {prev:e}");
        prev = j;
    }
}

struct Fixture {
    materials: MaterialDb,
    species: SpeciesDb,
    grid: MatsubaraGrid,
    quad: QuadratureSpec,
    geom: FiberGeometry,
}

impl Fixture {
    fn new() -> Self {
        Self {
            materials: MaterialDb::builtin(),
            species: SpeciesDb::builtin(),
            grid: MatsubaraGrid::new(300.0).unwrap(),
            quad: QuadratureSpec::default(),
            geom: geom(),
        }
    }

    fn setup<'a>(&'a self, fiber: &'a MaterialResponse) -> CpSetup<'a> {
        CpSetup {
            geometry: &self.geom,
            fiber,
            species: &self.species,
            grid: &self.grid,
            quad: &self.quad,
        }
    }

    fn sphere(&self, name: &str) -> SphereSpec {
        SphereSpec::new(self.materials.get(name).unwrap().clone(), 10e-9).unwrap()
    }
}

#[test]
fn silica_potential_attractive_and_deepening_off_axis() {
    let fx = Fixture::new();
    let fiber = fx.materials.get("sio2").unwrap();
    let setup = fx.setup(fiber);
    let vac = MixtureState::vacuum(300.0).unwrap();
    let u = setup
        .potentials(&[0.0, 100e-9, 200e-9, 300e-9], &fx.sphere("silica"), &vac)
        .unwrap()
        .potentials;
    assert!(u[0] < 0.0);
    for w in u.windows(2) {
        assert!(w[1] < w[0], "{u:?}");
    }
}

#[test]
fn matched_fiber_gives_zero_potential() {
    let fx = Fixture::new();
    // Im eps = 0 everywhere: eps_F = 1 = eps_M in vacuum
    let table = TabulatedResponse::new(vec![1e12, 1e18], vec![0.0, 0.0]).unwrap();
    let fiber = MaterialResponse::new("matched", ResponseModel::Tabulated(table), 1000.0).unwrap();
    let setup = fx.setup(&fiber);
    let vac = MixtureState::vacuum(300.0).unwrap();
    let sphere = fx.sphere("gold");
    assert_eq!(setup.potential(200e-9, &sphere, &vac).unwrap(), 0.0);
    assert_eq!(setup.radial_curvature(&sphere, &vac, 5e-9).unwrap(), 0.0);
}

#[test]
fn curvature_step_halving_and_five_point_agree() {
    let fx = Fixture::new();
    let fiber = fx.materials.get("sio2").unwrap();
    let setup = fx.setup(fiber);
    let vac = MixtureState::vacuum(300.0).unwrap();
    let sphere = fx.sphere("silica");
    let k_h = setup.radial_curvature(&sphere, &vac, 5e-9).unwrap();
    let k_h2 = setup.radial_curvature(&sphere, &vac, 2.5e-9).unwrap();
    let k5 = setup.radial_curvature_five_point(&sphere, &vac, 5e-9).unwrap();
    assert!(k_h < 0.0);
    assert!((k_h - k_h2).abs() < 0.01 * k_h2.abs(), "{k_h:e} vs {k_h2:e}");
    assert!((k_h - k5).abs() < 0.01 * k5.abs(), "{k_h:e} vs {k5:e}");
    assert!(setup.radial_curvature(&sphere, &vac, RI / 4.0).is_err());
}

#[test]
fn gas_screens_the_potential_for_every_sphere() {
    let fx = Fixture::new();
    let fiber = fx.materials.get("sio2").unwrap();
    let setup = fx.setup(fiber);
    let vac = MixtureState::vacuum(300.0).unwrap();
    let gas = MixtureState::new([("CO2", 1e4), ("N2", 1e4)], 300.0).unwrap();
    for m in fx.materials.iter().skip(1) {
        let sphere = SphereSpec::new(m.clone(), 10e-9).unwrap();
        let u0 = setup.potential(0.0, &sphere, &vac).unwrap();
        let u1 = setup.potential(0.0, &sphere, &gas).unwrap();
        assert!(u0 < 0.0 && u1.abs() < u0.abs(), "{}: {u0:e} -> {u1:e}", m.name);
    }
}
