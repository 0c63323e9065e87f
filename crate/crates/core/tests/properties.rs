use cpsense::casimir::{hard_sphere_alpha, trace_rr_closed_form};
use cpsense::dataset::{sample_pressures, SamplingSpec};
use cpsense::gas::{effective_permittivity, MixtureState, SpeciesDb};
use cpsense::materials::{Oscillator, OscillatorModel};
use cpsense::nn::Normalizer;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn oscillators() -> impl Strategy<Value = Vec<Oscillator>> {
    prop::collection::vec((1e-3f64..50.0, 11.0f64..17.0), 1..6).prop_map(|v| {
        v.into_iter()
            .map(|(strength, lg)| Oscillator {
                strength,
                resonance: 10f64.powf(lg),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn permittivity_decays_on_imaginary_axis(terms in oscillators(), a in 0.0f64..1e18, b in 0.0f64..1e18) {
        let m = OscillatorModel::new(terms).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let e_lo = 1.0 + m.response(lo);
        let e_hi = 1.0 + m.response(hi);
        prop_assert!(e_hi >= 1.0);
        prop_assert!(e_hi <= e_lo);
    }

    #[test]
    fn medium_permittivity_grows_with_pressure(
        base in prop::collection::vec(0.0f64..2e3, 10),
        which in 0usize..10,
        extra in 0.0f64..1e4,
        lg_xi in 10.0f64..18.0,
    ) {
        let db = SpeciesDb::builtin();
        let xi = 10f64.powf(lg_xi);
        let before = MixtureState::from_aligned(&db, &base, 300.0).unwrap();
        let mut more = base.clone();
        more[which] += extra;
        let after = MixtureState::from_aligned(&db, &more, 300.0).unwrap();
        let e0 = effective_permittivity(&before, &db, xi).unwrap();
        let e1 = effective_permittivity(&after, &db, xi).unwrap();
        prop_assert!(e0 >= 1.0);
        prop_assert!(e1 >= e0);
    }

    #[test]
    fn simplex_draws_are_non_negative_and_sum_to_cap(
        seed in any::<u64>(),
        k in 2usize..15,
        cap in 1.0f64..1e5,
        frac in prop::option::of(0.0f64..1.0),
    ) {
        let names: Vec<String> = (0..k).map(|i| format!("g{i}")).collect();
        let spec = match frac {
            None => SamplingSpec::set1(names, "g1", cap, seed),
            Some(f) => SamplingSpec::set2(names, "g1", cap, f * cap, seed),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_pressures(&mut rng, &spec).unwrap();
        prop_assert_eq!(p.len(), k);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let total: f64 = p.iter().sum();
        prop_assert!((total - cap).abs() <= 1e-12 * cap);
        if let Some(f) = frac {
            prop_assert!(p[1] <= f * cap);
        }
    }

    #[test]
    fn green_kernel_positive(kappa in 1e3f64..1e9, krho in 1e-3f64..50.0) {
        let v = trace_rr_closed_form(kappa, krho / kappa);
        prop_assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn sphere_polarizability_sign(eps_np in 1.0f64..1e4, eps_m in 1.0f64..2.0) {
        let a = hard_sphere_alpha(eps_np, eps_m, 1e-8).unwrap();
        prop_assert_eq!(a > 0.0, eps_np > eps_m);
        prop_assert_eq!(a < 0.0, eps_np < eps_m);
    }

    #[test]
    fn training_rows_normalise_into_unit_box(vals in prop::collection::vec(-1e6f64..1e6, 12)) {
        let rows = Array2::from_shape_vec((4, 3), vals).unwrap();
        prop_assume!(rows.columns().into_iter().all(|c| c.iter().any(|&v| v != c[0])));
        let n = Normalizer::fit(rows.view()).unwrap();
        let out = n.apply_rows(rows.view());
        prop_assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
