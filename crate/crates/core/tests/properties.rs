use std::f64::consts::TAU;

use cylscat::channels::assemble_pair;
use cylscat::classical_flow::{scattering_map, shift_origin_map, BoundaryPoint, FlowOptions};
use cylscat::geometry::open_channels;
use cylscat::phasespace::coherent_state;
use cylscat::{End, ModelSpec, PotentialSpec, Profile};
use proptest::prelude::*;

fn end() -> impl Strategy<Value = End> {
    prop_oneof![Just(End::Left), Just(End::Right)]
}

fn model(amplitude: f64, h: f64) -> ModelSpec {
    let profile = if amplitude >= 0.0 { Profile::bulge(amplitude, 1.0) } else { Profile::hourglass(amplitude, 1.0) };
    ModelSpec::new(profile.unwrap(), PotentialSpec::none(), h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_is_reversible(amp in -0.3f64..0.5, end in end(), theta in 0.0..TAU, eta in -0.95f64..0.95) {
        let m = model(amp, 0.1);
        let opts = FlowOptions::default();
        let b = BoundaryPoint::new(end, theta, eta);
        if let Some(img) = scattering_map(&b, &m, &opts).unwrap() {
            let back = scattering_map(&img.point.reversed(), &m, &opts).unwrap().expect("reverse orbit exits");
            prop_assert!(back.point.reversed().distance(&b) < 1e-6);
        }
    }

    #[test]
    fn moving_sections_conjugates_the_map(amp in 0.05f64..0.5, c in 0.0f64..2.0, theta in 0.0..TAU, eta in -0.9f64..0.9) {
        let m = model(amp, 0.1);
        let opts = FlowOptions::default();
        let b = BoundaryPoint::new(End::Left, theta, eta);
        let direct = scattering_map(&b, &m.with_origin_offset(c), &opts).unwrap().unwrap().point;
        let conj = shift_origin_map(&b, c, &m, &opts).unwrap().unwrap();
        prop_assert!(direct.distance(&conj) < 1e-8);
    }

    #[test]
    fn flux_normalized_matrix_is_unitary_and_symmetric(amp in -0.3f64..0.5, h in 0.04f64..0.3) {
        let (_, su) = assemble_pair(&model(amp, h)).unwrap();
        prop_assert!(su.max_unitarity_defect() < 1e-9);
        prop_assert!(su.max_asymmetry() < 1e-9);
    }

    #[test]
    fn coherent_states_are_normalized_and_keep_norm(end in end(), theta in 0.0..TAU, eta in -0.3f64..0.3, h in 0.005f64..0.05) {
        let m = model(0.3, h);
        let g = coherent_state(BoundaryPoint::new(end, theta, eta), &open_channels(&m)).unwrap();
        let v = g.to_vector();
        let n: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((n - 1.0).abs() < 1e-12);
        let (_, su) = assemble_pair(&m).unwrap();
        let out: f64 = su.apply(&v).iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((out - 1.0).abs() < 1e-9);
    }
}
