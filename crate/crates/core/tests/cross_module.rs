use cylscat::channels::assemble_pair;
use cylscat::classical_flow::{scattering_map, BoundaryPoint, FlowOptions};
use cylscat::resolvent1d::{weighted_resolvent_norm, WeightedResolventProblem};
use cylscat::spectral_stats::{eigenphases, fixed_point_scan};
use cylscat::{End, ModelSpec, PotentialSpec, Profile};

fn bulge(h: f64) -> ModelSpec {
    ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), h).unwrap()
}

#[test]
fn bulge_resolvent_grows_like_one_over_h() {
    let prob = WeightedResolventProblem::new(bulge(0.1));
    let ratio = weighted_resolvent_norm(&prob, 0.5, 0.025).unwrap() / weighted_resolvent_norm(&prob, 0.5, 0.05).unwrap();
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn narrow_spectral_margin_keeps_the_scaling() {
    let mut prob = WeightedResolventProblem::new(bulge(0.1));
    prob.epsilon = 0.05;
    let tau = 1.0 - prob.epsilon;
    let ratio = weighted_resolvent_norm(&prob, tau, 0.025).unwrap() / weighted_resolvent_norm(&prob, tau, 0.05).unwrap();
    assert!((1.3..=2.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn scanned_fixed_points_return_under_iteration() {
    let m = bulge(0.1);
    let opts = FlowOptions::default();
    let found = fixed_point_scan(&m, 2, 0.6, 200).unwrap();
    assert!(!found.is_empty());
    for fp in found.iter().take(6) {
        let start = BoundaryPoint::new(End::Left, 0.7, fp.eta);
        let mut p = start;
        for _ in 0..2 * fp.m {
            p = scattering_map(&p, &m, &opts).unwrap().unwrap().point;
        }
        assert_eq!(p.end, start.end);
        assert!(p.distance(&start) < 1e-6, "m={} eta={} off by {}", fp.m, fp.eta, p.distance(&start));
    }
}

#[test]
fn eigenphase_traces_match_the_dense_matrix() {
    let (_, su) = assemble_pair(&bulge(0.05)).unwrap();
    let set = eigenphases(&su).unwrap();
    let dense = su.to_dense();
    assert!((set.trace_power(1) - dense.trace()).norm() < 1e-9);
    assert!((set.trace_power(2) - (&dense * &dense).trace()).norm() < 1e-9);
    assert_eq!(set.trace_power(0).re as usize, dense.nrows());
}
