use std::f64::consts::PI;

use hullwalk_core::angle_chain::stationary_cdf;
use hullwalk_core::rng::{CounterRng, Domain};
use hullwalk_core::stats::{ks_one_sample, ks_two_sample, mean_stderr};
use hullwalk_core::walk::{advance, run};
use hullwalk_core::{admissible_point, Angle, Point, Sampler, Variant, WalkConfig, WalkState};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn interior_angle_of_full_walk_follows_the_stationary_law() {
    let t = run(&WalkConfig::new(2, 1, 100_000).with_seed(21)).unwrap();
    let thetas: Vec<f64> = t.trace.iter().skip(1000).map(|r| r.theta.unwrap()).collect();
    let ks = ks_one_sample(&thetas, stationary_cdf);
    assert!(ks.statistic < 0.02, "KS {}", ks.statistic);
}

#[test]
fn first_step_from_origin_is_centred() {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in 0..20_000 {
        let t = run(&WalkConfig::new(2, 1, 1).with_seed(5).with_replica(r)).unwrap();
        xs.push(t.final_position[0]);
        ys.push(t.final_position[1]);
    }
    for v in [xs, ys] {
        let m = mean_stderr(&v);
        assert!(m.mean.abs() < 4.0 * m.stderr, "{m:?}");
    }
}

#[test]
fn sphere_increments_have_unit_length() {
    for (d, k) in [(2, 1), (3, 2)] {
        let t = run(&WalkConfig::new(d, k, 5000).with_variant(Variant::Sphere).with_seed(8)).unwrap();
        for w in t.trace.windows(2) {
            let len = (&w[1].x - &w[0].x).norm();
            assert!((len - 1.0).abs() < 1e-12, "d={d} len={len}");
        }
    }
}

#[test]
fn homogeneous_projected_increments_are_stationary() {
    let ell = Point::xy(0.6, 0.8);
    let t = run(&WalkConfig::new(2, 1, 200_000).with_variant(Variant::Homogeneous { ell: ell.clone() }).with_seed(4))
        .unwrap();
    let proj: Vec<f64> = t.trace.windows(2).map(|w| (&w[1].x - &w[0].x).dot(&ell)).collect();
    let a = &proj[50_000..100_000];
    let b = &proj[150_000..200_000];
    let ks = ks_two_sample(a, b);
    assert!(ks.p_value > 1e-3, "p = {}", ks.p_value);
}

#[test]
fn every_step_is_admissible_in_three_dimensions() {
    let cfg = WalkConfig::new(3, 2, 3000).with_seed(12);
    let mut state = WalkState::for_config(&cfg);
    for n in 0..cfg.steps {
        let before = state.clone();
        advance(&mut state, &cfg, &mut CounterRng::seeded(12, 0, Domain::Walk, n)).unwrap();
        assert!(
            admissible_point(state.position(), before.position(), before.history(), before.mode()).unwrap(),
            "step {n}"
        );
    }
}

#[test]
fn samplers_agree_on_the_planar_speed() {
    let speeds = |sampler| {
        let runs = hullwalk_core::walk::run_replicas(&WalkConfig::new(2, 2, 20_000).with_sampler(sampler).with_seed(30).with_thin(20_000), 40)
            .unwrap();
        mean_stderr(&runs.iter().map(|r| r.speed()).collect::<Vec<_>>())
    };
    let a = speeds(Sampler::Direct2d);
    let b = speeds(Sampler::Rejection);
    let z = (a.mean - b.mean).abs() / a.stderr.hypot(b.stderr);
    assert!(z < 4.0, "{a:?} vs {b:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn angle_map_is_a_contraction(x in 0.0..=PI, y in 0.0..=PI, u in 0.0f64..=1.0) {
        let tx = hullwalk_core::angle_chain::t_map(Angle::new(x).unwrap(), u).unwrap().value();
        let ty = hullwalk_core::angle_chain::t_map(Angle::new(y).unwrap(), u).unwrap().value();
        prop_assert!((tx - ty).abs() <= (x - y).abs() + 1e-15);
        prop_assert!((0.0..=PI).contains(&tx));
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), replica in 0u64..1000) {
        let cfg = WalkConfig::new(2, 1, 200).with_seed(seed).with_replica(replica);
        prop_assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }
}

#[test]
fn angle_map_contraction_on_many_triples() {
    let mut rng = CounterRng::seeded(77, 0, Domain::Aux, 0);
    for _ in 0..100_000 {
        let (x, y, u) = (rng.gen_range(0.0..=PI), rng.gen_range(0.0..=PI), rng.gen::<f64>());
        let tx = hullwalk_core::angle_chain::t_map(Angle::new(x).unwrap(), u).unwrap().value();
        let ty = hullwalk_core::angle_chain::t_map(Angle::new(y).unwrap(), u).unwrap().value();
        assert!((tx - ty).abs() <= (x - y).abs() + 1e-15);
    }
}
