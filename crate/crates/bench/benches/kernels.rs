use std::f64::consts::FRAC_PI_2;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hullwalk_core::angle_chain::simulate_chain;
use hullwalk_core::geometry::DEFAULT_TOL;
use hullwalk_core::rng::{CounterRng, Domain};
use hullwalk_core::walk::{advance, run};
use hullwalk_core::{cone_contains, Angle, ConeGenerators, Point, Sampler, Variant, WalkConfig, WalkState};
use rand::Rng;

fn cone(c: &mut Criterion) {
    let mut g = c.benchmark_group("cone_contains");
    for d in [2usize, 3, 4] {
        let mut rng = CounterRng::seeded(1, 0, Domain::Aux, d as u64);
        let point = |rng: &mut CounterRng| Point::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let gens = ConeGenerators::from_directions(Point::zeros(d), (0..d + 1).map(|_| point(&mut rng))).unwrap();
        let dirs: Vec<Point> = (0..256).map(|_| point(&mut rng)).collect();
        g.bench_function(format!("d{d}"), |b| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % dirs.len();
                cone_contains(black_box(&dirs[i]), &gens, DEFAULT_TOL).unwrap()
            })
        });
    }
    g.finish();
}

/// A state after a short warm-up, so the constraint set is fully populated.
fn warm_state(cfg: &WalkConfig) -> WalkState {
    let mut s = WalkState::for_config(cfg);
    for n in 0..200 {
        advance(&mut s, cfg, &mut CounterRng::seeded(cfg.seed, 0, Domain::Walk, n)).unwrap();
    }
    s
}

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    for (name, cfg) in [
        ("direct2d_k1", WalkConfig::new(2, 1, 0).with_sampler(Sampler::Direct2d)),
        ("rejection_k1", WalkConfig::new(2, 1, 0).with_sampler(Sampler::Rejection)),
        ("rejection_d3_k2", WalkConfig::new(3, 2, 0)),
    ] {
        let start = warm_state(&cfg);
        let mut n = 0u64;
        g.bench_function(name, |b| {
            b.iter_batched_ref(
                || start.clone(),
                |s| {
                    n += 1;
                    advance(s, &cfg, &mut CounterRng::seeded(2, 0, Domain::Walk, n)).unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn whole_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(20);
    g.bench_function("walk_2_1_10k", |b| {
        let cfg = WalkConfig::new(2, 1, 10_000).with_thin(10_000);
        b.iter(|| run(black_box(&cfg)).unwrap().final_position)
    });
    g.bench_function("homogeneous_2_1_10k", |b| {
        let cfg = WalkConfig::new(2, 1, 10_000)
            .with_thin(10_000)
            .with_variant(Variant::Homogeneous { ell: Point::xy(1.0, 0.0) });
        b.iter(|| run(black_box(&cfg)).unwrap().final_position)
    });
    g.bench_function("angle_chain_100k", |b| {
        let init = Angle::new(FRAC_PI_2).unwrap();
        b.iter(|| simulate_chain(100_000, black_box(1), init, 0).unwrap().ks.statistic)
    });
    g.finish();
}

criterion_group!(benches, cone, step, whole_runs);
criterion_main!(benches);
