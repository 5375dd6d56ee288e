//! Planar, unit-memory analysis through the hull's interior angle.
//!
//! For d = 2 and k = 1 the interior angle θ of `Conv{0, X_{n−1}, X_n}` at
//! `X_n` asymptotically follows the recursion `θ' = |(2π − θ)U − π|`, whose
//! invariant law has the linear density `2(2π − t)/(3π²)` on `[0, π]`.
//! Averaging the one-step radial drift `2 sin θ / (6π − 3θ)` over that law
//! gives the speed `8/(9π²)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::rng::{CounterRng, Domain};
use crate::stats::{batch_means_stderr, compensated_sum, ks_one_sample, KsResult};

/// Limiting speed of the planar unit-memory walk with ball increments.
pub const SPEED_2_1: f64 = 8.0 / (9.0 * PI * PI);

/// Limiting speed of the planar unit-memory walk with unit-sphere increments.
pub const SPHERE_SPEED_2_1: f64 = 4.0 / (3.0 * PI * PI);

pub const DEFAULT_BURNIN: usize = 1000;

/// An interior angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(value: f64) -> Result<Angle> {
        if (0.0..=PI).contains(&value) {
            Ok(Angle(value))
        } else {
            Err(Error::InvalidInput(format!("angle {value} outside [0, π]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[inline]
fn t_raw(theta: f64, u: f64) -> f64 {
    ((TAU - theta) * u - PI).abs()
}

/// The idealised angle update `|(2π − θ)u − π|`.
pub fn t_map(theta: Angle, u: f64) -> Result<Angle> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("u = {u} outside [0, 1]")));
    }
    // |(2π−θ)u − π| ≤ π for θ ∈ [0,π], u ∈ [0,1]; min guards the last ulp.
    Ok(Angle(t_raw(theta.0, u).min(PI)))
}

/// Density and CDF of the invariant angle law. Outside `[0, π]` the density
/// is 0 and the CDF is clamped.
pub fn stationary_law(t: f64) -> (f64, f64) {
    if t < 0.0 {
        (0.0, 0.0)
    } else if t > PI {
        (0.0, 1.0)
    } else {
        let pi2 = PI * PI;
        (2.0 / (3.0 * pi2) * (TAU - t), t * (4.0 * PI - t) / (3.0 * pi2))
    }
}

pub fn stationary_cdf(t: f64) -> f64 {
    stationary_law(t).1
}

/// Expected radial increment given the interior angle (ball increments).
pub fn local_drift(theta: Angle) -> f64 {
    let t = theta.0;
    2.0 * t.sin() / (6.0 * PI - 3.0 * t)
}

/// Expected radial increment given the interior angle (unit-sphere increments).
pub fn local_drift_sphere(theta: Angle) -> f64 {
    let t = theta.0;
    t.sin() / (TAU - t)
}

/// CDF of `T(θ, U)` when θ has density `pdf`, computed by quadrature.
pub fn pushforward_cdf(t: f64, pdf: impl Fn(f64) -> f64) -> f64 {
    let t = t.clamp(0.0, PI);
    let (a, _) = integrate(|y| pdf(y) / (TAU - y), 0.0, PI - t, 1e-14);
    let (b, _) = integrate(|y| (PI + t - y) * pdf(y) / (TAU - y), PI - t, PI, 1e-14);
    2.0 * t * a + b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedMethod {
    ClosedForm,
    Quadrature,
    ChainMc { n: usize, seed: u64 },
}

/// A speed value with its uncertainty (zero for deterministic methods).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedValue {
    pub value: f64,
    pub stderr: f64,
}

/// The limiting speed for d = 2, k = 1, by the requested route.
pub fn speed_2_1(method: SpeedMethod) -> Result<SpeedValue> {
    match method {
        SpeedMethod::ClosedForm => Ok(SpeedValue {
            value: SPEED_2_1,
            stderr: 0.0,
        }),
        SpeedMethod::Quadrature => {
            let (v, err) = integrate(
                |t| local_drift(Angle(t)) * stationary_law(t).0,
                0.0,
                PI,
                1e-12,
            );
            Ok(SpeedValue { value: v, stderr: err })
        }
        SpeedMethod::ChainMc { n, seed } => {
            if n < 1000 {
                return Err(Error::InsufficientSamples { needed: 1000, got: n });
            }
            let sample = simulate_chain(n, seed, Angle(PI / 2.0), DEFAULT_BURNIN)?;
            let drifts: Vec<f64> = sample.sample.samples.iter().map(|&t| local_drift(Angle(t))).collect();
            Ok(SpeedValue {
                value: compensated_sum(drifts.iter().copied()) / drifts.len() as f64,
                stderr: batch_means_stderr(&drifts, 100),
            })
        }
    }
}

/// Post-burn-in draws from the idealised angle chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub samples: Vec<f64>,
    pub n_burnin: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub sample: ChainSample,
    /// One-sample KS against the invariant CDF.
    pub ks: KsResult,
}

/// Iterates the angle map with i.i.d. uniforms, keeping `n` samples after burn-in.
pub fn simulate_chain(n: usize, seed: u64, init: Angle, burnin: usize) -> Result<ChainReport> {
    if n < 1 {
        return Err(Error::InsufficientSamples { needed: 1, got: n });
    }
    let mut rng = CounterRng::seeded(seed, 0, Domain::Chain, 0);
    let mut theta = init.0;
    for _ in 0..burnin {
        theta = t_raw(theta, rng.gen::<f64>()).min(PI);
    }
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            theta = t_raw(theta, rng.gen::<f64>()).min(PI);
            theta
        })
        .collect();
    let ks = ks_one_sample(&samples, stationary_cdf);
    Ok(ChainReport {
        sample: ChainSample {
            samples,
            n_burnin: burnin,
            seed,
        },
        ks,
    })
}

/// Sup-norm distance to the invariant density while iterating the density map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityIteration {
    pub grid: usize,
    /// `errors[i]` is the distance after `i` iterations, starting from the uniform density.
    pub errors: Vec<f64>,
}

impl DensityIteration {
    /// Geometric mean of the per-iteration error ratios, over the leading run of
    /// iterations that still shrink the error by at least 10% (the grid's
    /// discretisation floor ends it).
    pub fn mean_ratio(&self) -> Option<f64> {
        let first = *self.errors.first()?;
        let steps = self.errors.windows(2).take_while(|w| w[1] <= 0.9 * w[0]).count();
        (steps > 0 && first > 0.0).then(|| (self.errors[steps] / first).powf(1.0 / steps as f64))
    }
}

/// Pushes a density on `[0, π]` through the angle map on a uniform grid.
///
/// The image density is `g(t) = ∫₀^π w + ∫₀^{π−t} w` with `w(y) = f(y)/(2π − y)`;
/// both integrals end on grid nodes, so one trapezoid cumulative sum suffices.
fn push_density(f: &[f64]) -> Vec<f64> {
    let m = f.len() - 1;
    let h = PI / m as f64;
    let w: Vec<f64> = f.iter().enumerate().map(|(i, v)| v / (TAU - i as f64 * h)).collect();
    let mut cum = vec![0.0; m + 1];
    for i in 1..=m {
        cum[i] = cum[i - 1] + 0.5 * h * (w[i - 1] + w[i]);
    }
    (0..=m).map(|j| cum[m] + cum[m - j]).collect()
}

/// Iterates the density map from the uniform law on a grid of `grid` cells.
pub fn density_iteration(iterations: usize, grid: usize) -> Result<DensityIteration> {
    if grid < 2 {
        return Err(Error::InvalidInput(format!("grid must have at least 2 cells, got {grid}")));
    }
    let nodes: Vec<f64> = (0..=grid).map(|i| PI * i as f64 / grid as f64).collect();
    let target: Vec<f64> = nodes.iter().map(|&t| stationary_law(t).0).collect();
    let distance = |f: &[f64]| f.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut f = vec![1.0 / PI; grid + 1];
    let mut errors = vec![distance(&f)];
    for _ in 0..iterations {
        f = push_density(&f);
        errors.push(distance(&f));
    }
    Ok(DensityIteration { grid, errors })
}
