//! Step-by-step simulation of the finite-memory hull-avoiding walk.
//!
//! Given positions `X_0 = 0, X_1, …, X_n`, the next position is uniform on
//! the part of `B(X_n; 1)` (or of the unit sphere around `X_n`) whose
//! segment from `X_n` misses the hull of `{0, X_{max(1,n−k)}, …, X_n}`.
//! In the homogeneous variant the origin is replaced by the ray `−ℓ`.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::distributions::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cone_contains, sector_from_generators, Arc, ConeGenerators, ConstraintMode, DEFAULT_TOL,
};
use crate::io::TraceRecord;
use crate::point::Point;
use crate::rng::{Domain, StreamKey};
use crate::stats::compensated_sum;

/// Maximum proposals per step of the rejection sampler.
pub const PROPOSAL_CAP: u32 = 64;

/// Radial increments are aggregated over blocks of this many steps.
pub const DRIFT_BLOCK: usize = 100;

/// Largest accepted ball-chain radius.
pub const MAX_DELTA: f64 = 0.125 - 1e-6;

/// Law of a single unconstrained increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementLaw {
    Ball,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Ball,
    Sphere,
    /// Ball increments, origin replaced by the ray `−ell`.
    Homogeneous { ell: Point },
}

impl Variant {
    pub fn increment_law(&self) -> IncrementLaw {
        match self {
            Variant::Sphere => IncrementLaw::Sphere,
            _ => IncrementLaw::Ball,
        }
    }

    pub fn mode(&self) -> ConstraintMode {
        match self {
            Variant::Homogeneous { ell } => ConstraintMode::Homogeneous { ell: ell.clone() },
            _ => ConstraintMode::Origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Rejection,
    Direct2d,
}

impl Sampler {
    pub fn default_for(d: usize) -> Sampler {
        if d == 2 {
            Sampler::Direct2d
        } else {
            Sampler::Rejection
        }
    }
}

/// All parameters of a single simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub d: usize,
    pub k: usize,
    pub steps: u64,
    pub variant: Variant,
    pub sampler: Sampler,
    pub delta: f64,
    pub seed: u64,
    pub replica: u64,
    pub trace_thin: u64,
}

impl WalkConfig {
    pub fn new(d: usize, k: usize, steps: u64) -> Self {
        WalkConfig {
            d,
            k,
            steps,
            variant: Variant::Ball,
            sampler: Sampler::default_for(d),
            delta: 0.1,
            seed: 0,
            replica: 0,
            trace_thin: 1,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }

    pub fn with_thin(mut self, thin: u64) -> Self {
        self.trace_thin = thin;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn mode(&self) -> ConstraintMode {
        self.variant.mode()
    }

    pub fn increment_law(&self) -> IncrementLaw {
        self.variant.increment_law()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.d < 2 {
            return fail(format!("d must be ≥ 2, got {}", self.d));
        }
        if self.k + 1 < self.d {
            return fail(format!(
                "k must be ≥ d−1 (got d={}, k={}); shorter memory never interacts with the hull",
                self.d, self.k
            ));
        }
        if self.steps < 1 {
            return fail("steps must be ≥ 1".into());
        }
        if !(self.delta > 0.0 && self.delta <= MAX_DELTA) {
            return fail(format!("delta must lie in (0, 1/8), got {}", self.delta));
        }
        if self.trace_thin < 1 {
            return fail("trace_thin must be ≥ 1".into());
        }
        if self.sampler == Sampler::Direct2d && self.d != 2 {
            return fail(format!("sampler direct2d requires d = 2, got d = {}", self.d));
        }
        if let Variant::Homogeneous { ell } = &self.variant {
            if ell.dim() != self.d {
                return fail(format!("ell has dimension {}, expected {}", ell.dim(), self.d));
            }
            if !ell.is_finite() || (ell.norm() - 1.0).abs() > 1e-9 {
                return fail(format!("ell must be a unit vector, has norm {}", ell.norm()));
            }
        }
        Ok(())
    }

    /// Same run parameters, ignoring which replica this is.
    pub fn same_experiment(&self, other: &WalkConfig) -> bool {
        let mut a = self.clone();
        a.replica = other.replica;
        &a == other
    }
}

/// Current position plus the sliding window of recent positions.
#[derive(Debug, Clone)]
pub struct WalkState {
    window: VecDeque<Point>,
    n: u64,
    k: usize,
    mode: ConstraintMode,
}

impl WalkState {
    /// The state at time 0: `X_0 = 0`.
    pub fn new(d: usize, k: usize, mode: ConstraintMode) -> Self {
        let mut window = VecDeque::with_capacity(k + 2);
        window.push_back(Point::zeros(d));
        WalkState { window, n: 0, k, mode }
    }

    /// A state at time `n` whose last `window.len()` positions are given (oldest first).
    pub fn from_window(window: Vec<Point>, n: u64, k: usize, mode: ConstraintMode) -> Result<Self> {
        if window.is_empty() || window.len() > k + 1 || (window.len() as u64) > n + 1 {
            return Err(Error::InvalidInput(format!(
                "window of {} points does not fit k={k}, n={n}",
                window.len()
            )));
        }
        let d = window[0].dim();
        if window.iter().any(|p| p.dim() != d || !p.is_finite()) {
            return Err(Error::InvalidInput("window points must share a finite dimension".into()));
        }
        Ok(WalkState {
            window: window.into(),
            n,
            k,
            mode,
        })
    }

    pub fn for_config(config: &WalkConfig) -> Self {
        WalkState::new(config.d, config.k, config.mode())
    }

    pub fn position(&self) -> &Point {
        self.window.back().expect("window is never empty")
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.position().dim()
    }

    pub fn mode(&self) -> &ConstraintMode {
        &self.mode
    }

    /// True when the origin belongs to the avoided hull.
    pub fn origin_included(&self) -> bool {
        matches!(self.mode, ConstraintMode::Origin)
    }

    /// Positions `X_{n−len+1}, …, X_n`, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = &Point> + '_ {
        self.window.iter()
    }

    /// The history `{X_j : max(1, n−k) ≤ j ≤ n−1}` constraining the next step.
    pub fn history(&self) -> impl Iterator<Item = &Point> + '_ {
        let len = self.window.len();
        let first = self.n + 1 - len as u64;
        let skip = usize::from(first == 0);
        self.window.iter().take(len - 1).skip(skip)
    }

    /// Blocked cone at the current position.
    pub fn generators(&self) -> Result<ConeGenerators> {
        ConeGenerators::for_state(self.position(), self.history(), &self.mode)
    }

    /// Admissible arc at the current position (d = 2 only).
    pub fn sector(&self) -> Result<Arc> {
        sector_from_generators(&self.generators()?)
    }

    pub fn push(&mut self, y: Point) {
        self.window.push_back(y);
        while self.window.len() > self.k + 1 {
            self.window.pop_front();
        }
        self.n += 1;
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub proposals_used: u32,
    /// `(X_{n+1} − X_n) · X̂_n`, zero when `X_n = 0`.
    pub radial_increment: f64,
}

/// One unconstrained increment: uniform in the unit ball or on the unit sphere.
pub fn sample_increment<R: Rng + ?Sized>(d: usize, law: IncrementLaw, rng: &mut R) -> Point {
    match (law, d) {
        (IncrementLaw::Ball, 2 | 3) => loop {
            let mut p = Point::zeros(d);
            for i in 0..d {
                p[i] = 2.0 * rng.gen::<f64>() - 1.0;
            }
            let r2 = p.dot(&p);
            if r2 < 1.0 && r2 > 0.0 {
                return p;
            }
        },
        (IncrementLaw::Sphere, 2) => {
            let a = TAU * rng.gen::<f64>();
            Point::xy(a.cos(), a.sin())
        }
        _ => {
            let dir = loop {
                let mut p = Point::zeros(d);
                for i in 0..d {
                    p[i] = rng.sample(StandardNormal);
                }
                let n = p.norm();
                if n > 1e-12 {
                    break p.scale(1.0 / n);
                }
            };
            match law {
                IncrementLaw::Sphere => dir,
                IncrementLaw::Ball => {
                    let u: f64 = rng.sample(Open01);
                    dir.scale(u.powf(1.0 / d as f64))
                }
            }
        }
    }
}

/// Rejection sampler: uniform proposals filtered through cone membership.
///
/// Returns the accepted point and the number of proposals it took.
pub fn propose_rejection<R: Rng + ?Sized>(
    x: &Point,
    gens: &ConeGenerators,
    law: IncrementLaw,
    rng: &mut R,
) -> Result<(Point, u32)> {
    for attempt in 1..=PROPOSAL_CAP {
        let inc = sample_increment(x.dim(), law, rng);
        if gens.is_empty() || !cone_contains(&inc, gens, DEFAULT_TOL)? {
            return Ok((x + &inc, attempt));
        }
    }
    Err(Error::SamplerStall { cap: PROPOSAL_CAP })
}

/// Exact planar sampler: uniform angle on the admissible arc, radius with
/// `P(r ≤ s) = s²` (ball) or `r = 1` (sphere).
pub fn sample_from_arc<R: Rng + ?Sized>(
    x: &Point,
    arc: &Arc,
    law: IncrementLaw,
    rng: &mut R,
) -> Point {
    let u: f64 = rng.sample(Open01);
    let phi = arc.at(u);
    let r = match law {
        IncrementLaw::Ball => {
            let v: f64 = rng.sample(Open01);
            v.sqrt()
        }
        IncrementLaw::Sphere => 1.0,
    };
    Point::xy(x[0] + r * phi.cos(), x[1] + r * phi.sin())
}

pub fn sample_step_direct_2d<'a, R: Rng + ?Sized>(
    x: &Point,
    history: impl IntoIterator<Item = &'a Point>,
    law: IncrementLaw,
    mode: &ConstraintMode,
    rng: &mut R,
) -> Result<Point> {
    let arc = crate::geometry::admissible_sector_2d(x, history, mode)?;
    Ok(sample_from_arc(x, &arc, law, rng))
}

/// Draws the next position for `state` without advancing it.
pub fn sample_next<R: Rng + ?Sized>(
    state: &WalkState,
    law: IncrementLaw,
    sampler: Sampler,
    rng: &mut R,
) -> Result<(Point, u32)> {
    let gens = state.generators()?;
    match sampler {
        Sampler::Direct2d => {
            let arc = sector_from_generators(&gens)?;
            Ok((sample_from_arc(state.position(), &arc, law, rng), 1))
        }
        Sampler::Rejection => propose_rejection(state.position(), &gens, law, rng),
    }
}

/// One transition of the walk.
pub fn advance<R: Rng + ?Sized>(
    state: &mut WalkState,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<StepStats> {
    let (y, proposals) = sample_next(state, config.increment_law(), config.sampler, rng)?;
    let x = state.position();
    let radial = (&y - x).dot(&x.unit_or_zero());
    state.push(y);
    Ok(StepStats {
        proposals_used: proposals,
        radial_increment: radial,
    })
}

/// Output of [`run`]: thinned trace plus step aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: WalkConfig,
    pub trace: Vec<TraceRecord>,
    pub final_position: Point,
    /// Steps actually completed.
    pub steps: u64,
    pub total_proposals: u64,
    /// Sums of radial increments over consecutive blocks of [`DRIFT_BLOCK`] steps.
    pub radial_blocks: Vec<f64>,
    pub radial_total: f64,
}

impl Trajectory {
    pub fn speed(&self) -> f64 {
        self.final_position.norm() / self.steps as f64
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.steps as f64 / self.total_proposals as f64
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("run failed after {} steps: {error}", partial.steps)]
pub struct RunFailure {
    pub partial: Box<Trajectory>,
    #[source]
    pub error: Error,
}

fn trace_record(state: &WalkState, proposals: u32) -> TraceRecord {
    let theta = if state.dim() == 2 {
        state.sector().ok().map(|a| a.interior_angle())
    } else {
        None
    };
    TraceRecord {
        n: state.n(),
        x: state.position().clone(),
        theta,
        proposals,
    }
}

/// Simulates one trajectory; a deterministic function of the config (seed and replica included).
pub fn run(config: &WalkConfig) -> std::result::Result<Trajectory, RunFailure> {
    let fail = |error: Error, config: &WalkConfig| RunFailure {
        partial: Box::new(Trajectory {
            config: config.clone(),
            trace: Vec::new(),
            final_position: Point::zeros(config.d),
            steps: 0,
            total_proposals: 0,
            radial_blocks: Vec::new(),
            radial_total: 0.0,
        }),
        error,
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, config));
    }

    let key = StreamKey::new(config.seed, config.replica, Domain::Walk);
    let mut state = WalkState::for_config(config);
    let mut trace = vec![trace_record(&state, 0)];
    let mut total_proposals = 0u64;
    let mut blocks = Vec::with_capacity(config.steps as usize / DRIFT_BLOCK + 1);
    let mut block_sum = Vec::with_capacity(DRIFT_BLOCK);
    let mut error = None;

    for n in 0..config.steps {
        let mut rng = key.stream(n);
        match advance(&mut state, config, &mut rng) {
            Ok(st) => {
                total_proposals += u64::from(st.proposals_used);
                block_sum.push(st.radial_increment);
                if block_sum.len() == DRIFT_BLOCK {
                    blocks.push(compensated_sum(block_sum.drain(..)));
                }
                if state.n() % config.trace_thin == 0 {
                    trace.push(trace_record(&state, st.proposals_used));
                }
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let radial_total = compensated_sum(blocks.iter().copied().chain([compensated_sum(block_sum)]));
    let traj = Trajectory {
        config: config.clone(),
        trace,
        final_position: state.position().clone(),
        steps: state.n(),
        total_proposals,
        radial_blocks: blocks,
        radial_total,
    };
    match error {
        None => Ok(traj),
        Some(error) => Err(RunFailure {
            partial: Box::new(traj),
            error,
        }),
    }
}

/// Runs replicas `0..replicas` of `base` in parallel on the current rayon pool.
///
/// Output order is replica order regardless of scheduling.
pub fn run_replicas(base: &WalkConfig, replicas: u64) -> std::result::Result<Vec<Trajectory>, RunFailure> {
    (0..replicas)
        .into_par_iter()
        .map(|r| run(&base.clone().with_replica(r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::admissible_point;
    use crate::rng::CounterRng;
    use crate::stats::ks_one_sample;

    #[test]
    fn k_below_d_minus_one_is_rejected() {
        let err = WalkConfig::new(2, 0, 10).validate().unwrap_err();
        assert!(err.to_string().contains("k must be ≥ d−1"), "{err}");
        assert!(WalkConfig::new(3, 1, 10).validate().is_err());
        assert!(WalkConfig::new(3, 2, 10).validate().is_ok());
    }

    #[test]
    fn other_validation_rules() {
        assert!(WalkConfig::new(2, 1, 0).validate().is_err());
        assert!(WalkConfig::new(2, 1, 5).with_delta(0.125).validate().is_err());
        assert!(WalkConfig::new(2, 1, 5).with_delta(0.0).validate().is_err());
        assert!(WalkConfig::new(2, 1, 5).with_thin(0).validate().is_err());
        assert!(WalkConfig::new(3, 2, 5).with_sampler(Sampler::Direct2d).validate().is_err());
        let bad_ell = Variant::Homogeneous {
            ell: Point::xy(1.0, 1.0),
        };
        assert!(WalkConfig::new(2, 1, 5).with_variant(bad_ell).validate().is_err());
    }

    #[test]
    fn run_rejects_invalid_config() {
        let e = run(&WalkConfig::new(2, 0, 10)).unwrap_err();
        assert!(matches!(e.error, Error::Validation(_)));
    }

    #[test]
    fn first_proposal_from_origin_is_accepted() {
        let gens = ConeGenerators::new(Point::xy(0.0, 0.0));
        for s in 0..100 {
            let mut rng = CounterRng::seeded(s, 0, Domain::Aux, 0);
            let (_, used) =
                propose_rejection(&Point::xy(0.0, 0.0), &gens, IncrementLaw::Ball, &mut rng).unwrap();
            assert_eq!(used, 1);
        }
    }

    #[test]
    fn history_skips_x0_and_respects_memory() {
        let mut s = WalkState::new(2, 2, ConstraintMode::Origin);
        assert_eq!(s.history().count(), 0);
        s.push(Point::xy(0.5, 0.0));
        assert_eq!(s.history().count(), 0);
        s.push(Point::xy(1.0, 0.0));
        let h: Vec<_> = s.history().cloned().collect();
        assert_eq!(h, vec![Point::xy(0.5, 0.0)]);
        s.push(Point::xy(1.5, 0.0));
        let h: Vec<_> = s.history().cloned().collect();
        assert_eq!(h, vec![Point::xy(0.5, 0.0), Point::xy(1.0, 0.0)]);
        s.push(Point::xy(2.0, 0.0));
        let h: Vec<_> = s.history().cloned().collect();
        assert_eq!(h, vec![Point::xy(1.0, 0.0), Point::xy(1.5, 0.0)]);
        assert_eq!(s.window().len(), 3);
    }

    #[test]
    fn steps_are_admissible_and_short() {
        for (d, k, sampler) in [
            (2, 1, Sampler::Direct2d),
            (2, 3, Sampler::Direct2d),
            (2, 2, Sampler::Rejection),
            (3, 2, Sampler::Rejection),
            (4, 3, Sampler::Rejection),
        ] {
            let cfg = WalkConfig::new(d, k, 2000).with_sampler(sampler).with_seed(3);
            let mut state = WalkState::for_config(&cfg);
            let key = StreamKey::new(cfg.seed, 0, Domain::Walk);
            for n in 0..cfg.steps {
                let x = state.position().clone();
                let hist: Vec<Point> = state.history().cloned().collect();
                advance(&mut state, &cfg, &mut key.stream(n)).unwrap();
                let y = state.position();
                assert!(y.distance(&x) <= 1.0);
                assert!(
                    admissible_point(y, &x, &hist, &ConstraintMode::Origin).unwrap(),
                    "d={d} k={k} step {n}: {x:?} -> {y:?} hist {hist:?}"
                );
            }
        }
    }

    #[test]
    fn direct_radius_law_matches_area_scaling() {
        let arc = Arc {
            start: 1.0,
            width: 4.0,
        };
        let x = Point::xy(2.0, -1.0);
        let mut rng = CounterRng::seeded(9, 0, Domain::Aux, 0);
        let radii: Vec<f64> = (0..100_000)
            .map(|_| sample_from_arc(&x, &arc, IncrementLaw::Ball, &mut rng).distance(&x))
            .collect();
        let ks = ks_one_sample(&radii, |s| (s * s).clamp(0.0, 1.0));
        assert!(ks.statistic < 0.01, "{ks:?}");
    }

    #[test]
    fn sphere_law_has_unit_steps() {
        let cfg = WalkConfig::new(2, 1, 5000).with_variant(Variant::Sphere).with_thin(1);
        let t = run(&cfg).unwrap();
        for w in t.trace.windows(2) {
            assert!((w[1].x.distance(&w[0].x) - 1.0).abs() < 1e-12);
        }
        let cfg = WalkConfig::new(3, 2, 500).with_variant(Variant::Sphere).with_thin(1);
        let t = run(&cfg).unwrap();
        for w in t.trace.windows(2) {
            assert!((w[1].x.distance(&w[0].x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = WalkConfig::new(2, 1, 3000).with_seed(42).with_replica(5).with_thin(7);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = run(&cfg.clone().with_replica(6)).unwrap();
        assert_ne!(run(&cfg).unwrap().final_position, other.final_position);
    }

    #[test]
    fn trace_is_thinned() {
        let cfg = WalkConfig::new(2, 1, 1000).with_thin(10);
        let t = run(&cfg).unwrap();
        assert_eq!(t.trace.len(), 101);
        assert!(t.trace.iter().all(|r| r.n % 10 == 0));
        assert_eq!(t.trace.last().unwrap().x, t.final_position);
        assert_eq!(t.radial_blocks.len(), 1000 / DRIFT_BLOCK);
    }

    #[test]
    fn interior_angle_stays_in_range() {
        let cfg = WalkConfig::new(2, 1, 5000).with_seed(11);
        let t = run(&cfg).unwrap();
        for r in &t.trace {
            let theta = r.theta.unwrap();
            assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&theta));
            // Sector area π − θ/2 lies in [π/2, π].
            let area = std::f64::consts::PI - theta / 2.0;
            assert!((std::f64::consts::FRAC_PI_2 - 1e-12..=std::f64::consts::PI + 1e-12).contains(&area));
        }
    }

    #[test]
    fn pilot_speed_bracket() {
        let t = run(&WalkConfig::new(2, 1, 100_000).with_seed(1).with_thin(100_000)).unwrap();
        let v = t.speed();
        assert!(v > 0.05 && v < 0.14, "speed {v}");
    }
}
