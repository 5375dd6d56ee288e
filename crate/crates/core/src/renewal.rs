//! Regeneration through a ball-chain splitting of the k-step block kernel.
//!
//! The walk is viewed in blocks of k steps. When the current block ends in a
//! good geometry (every path through the ball chain Π ahead of the walker is
//! admissible), the block kernel `f` dominates `α·u_Π`, so the next block can
//! be drawn as a mixture: with probability α uniformly on Π (a renewal), and
//! otherwise from the residual `(f − α·u_Π)/(1 − α)`. The mixture has law `f`
//! exactly, so split and plain runs are indistinguishable in distribution.
//!
//! Only the planar ball law is supported: the residual needs `f` in closed
//! form, which is the product of reciprocal sector areas.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConstraintMode;
use crate::point::Point;
use crate::rng::{Domain, StreamKey};
use crate::stats::{wilson_interval, Z95};
use crate::walk::{sample_increment, sample_next, IncrementLaw, Variant, WalkConfig, WalkState, MAX_DELTA};

/// Proposals allowed when sampling the residual block density.
pub const RESIDUAL_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodGeometryParams {
    pub d: usize,
    pub k: usize,
    pub delta: f64,
    /// Always `delta^(d·k)`.
    pub alpha: f64,
}

impl GoodGeometryParams {
    pub fn new(d: usize, k: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= MAX_DELTA) {
            return Err(Error::Validation(format!("delta must lie in (0, 1/8), got {delta}")));
        }
        if d < 2 || k < 1 {
            return Err(Error::Validation(format!("need d ≥ 2 and k ≥ 1, got d={d}, k={k}")));
        }
        Ok(GoodGeometryParams {
            d,
            k,
            delta,
            alpha: delta.powi((d * k) as i32),
        })
    }

    pub fn for_config(config: &WalkConfig) -> Result<Self> {
        GoodGeometryParams::new(config.d, config.k, config.delta)
    }
}

/// The corridor `Π = ∏ B(x + (i/2)u; δ)`, `i = 1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallChain {
    pub centers: Vec<Point>,
    pub radius: f64,
}

impl BallChain {
    pub fn new(x: &Point, u: &Point, k: usize, radius: f64) -> Self {
        BallChain {
            centers: (1..=k).map(|i| x.axpy(0.5 * i as f64, u)).collect(),
            radius,
        }
    }

    pub fn contains(&self, path: &[Point]) -> bool {
        path.len() == self.centers.len() && path.iter().zip(&self.centers).all(|(y, c)| y.distance(c) <= self.radius)
    }

    /// A path drawn uniformly from the chain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        self.centers
            .iter()
            .map(|c| c + &sample_increment(c.dim(), IncrementLaw::Ball, rng).scale(self.radius))
            .collect()
    }

    /// Lebesgue measure of the chain in `(R^d)^k`.
    pub fn volume(&self) -> f64 {
        let d = self.centers.first().map_or(2, Point::dim);
        ball_volume(d, self.radius).powi(self.centers.len() as i32)
    }
}

fn ball_volume(d: usize, r: f64) -> f64 {
    // V_d = π^{d/2} / Γ(d/2 + 1), by the recursion V_d = 2π/d · V_{d−2}.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut j = if d % 2 == 0 { 2 } else { 3 };
    while j <= d {
        v *= 2.0 * PI / j as f64;
        j += 2;
    }
    v * r.powi(d as i32)
}

/// Direction along which the chain is laid out from the end of `window`.
fn chain_direction(x: &Point, mode: &ConstraintMode) -> Point {
    match mode {
        ConstraintMode::Origin => x.unit_or_zero(),
        ConstraintMode::Homogeneous { ell } => ell.clone(),
    }
}

/// Conservative good-geometry test in origin mode.
pub fn good_geometry(window: &[Point], params: &GoodGeometryParams) -> bool {
    good_geometry_in(window, params, &ConstraintMode::Origin)
}

/// Conservative good-geometry test: `true` only if every path through the
/// ball chain ahead of `window`'s last point is admissible at every stage.
///
/// Each stage is certified by the hyperplane normal to `u` through the
/// previous chain centre: every fixed constraint point must sit at least
/// `2δ` behind it. Earlier chain balls are at least `1/2 − 2δ` behind and
/// the next ball at least `1/2 − 2δ` ahead, so only the fixed points need
/// checking, and the first stage is the binding one.
pub fn good_geometry_in(window: &[Point], params: &GoodGeometryParams, mode: &ConstraintMode) -> bool {
    let Some(x) = window.last() else { return false };
    if window.len() != params.k + 1 || x.norm() == 0.0 {
        return false;
    }
    let u = chain_direction(x, mode);
    let margin = -2.0 * params.delta;
    let behind = |z: &Point| (z - x).dot(&u) <= margin;
    let fixed_ok = window[..params.k].iter().all(behind);
    let extra_ok = match mode {
        ConstraintMode::Origin => behind(&Point::zeros(x.dim())),
        // The ray −ℓ points straight back along u.
        ConstraintMode::Homogeneous { .. } => true,
    };
    fixed_ok && extra_ok
}

/// Product of admissible-region areas along `path` from `state`.
///
/// This is `1/f(path)` for the planar ball law.
fn block_area_product(state: &WalkState, path: &[Point]) -> Result<f64> {
    let mut s = state.clone();
    let mut prod = 1.0;
    for y in path {
        prod *= s.sector()?.sector_area();
        s.push(y.clone());
    }
    Ok(prod)
}

fn plain_block<R: Rng + ?Sized>(state: &WalkState, config: &WalkConfig, rng: &mut R) -> Result<Vec<Point>> {
    let mut s = state.clone();
    let mut path = Vec::with_capacity(config.k);
    for _ in 0..config.k {
        let (y, _) = sample_next(&s, IncrementLaw::Ball, config.sampler, rng)?;
        s.push(y.clone());
        path.push(y);
    }
    Ok(path)
}

/// Outcome of one split block.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBlock {
    pub path: Vec<Point>,
    pub renewal: bool,
    pub good_geometry: bool,
    /// Residual proposals spent (0 unless good geometry held with `v = false`).
    pub residual_proposals: u64,
}

fn check_split_config(config: &WalkConfig) -> Result<()> {
    config.validate()?;
    if config.d != 2 {
        return Err(Error::UnsupportedDimension(config.d));
    }
    if matches!(config.variant, Variant::Sphere) {
        return Err(Error::Validation("split sampling needs the ball increment law".into()));
    }
    Ok(())
}

/// Draws the next k-step block from `state` (at a block boundary) using the coin `v`.
pub fn split_step_block<R: Rng + ?Sized>(
    state: &WalkState,
    v: bool,
    params: &GoodGeometryParams,
    config: &WalkConfig,
    rng: &mut R,
) -> Result<SplitBlock> {
    check_split_config(config)?;
    let window: Vec<Point> = state.window().cloned().collect();
    if !good_geometry_in(&window, params, state.mode()) {
        return Ok(SplitBlock {
            path: plain_block(state, config, rng)?,
            renewal: false,
            good_geometry: false,
            residual_proposals: 0,
        });
    }
    let x = state.position();
    let chain = BallChain::new(x, &chain_direction(x, state.mode()), params.k, params.delta);
    if v {
        return Ok(SplitBlock {
            path: chain.sample(rng),
            renewal: true,
            good_geometry: true,
            residual_proposals: 0,
        });
    }
    // Residual by rejection: propose from f, keep with probability 1 − α u_Π / f.
    let alpha_u = params.alpha / chain.volume();
    for attempt in 1..=RESIDUAL_CAP {
        let path = plain_block(state, config, rng)?;
        let u: f64 = rng.gen();
        let keep = !chain.contains(&path) || u >= alpha_u * block_area_product(state, &path)?;
        if keep {
            return Ok(SplitBlock {
                path,
                renewal: false,
                good_geometry: true,
                residual_proposals: attempt,
            });
        }
    }
    Err(Error::SplitSamplerStall { proposals: RESIDUAL_CAP })
}

/// A whole run of the split construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub config: WalkConfig,
    pub params: GoodGeometryParams,
    pub blocks: u64,
    pub good_blocks: u64,
    pub residual_proposals: u64,
    /// `(block index, anchor)` for every renewal, in order; the anchor is the
    /// position the uniform block starts from.
    pub renewals: Vec<(u64, Point)>,
    pub final_position: Point,
}

impl SplitRun {
    pub fn steps(&self) -> u64 {
        self.blocks * self.params.k as u64
    }

    pub fn speed(&self) -> f64 {
        self.final_position.norm() / self.steps() as f64
    }
}

/// Runs `⌊steps / k⌋` split blocks from `X_0 = 0`.
pub fn run_split(config: &WalkConfig) -> Result<SplitRun> {
    check_split_config(config)?;
    let params = GoodGeometryParams::for_config(config)?;
    let blocks = config.steps / config.k as u64;
    let coin_key = StreamKey::new(config.seed, config.replica, Domain::Coin);
    let block_key = StreamKey::new(config.seed, config.replica, Domain::Block);
    let mut state = WalkState::for_config(config);
    let mut run = SplitRun {
        config: config.clone(),
        params,
        blocks,
        good_blocks: 0,
        residual_proposals: 0,
        renewals: Vec::new(),
        final_position: state.position().clone(),
    };
    for m in 0..blocks {
        let v = coin_key.stream(m).gen::<f64>() < params.alpha;
        let block = split_step_block(&state, v, &params, config, &mut block_key.stream(m))?;
        run.good_blocks += u64::from(block.good_geometry);
        run.residual_proposals += block.residual_proposals;
        if block.renewal {
            run.renewals.push((m, state.position().clone()));
        }
        for y in block.path {
            state.push(y);
        }
    }
    run.final_position = state.position().clone();
    Ok(run)
}

/// Renewal `index` (from 1) at block time `tau`: the geometry was checked at
/// the end of block `tau` and block `tau + 1` was drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalRecord {
    pub index: u64,
    pub tau: u64,
    /// `X_{kτ + k}`: where the uniform block starts.
    pub anchor: Point,
    /// `τ_n − τ_{n−1}`, with `τ_0 = −1`.
    pub gap: u64,
}

/// Empirical `P(gap ≥ 2r)` against the bound `e^{−cr}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub r: u64,
    pub p_hat: f64,
    pub wilson95: (f64, f64),
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalReport {
    pub records: Vec<RenewalRecord>,
    /// Gaps between consecutive renewals (the first renewal's gap excluded).
    pub n_gaps: usize,
    pub survival: Vec<SurvivalPoint>,
    /// `c = −ln(1 − α²)`.
    pub c: f64,
    pub renewals_per_block: f64,
    pub good_fraction: f64,
}

impl RenewalReport {
    /// Survival points exceeding the bound by more than `z` binomial standard errors.
    pub fn bound_violations(&self, z: f64) -> Vec<SurvivalPoint> {
        let n = self.n_gaps as f64;
        self.survival
            .iter()
            .filter(|p| p.p_hat > p.bound + z * (p.bound * (1.0 - p.bound) / n).sqrt())
            .copied()
            .collect()
    }
}

/// At most this many survival points are reported.
const SURVIVAL_POINTS: u64 = 256;

pub fn collect_renewals(run: &SplitRun) -> RenewalReport {
    if run.renewals.is_empty() {
        log::warn!("no renewals in {} blocks", run.blocks);
    }
    let mut prev: i64 = -1;
    let records: Vec<RenewalRecord> = run
        .renewals
        .iter()
        .enumerate()
        .map(|(i, (block, anchor))| {
            // Good geometry needs X ≠ 0, so block 0 never renews.
            debug_assert!(*block >= 1);
            let tau = block.saturating_sub(1);
            let gap = (tau as i64 - prev) as u64;
            prev = tau as i64;
            RenewalRecord {
                index: i as u64 + 1,
                tau,
                anchor: anchor.clone(),
                gap,
            }
        })
        .collect();
    let a2 = run.params.alpha * run.params.alpha;
    let c = -(-a2).ln_1p();
    let gaps: Vec<u64> = records.iter().skip(1).map(|r| r.gap).collect();
    let survival = survival_curve(&gaps, c);
    RenewalReport {
        n_gaps: gaps.len(),
        survival,
        c,
        renewals_per_block: records.len() as f64 / run.blocks.max(1) as f64,
        good_fraction: run.good_blocks as f64 / run.blocks.max(1) as f64,
        records,
    }
}

fn survival_curve(gaps: &[u64], c: f64) -> Vec<SurvivalPoint> {
    let Some(&max_gap) = gaps.iter().max() else { return Vec::new() };
    let r_max = max_gap / 2;
    let stride = (r_max / SURVIVAL_POINTS).max(1);
    let mut sorted = gaps.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as u64;
    (0..=r_max)
        .step_by(stride as usize)
        .map(|r| {
            let at_least = n - sorted.partition_point(|&g| g < 2 * r) as u64;
            SurvivalPoint {
                r,
                p_hat: at_least as f64 / n as f64,
                wilson95: wilson_interval(at_least, n, Z95),
                bound: (-c * r as f64).exp(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::admissible_point;
    use crate::rng::CounterRng;

    fn params() -> GoodGeometryParams {
        GoodGeometryParams::new(2, 1, 0.1).unwrap()
    }

    #[test]
    fn alpha_is_delta_to_the_dk() {
        assert!((params().alpha - 0.01).abs() < 1e-15);
        assert!((GoodGeometryParams::new(2, 3, 0.1).unwrap().alpha - 1e-6).abs() < 1e-20);
        assert!(GoodGeometryParams::new(2, 1, 0.125).is_err());
    }

    #[test]
    fn chain_centres_are_half_apart() {
        let ch = BallChain::new(&Point::xy(3.0, 4.0), &Point::xy(0.6, 0.8), 4, 0.1);
        for w in ch.centers.windows(2) {
            assert!((w[0].distance(&w[1]) - 0.5).abs() < 1e-12);
        }
        assert!((ch.volume() - (PI * 0.01f64).powi(4)).abs() < 1e-18);
        assert!((ball_volume(3, 1.0) - 4.0 / 3.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn good_geometry_examples() {
        let p = params();
        assert!(!good_geometry(&[Point::xy(0.5, 0.0), Point::xy(0.0, 0.0)], &p));
        assert!(good_geometry(&[Point::xy(5.0, 0.0), Point::xy(5.5, 0.0)], &p));
        assert!(!good_geometry(&[Point::xy(5.0, 0.0), Point::xy(4.6, 0.05)], &p));
        // Wrong window length.
        assert!(!good_geometry(&[Point::xy(5.5, 0.0)], &p));
    }

    #[test]
    fn good_example_paths_are_admissible() {
        let p = params();
        let window = [Point::xy(5.0, 0.0), Point::xy(5.5, 0.0)];
        let ch = BallChain::new(&window[1], &Point::xy(1.0, 0.0), 1, p.delta);
        let mut rng = CounterRng::seeded(1, 0, Domain::Aux, 0);
        for _ in 0..10_000 {
            let y = &ch.sample(&mut rng)[0];
            assert!(admissible_point(y, &window[1], &window[..1], &ConstraintMode::Origin).unwrap());
        }
    }

    #[test]
    fn split_rejects_unsupported_configs() {
        let st = WalkState::new(3, 2, ConstraintMode::Origin);
        let cfg = WalkConfig::new(3, 2, 10);
        let p = GoodGeometryParams::new(3, 2, 0.1).unwrap();
        let mut rng = CounterRng::seeded(1, 0, Domain::Aux, 0);
        assert!(matches!(
            split_step_block(&st, true, &p, &cfg, &mut rng),
            Err(Error::UnsupportedDimension(3))
        ));
        let cfg = WalkConfig::new(2, 1, 10).with_variant(Variant::Sphere);
        assert!(run_split(&cfg).is_err());
    }

    #[test]
    fn renewal_block_lands_in_first_ball() {
        let p = params();
        let cfg = WalkConfig::new(2, 1, 1);
        let st = WalkState::from_window(vec![Point::xy(5.0, 0.0), Point::xy(5.5, 0.0)], 50, 1, ConstraintMode::Origin)
            .unwrap();
        let mut rng = CounterRng::seeded(2, 0, Domain::Aux, 0);
        for _ in 0..1000 {
            let b = split_step_block(&st, true, &p, &cfg, &mut rng).unwrap();
            assert!(b.renewal);
            assert!(b.path[0].distance(&Point::xy(6.0, 0.0)) <= p.delta);
        }
    }

    #[test]
    fn residual_acceptance_ratio_never_exceeds_one() {
        // α u_Π / f = ∏ area_i / π^k on Π, and each planar area is at most π.
        let p = GoodGeometryParams::new(2, 2, 0.1).unwrap();
        let st = WalkState::from_window(
            vec![Point::xy(4.0, 0.1), Point::xy(4.5, 0.0), Point::xy(5.0, 0.0)],
            40,
            2,
            ConstraintMode::Origin,
        )
        .unwrap();
        let ch = BallChain::new(&Point::xy(5.0, 0.0), &Point::xy(1.0, 0.0), 2, p.delta);
        let mut rng = CounterRng::seeded(4, 0, Domain::Aux, 0);
        for _ in 0..10_000 {
            let path = ch.sample(&mut rng);
            let ratio = p.alpha / ch.volume() * block_area_product(&st, &path).unwrap();
            assert!((0.25 - 1e-12..=1.0 + 1e-12).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn records_and_gaps() {
        let run = SplitRun {
            config: WalkConfig::new(2, 1, 100),
            params: params(),
            blocks: 100,
            good_blocks: 50,
            residual_proposals: 0,
            renewals: vec![(3, Point::xy(1.0, 0.0)), (10, Point::xy(2.0, 0.0)), (11, Point::xy(2.5, 0.0))],
            final_position: Point::xy(9.0, 0.0),
        };
        let rep = collect_renewals(&run);
        let taus: Vec<u64> = rep.records.iter().map(|r| r.tau).collect();
        let gaps: Vec<u64> = rep.records.iter().map(|r| r.gap).collect();
        assert_eq!(taus, vec![2, 9, 10]);
        assert_eq!(gaps, vec![3, 7, 1]);
        assert_eq!(rep.n_gaps, 2);
        assert_eq!(rep.survival[0].p_hat, 1.0);
        assert!((rep.c - 1e-4).abs() < 1e-8);
    }

    #[test]
    fn empty_run_has_empty_report() {
        let run = SplitRun {
            config: WalkConfig::new(2, 1, 10),
            params: params(),
            blocks: 10,
            good_blocks: 0,
            residual_proposals: 0,
            renewals: vec![],
            final_position: Point::xy(1.0, 0.0),
        };
        let rep = collect_renewals(&run);
        assert!(rep.records.is_empty() && rep.survival.is_empty());
    }

    #[test]
    fn split_run_is_deterministic_and_renews() {
        let cfg = WalkConfig::new(2, 1, 50_000).with_seed(5);
        let a = run_split(&cfg).unwrap();
        assert_eq!(a, run_split(&cfg).unwrap());
        assert!(!a.renewals.is_empty());
        assert!(a.good_blocks > 0);
        assert!(a.speed() > 0.03);
    }
}
