//! Replica-level estimators: speed, limiting direction, drift profiles,
//! the renewal-ratio speed and memory sweeps.
//!
//! Every reduction sorts before summing so results do not depend on the
//! order in which replicas finish.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::point::Point;
use crate::renewal::SplitRun;
use crate::stats::{chi_square_sf, lag1_autocorrelation, mean_stderr, stable_sum, Z95};
use crate::walk::{run_replicas, Trajectory, WalkConfig, DRIFT_BLOCK};

pub const MIN_STEPS: u64 = 1000;
pub const MIN_DIRECTION_REPLICAS: usize = 50;
pub const MIN_RENEWALS: usize = 1000;
pub const DEFAULT_BINS: usize = 12;
pub const DEFAULT_DRIFT_WINDOW: usize = 1000;

/// Short hex digest of the replica-independent part of a config.
pub fn config_fingerprint(config: &WalkConfig) -> String {
    let canon = config.clone().with_replica(0);
    let json = serde_json::to_vec(&canon).expect("config serialises");
    Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub v_hat: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub replicas: usize,
    pub steps: u64,
    pub fingerprint: String,
}

impl SpeedEstimate {
    /// Aggregates per-replica speeds `‖X_N‖/N`.
    pub fn from_speeds(speeds: &[f64], steps: u64, fingerprint: String) -> Result<Self> {
        if speeds.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: speeds.len(),
            });
        }
        let ms = mean_stderr(speeds);
        Ok(SpeedEstimate {
            v_hat: ms.mean,
            stderr: ms.stderr,
            ci95: (ms.mean - Z95 * ms.stderr, ms.mean + Z95 * ms.stderr),
            replicas: speeds.len(),
            steps,
            fingerprint,
        })
    }

    pub fn overlaps(&self, other: &SpeedEstimate) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }
}

fn check_same_experiment<'a>(mut configs: impl Iterator<Item = &'a WalkConfig>) -> Result<&'a WalkConfig> {
    let first = configs
        .next()
        .ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    for c in configs {
        if !first.same_experiment(c) {
            return Err(Error::InvalidInput("replicas come from different configurations".into()));
        }
    }
    Ok(first)
}

pub fn speed_estimate(runs: &[Trajectory]) -> Result<SpeedEstimate> {
    let cfg = check_same_experiment(runs.iter().map(|r| &r.config))?;
    if cfg.steps < MIN_STEPS {
        return Err(Error::InvalidInput(format!("steps must be ≥ {MIN_STEPS}, got {}", cfg.steps)));
    }
    let speeds: Vec<f64> = runs.iter().map(Trajectory::speed).collect();
    SpeedEstimate::from_speeds(&speeds, cfg.steps, config_fingerprint(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSample {
    pub unit_vectors: Vec<Point>,
    /// Chi-square over angle bins (d = 2) or `d·R²/N` (d ≥ 3).
    pub uniformity_statistic: f64,
    pub p_value: f64,
    pub excluded: usize,
}

/// Uniformity of final directions, from the final positions.
pub fn direction_stats_from(finals: &[Point], bins: usize) -> Result<DirectionSample> {
    if finals.len() < MIN_DIRECTION_REPLICAS {
        return Err(Error::InsufficientSamples {
            needed: MIN_DIRECTION_REPLICAS,
            got: finals.len(),
        });
    }
    let d = finals[0].dim();
    let units: Vec<Point> = finals.iter().filter(|p| p.norm() > 0.0).map(Point::unit_or_zero).collect();
    let excluded = finals.len() - units.len();
    if excluded > 0 {
        log::warn!("{excluded} replicas ended at the origin and were excluded");
    }
    let n = units.len() as f64;
    let (stat, p) = if d == 2 {
        if bins < 2 {
            return Err(Error::InvalidInput("need at least two angle bins".into()));
        }
        let mut counts = vec![0u64; bins];
        for u in &units {
            let b = ((u.angle() / TAU * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let e = n / bins as f64;
        let terms: Vec<f64> = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).collect();
        let stat = stable_sum(&terms);
        (stat, chi_square_sf(stat, (bins - 1) as f64))
    } else {
        let resultant: Vec<f64> = (0..d)
            .map(|i| stable_sum(&units.iter().map(|u| u[i]).collect::<Vec<_>>()))
            .collect();
        let r2 = stable_sum(&resultant.iter().map(|c| c * c).collect::<Vec<_>>());
        let stat = d as f64 * r2 / n;
        (stat, chi_square_sf(stat, d as f64))
    };
    Ok(DirectionSample {
        unit_vectors: units,
        uniformity_statistic: stat,
        p_value: p,
        excluded,
    })
}

pub fn direction_stats(runs: &[Trajectory], bins: usize) -> Result<DirectionSample> {
    let finals: Vec<Point> = runs.iter().map(|r| r.final_position.clone()).collect();
    direction_stats_from(&finals, bins)
}

fn check_window(window: usize) -> Result<usize> {
    if window == 0 || window % DRIFT_BLOCK != 0 {
        return Err(Error::InvalidInput(format!(
            "drift window must be a positive multiple of {DRIFT_BLOCK}, got {window}"
        )));
    }
    Ok(window / DRIFT_BLOCK)
}

/// Windowed means of the radial increment `(X_{n+1} − X_n)·X̂_n` for one run.
pub fn drift_profile(run: &Trajectory, window: usize) -> Result<Vec<f64>> {
    let per = check_window(window)?;
    Ok(run
        .radial_blocks
        .chunks_exact(per)
        .map(|c| stable_sum(c) / window as f64)
        .collect())
}

/// Across-replica mean and standard error of each drift window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    pub window: usize,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
}

impl DriftProfile {
    pub fn tail(&self) -> Option<(f64, f64)> {
        Some((*self.means.last()?, *self.stderrs.last()?))
    }

    /// Windows whose mean lies more than `z` standard errors below zero.
    pub fn negative_windows(&self, z: f64) -> Vec<usize> {
        (0..self.means.len())
            .filter(|&i| self.means[i] < -z * self.stderrs[i])
            .collect()
    }
}

pub fn ensemble_drift_profile(runs: &[Trajectory], window: usize) -> Result<DriftProfile> {
    check_same_experiment(runs.iter().map(|r| &r.config))?;
    let profiles = runs
        .iter()
        .map(|r| drift_profile(r, window))
        .collect::<Result<Vec<_>>>()?;
    let len = profiles.iter().map(Vec::len).min().unwrap_or(0);
    let (means, stderrs) = (0..len)
        .map(|i| {
            let col: Vec<f64> = profiles.iter().map(|p| p[i]).collect();
            let ms = mean_stderr(&col);
            (ms.mean, ms.stderr)
        })
        .unzip();
    Ok(DriftProfile { window, means, stderrs })
}

/// Speed recovered from renewal cycles of the homogeneous process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalCrossCheck {
    pub u_hat: f64,
    pub lambda_hat: f64,
    pub v_derived: f64,
    pub v_stderr: f64,
    pub cycles: usize,
    pub gap_lag1: f64,
    pub transverse_mean: f64,
    pub transverse_stderr: f64,
}

/// `u/(kλ)` from consecutive renewal pairs of homogeneous split runs.
pub fn crosscheck_renewal_speed(runs: &[SplitRun], ell: &Point) -> Result<RenewalCrossCheck> {
    let cfg = check_same_experiment(runs.iter().map(|r| &r.config))?;
    if cfg.d != 2 {
        return Err(Error::UnsupportedDimension(cfg.d));
    }
    if (ell.norm() - 1.0).abs() > 1e-9 || ell.dim() != 2 {
        return Err(Error::InvalidInput("ell must be a planar unit vector".into()));
    }
    let perp = Point::xy(-ell[1], ell[0]);
    let (mut along, mut across, mut gaps) = (Vec::new(), Vec::new(), Vec::new());
    for run in runs {
        for w in run.renewals.windows(2) {
            let disp = &w[1].1 - &w[0].1;
            along.push(disp.dot(ell));
            across.push(disp.dot(&perp));
            gaps.push((w[1].0 - w[0].0) as f64);
        }
    }
    if along.len() < MIN_RENEWALS {
        return Err(Error::InsufficientRenewals {
            needed: MIN_RENEWALS,
            got: along.len(),
        });
    }
    let n = along.len() as f64;
    let k = cfg.k as f64;
    let u = mean_stderr(&along).mean;
    let lambda = mean_stderr(&gaps).mean;
    let ratio = u / lambda;
    // Delta-method standard error of a ratio of means.
    let resid: Vec<f64> = along.iter().zip(&gaps).map(|(a, g)| (a - ratio * g).powi(2)).collect();
    let se_ratio = (stable_sum(&resid) / (n * (n - 1.0))).sqrt() / lambda;
    let tr = mean_stderr(&across);
    Ok(RenewalCrossCheck {
        u_hat: u,
        lambda_hat: lambda,
        v_derived: ratio / k,
        v_stderr: se_ratio / k,
        cycles: along.len(),
        gap_lag1: lag1_autocorrelation(&gaps),
        transverse_mean: tr.mean,
        transverse_stderr: tr.stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub estimate: SpeedEstimate,
}

/// Speed per memory length. Monotonicity in k is reported only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub d: usize,
    pub rows: Vec<SweepRow>,
    /// `(k_i, k_j, CIs overlap)` for every pair of rows.
    pub overlaps: Vec<(usize, usize, bool)>,
    pub nondecreasing: bool,
}

pub fn k_sweep(base: &WalkConfig, k_values: &[usize], replicas: u64) -> Result<SweepTable> {
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::InvalidInput("empty k list".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let cfg = WalkConfig { k, ..base.clone() };
        cfg.validate()?;
        let runs = run_replicas(&cfg, replicas).map_err(|f| f.error)?;
        rows.push(SweepRow {
            k,
            estimate: speed_estimate(&runs)?,
        });
    }
    let mut overlaps = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            overlaps.push((rows[i].k, rows[j].k, rows[i].estimate.overlaps(&rows[j].estimate)));
        }
    }
    let nondecreasing = rows.windows(2).all(|w| w[0].estimate.v_hat <= w[1].estimate.v_hat);
    Ok(SweepTable {
        d: base.d,
        rows,
        overlaps,
        nondecreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::TraceRecord;

    fn synthetic(v: Point, steps: u64, replica: u64) -> Trajectory {
        let cfg = WalkConfig::new(2, 1, steps).with_replica(replica);
        let inc = v.norm();
        Trajectory {
            config: cfg,
            trace: vec![TraceRecord {
                n: 0,
                x: Point::zeros(2),
                theta: None,
                proposals: 0,
            }],
            final_position: v.scale(steps as f64),
            steps,
            total_proposals: steps,
            radial_blocks: vec![inc * DRIFT_BLOCK as f64; steps as usize / DRIFT_BLOCK],
            radial_total: inc * steps as f64,
        }
    }

    #[test]
    fn synthetic_speed_is_recovered_exactly() {
        let runs: Vec<_> = (0..5).map(|r| synthetic(Point::xy(0.07, 0.0), 10_000, r)).collect();
        let est = speed_estimate(&runs).unwrap();
        assert!((est.v_hat - 0.07).abs() < 1e-15);
        assert_eq!(est.stderr, 0.0);
        assert!(est.ci95.0 <= est.v_hat && est.v_hat <= est.ci95.1);
    }

    #[test]
    fn speed_needs_matching_configs_and_enough_steps() {
        let mut runs: Vec<_> = (0..3).map(|r| synthetic(Point::xy(0.07, 0.0), 10_000, r)).collect();
        runs[1].config.k = 2;
        assert!(matches!(speed_estimate(&runs), Err(Error::InvalidInput(_))));
        let short: Vec<_> = (0..3).map(|r| synthetic(Point::xy(0.07, 0.0), 500, r)).collect();
        assert!(speed_estimate(&short).is_err());
        assert!(speed_estimate(&runs[..1]).is_err());
    }

    #[test]
    fn speed_is_permutation_invariant() {
        let runs: Vec<_> = (0..20)
            .map(|r| synthetic(Point::xy(0.05 + 0.001 * r as f64, 0.01), 2000, r))
            .collect();
        let mut rev = runs.clone();
        rev.reverse();
        assert_eq!(speed_estimate(&runs).unwrap(), speed_estimate(&rev).unwrap());
    }

    #[test]
    fn bin_centres_give_zero_statistic() {
        let pts: Vec<Point> = (0..60)
            .map(|i| {
                let a = TAU * ((i % 12) as f64 + 0.5) / 12.0;
                Point::xy(a.cos(), a.sin())
            })
            .collect();
        let ds = direction_stats_from(&pts, 12).unwrap();
        assert!(ds.uniformity_statistic.abs() < 1e-12);
        assert!((ds.p_value - 1.0).abs() < 1e-12);
        for u in &ds.unit_vectors {
            assert!((u.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bin_aligned_rotation_keeps_statistic() {
        let angles: Vec<f64> = (0..97).map(|i| ((i * 37 % 101) as f64 + 0.3) / 101.0 * TAU).collect();
        let pts = |shift: f64| -> Vec<Point> {
            angles
                .iter()
                .map(|a| {
                    let b = a + shift;
                    Point::xy(3.0 * b.cos(), 3.0 * b.sin())
                })
                .collect()
        };
        let base = direction_stats_from(&pts(0.0), 12).unwrap().uniformity_statistic;
        for j in 1..12 {
            let rot = direction_stats_from(&pts(TAU * j as f64 / 12.0), 12).unwrap();
            assert!((rot.uniformity_statistic - base).abs() < 1e-9);
        }
    }

    #[test]
    fn concentrated_directions_are_rejected() {
        let pts: Vec<Point> = (0..100).map(|i| Point::xy(1.0, 0.001 * i as f64)).collect();
        assert!(direction_stats_from(&pts, 12).unwrap().p_value < 1e-10);
        let pts3: Vec<Point> = (0..100).map(|i| Point::from([1.0, 0.001 * i as f64, 0.0])).collect();
        assert!(direction_stats_from(&pts3, 12).unwrap().p_value < 1e-10);
        assert!(direction_stats_from(&pts[..10], 12).is_err());
    }

    #[test]
    fn origin_finals_are_excluded() {
        let mut pts: Vec<Point> = (0..60)
            .map(|i| {
                let a = i as f64;
                Point::xy(a.cos(), a.sin())
            })
            .collect();
        pts[3] = Point::zeros(2);
        assert_eq!(direction_stats_from(&pts, 12).unwrap().excluded, 1);
    }

    #[test]
    fn constant_increments_give_flat_profile() {
        let r = synthetic(Point::xy(0.0, 0.3), 5000, 0);
        let p = drift_profile(&r, 1000).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|&m| (m - 0.3).abs() < 1e-12));
        assert!(drift_profile(&r, 150).is_err());
        let runs: Vec<_> = (0..4).map(|i| synthetic(Point::xy(0.0, 0.3), 5000, i)).collect();
        let e = ensemble_drift_profile(&runs, 500).unwrap();
        assert_eq!(e.means.len(), 10);
        assert!(e.negative_windows(3.0).is_empty());
        assert!((e.tail().unwrap().0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fingerprint_ignores_replica() {
        let a = WalkConfig::new(2, 1, 100).with_seed(3);
        assert_eq!(config_fingerprint(&a), config_fingerprint(&a.clone().with_replica(9)));
        assert_ne!(config_fingerprint(&a), config_fingerprint(&a.clone().with_seed(4)));
        assert_eq!(config_fingerprint(&a).len(), 16);
    }

    #[test]
    fn crosscheck_needs_enough_renewals() {
        let cfg = WalkConfig::new(2, 1, 1000);
        let run = SplitRun {
            config: cfg.clone(),
            params: crate::renewal::GoodGeometryParams::for_config(&cfg).unwrap(),
            blocks: 1000,
            good_blocks: 0,
            residual_proposals: 0,
            renewals: (0..10).map(|i| (i * 10, Point::xy(i as f64, 0.0))).collect(),
            final_position: Point::xy(10.0, 0.0),
        };
        assert!(matches!(
            crosscheck_renewal_speed(&[run], &Point::xy(1.0, 0.0)),
            Err(Error::InsufficientRenewals { got: 9, .. })
        ));
    }

    #[test]
    fn crosscheck_on_programmed_cycles() {
        let cfg = WalkConfig::new(2, 1, 100_000);
        // Cycles of alternating length 10 and 30 moving 1 and 3 along ℓ: v = 0.1.
        let mut renewals = Vec::new();
        let (mut tau, mut x) = (0u64, 0.0);
        for i in 0..2001 {
            renewals.push((tau, Point::xy(0.0, x)));
            let g = if i % 2 == 0 { 10 } else { 30 };
            tau += g;
            x += g as f64 * 0.1;
        }
        let run = SplitRun {
            config: cfg.clone(),
            params: crate::renewal::GoodGeometryParams::for_config(&cfg).unwrap(),
            blocks: tau,
            good_blocks: 0,
            residual_proposals: 0,
            renewals,
            final_position: Point::xy(0.0, x),
        };
        let cc = crosscheck_renewal_speed(&[run], &Point::xy(0.0, 1.0)).unwrap();
        assert!((cc.v_derived - 0.1).abs() < 1e-12);
        assert!((cc.lambda_hat - 20.0).abs() < 1e-12);
        assert!(cc.v_stderr < 1e-12);
        assert!(cc.transverse_mean.abs() < 1e-12);
        assert!((cc.gap_lag1 + 1.0).abs() < 1e-2);
    }

    #[test]
    fn sweep_is_sorted_and_order_independent() {
        let base = WalkConfig::new(2, 1, 2000).with_seed(8).with_thin(2000);
        let a = k_sweep(&base, &[2, 1], 3).unwrap();
        let b = k_sweep(&base, &[1, 2, 2], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(a.overlaps.len(), 1);
        assert!(k_sweep(&base, &[], 3).is_err());
        assert!(k_sweep(&WalkConfig::new(3, 2, 2000), &[1], 3).is_err());
    }
}
