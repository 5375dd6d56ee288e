//! The `hullwalk` command line: argument parsing and pipeline dispatch.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors, 3 for
//! failures while running.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hullwalk_core::angle_chain::{self, Angle, SpeedMethod, DEFAULT_BURNIN};
use hullwalk_core::estimators::{
    config_fingerprint, crosscheck_renewal_speed, direction_stats, ensemble_drift_profile, k_sweep, speed_estimate,
    SpeedEstimate, DEFAULT_BINS, DEFAULT_DRIFT_WINDOW, MIN_DIRECTION_REPLICAS,
};
use hullwalk_core::io::{write_summary, write_trace, SummaryDocument, TraceFormat};
use hullwalk_core::renewal::{collect_renewals, run_split, SplitRun};
use hullwalk_core::stats::{mean_stderr, Z95};
use hullwalk_core::walk::{run, run_replicas, Trajectory, DRIFT_BLOCK};
use hullwalk_core::{Error, Point, Sampler, Variant, WalkConfig, SPEED_2_1, SPHERE_SPEED_2_1};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "HULLWALK_THREADS";

#[derive(Parser, Debug)]
#[command(name = "hullwalk", version, about = "Random walks avoiding the hull of their recent past")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one trajectory and write its trace.
    Walk(WalkArgs),
    /// Estimate the speed (and direction law) from independent replicas.
    Speed(CommonArgs),
    /// Simulate the planar angle recursion and test its stationary law.
    AngleChain(ChainArgs),
    /// Run the block-splitting sampler and report renewal statistics.
    Renewal(CommonArgs),
    /// Compare the renewal-ratio speed with the direct speed of the homogeneous walk.
    Crosscheck(CommonArgs),
    /// Tabulate the speed over several memory lengths.
    SweepK(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Ball,
    Sphere,
    Homogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Rejection,
    Direct2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Memory: how many past positions the hull remembers (at least d − 1).
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Steps per replica.
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    /// Independent replicas (ignored by `walk`).
    #[arg(long, default_value_t = 200)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ball-chain radius for the splitting sampler.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Ball)]
    pub variant: VariantArg,
    /// Unit vector for the homogeneous variant, comma separated (default e1).
    #[arg(long, allow_hyphen_values = true)]
    pub ell: Option<String>,
    /// Defaults to direct2d in the plane and rejection otherwise.
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// Keep every `thin`-th trace record.
    #[arg(long, default_value_t = 1)]
    pub thin: u64,
    /// Output file: the trace for `walk`, the summary otherwise (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace format for `walk`.
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    pub format: FormatArg,
    /// Worker threads (HULLWALK_THREADS takes precedence).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct WalkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which replica's random streams to use.
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
    /// Where to write the summary (stdout if absent).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    /// Samples kept after burn-in.
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial angle in [0, π].
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub init: f64,
    #[arg(long, default_value_t = DEFAULT_BURNIN)]
    pub burnin: usize,
    /// Where to write the summary (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the post-burn-in angles as CSV `n,theta`.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Worker threads (HULLWALK_THREADS takes precedence).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated memory lengths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k_values: Vec<usize>,
}

/// Classifies a core error into an exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::Validation(_) | Error::UnsupportedDimension(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn parse_ell(s: &str, d: usize) -> Result<Point, Error> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Error::Validation(format!("cannot parse --ell {s:?}")))?;
    if coords.len() != d {
        return Err(Error::Validation(format!("--ell has {} coordinates, expected {d}", coords.len())));
    }
    Ok(Point::new(coords))
}

impl CommonArgs {
    /// The walk configuration for replica 0.
    pub fn walk_config(&self) -> Result<WalkConfig, Error> {
        let variant = match self.variant {
            VariantArg::Ball => Variant::Ball,
            VariantArg::Sphere => Variant::Sphere,
            VariantArg::Homogeneous => Variant::Homogeneous {
                ell: match &self.ell {
                    Some(s) => parse_ell(s, self.d)?,
                    None => Point::unit(self.d.max(1), 0),
                },
            },
        };
        let sampler = match self.sampler {
            Some(SamplerArg::Rejection) => Sampler::Rejection,
            Some(SamplerArg::Direct2d) => Sampler::Direct2d,
            None => Sampler::default_for(self.d),
        };
        let cfg = WalkConfig::new(self.d, self.k, self.steps)
            .with_variant(variant)
            .with_sampler(sampler)
            .with_seed(self.seed)
            .with_delta(self.delta)
            .with_thin(self.thin);
        cfg.validate()?;
        Ok(cfg)
    }

    fn trace_format(&self) -> TraceFormat {
        match self.format {
            FormatArg::Jsonl => TraceFormat::Jsonl,
            FormatArg::Csv => TraceFormat::Csv,
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        _ => match flag {
            Some(0) => Err(Error::Validation("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn emit(doc: &SummaryDocument, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => write_summary(doc, p),
        None => {
            print!("{}", doc.to_json_string()?);
            Ok(())
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serialises")
}

fn run_echo(cfg: &WalkConfig, replicas: u64) -> Value {
    json!({ "walk": to_value(cfg), "replicas": replicas, "fingerprint": config_fingerprint(cfg) })
}

/// Known limiting speed for the configuration, if there is one.
fn reference_speed(cfg: &WalkConfig) -> Option<f64> {
    if cfg.d != 2 || cfg.k != 1 {
        return None;
    }
    Some(match cfg.variant {
        Variant::Sphere => SPHERE_SPEED_2_1,
        _ => SPEED_2_1,
    })
}

fn replicas_or_fail(cfg: &WalkConfig, replicas: u64) -> Result<Vec<Trajectory>, Error> {
    run_replicas(cfg, replicas).map_err(|f| {
        log::error!("replica {} failed: {}", f.partial.config.replica, f.error);
        f.error
    })
}

fn cmd_walk(args: &WalkArgs) -> Result<SummaryDocument, Error> {
    let cfg = args.common.walk_config()?.with_replica(args.replica);
    let traj = match run(&cfg) {
        Ok(t) => t,
        Err(f) => {
            if let Some(p) = &args.common.out {
                write_trace(&f.partial.trace, cfg.d, p, args.common.trace_format())?;
            }
            return Err(f.error);
        }
    };
    if let Some(p) = &args.common.out {
        write_trace(&traj.trace, cfg.d, p, args.common.trace_format())?;
    }
    let mut doc = SummaryDocument::new("walk", json!({ "walk": to_value(&cfg), "fingerprint": config_fingerprint(&cfg) }));
    doc.v_hat = Some(traj.speed());
    doc.details = Some(json!({
        "steps": traj.steps,
        "final_position": to_value(&traj.final_position),
        "total_proposals": traj.total_proposals,
        "acceptance_rate": traj.acceptance_rate(),
        "mean_radial_increment": traj.radial_total / traj.steps as f64,
        "trace_records": traj.trace.len(),
        "reference_speed": reference_speed(&cfg),
    }));
    Ok(doc)
}

fn speed_details(cfg: &WalkConfig, runs: &[Trajectory], est: &SpeedEstimate) -> Result<Value, Error> {
    let accept: Vec<f64> = runs.iter().map(Trajectory::acceptance_rate).collect();
    let acc = mean_stderr(&accept);
    let mut details = json!({
        "steps": cfg.steps,
        "replicas": runs.len(),
        "acceptance_rate": { "mean": acc.mean, "stderr": acc.stderr },
        "min_replica_speed": runs.iter().map(Trajectory::speed).fold(f64::INFINITY, f64::min),
        "reference_speed": reference_speed(cfg),
    });
    if let Some(r) = reference_speed(cfg) {
        details["z_vs_reference"] = json!((est.v_hat - r) / est.stderr);
    }
    if cfg.steps as usize >= DEFAULT_DRIFT_WINDOW && DEFAULT_DRIFT_WINDOW % DRIFT_BLOCK == 0 {
        let prof = ensemble_drift_profile(runs, DEFAULT_DRIFT_WINDOW)?;
        let (tail, tail_se) = prof.tail().unwrap_or((f64::NAN, f64::NAN));
        details["drift"] = json!({
            "window": prof.window,
            "tail_mean": tail,
            "tail_stderr": tail_se,
            "windows_below_minus_3se": prof.negative_windows(3.0).len(),
            "means": prof.means,
            "stderrs": prof.stderrs,
        });
    }
    Ok(details)
}

fn cmd_speed(args: &CommonArgs) -> Result<SummaryDocument, Error> {
    let cfg = args.walk_config()?;
    let runs = replicas_or_fail(&cfg, args.replicas)?;
    let est = speed_estimate(&runs)?;
    let mut doc = SummaryDocument::new("speed", run_echo(&cfg, args.replicas));
    doc.v_hat = Some(est.v_hat);
    doc.stderr = Some(est.stderr);
    doc.ci95 = Some(est.ci95);
    if runs.len() >= MIN_DIRECTION_REPLICAS && !matches!(cfg.variant, Variant::Homogeneous { .. }) {
        let ds = direction_stats(&runs, DEFAULT_BINS)?;
        doc.direction = Some(json!({
            "test": if cfg.d == 2 { "chi_square_12_bins" } else { "rayleigh" },
            "statistic": ds.uniformity_statistic,
            "p_value": ds.p_value,
            "excluded": ds.excluded,
            "unit_vectors": to_value(&ds.unit_vectors),
        }));
    }
    doc.details = Some(speed_details(&cfg, &runs, &est)?);
    Ok(doc)
}

fn cmd_angle_chain(args: &ChainArgs) -> Result<SummaryDocument, Error> {
    let init = Angle::new(args.init).map_err(|e| Error::Validation(e.to_string()))?;
    if args.n < 1000 {
        return Err(Error::Validation(format!("--n must be ≥ 1000, got {}", args.n)));
    }
    let report = angle_chain::simulate_chain(args.n, args.seed, init, args.burnin)?;
    let mc = angle_chain::speed_2_1(SpeedMethod::ChainMc {
        n: args.n,
        seed: args.seed,
    })?;
    let quad = angle_chain::speed_2_1(SpeedMethod::Quadrature)?;
    let iteration = angle_chain::density_iteration(40, 4096)?;
    if let Some(p) = &args.samples {
        write_chain_samples(&report.sample.samples, p)?;
    }
    let mut doc = SummaryDocument::new(
        "angle-chain",
        json!({ "n": args.n, "seed": args.seed, "init": args.init, "burnin": args.burnin }),
    );
    doc.v_hat = Some(mc.value);
    doc.stderr = Some(mc.stderr);
    doc.ci95 = Some((mc.value - Z95 * mc.stderr, mc.value + Z95 * mc.stderr));
    doc.details = Some(json!({
        "ks": { "statistic": report.ks.statistic, "p_value": report.ks.p_value, "reference_cdf": "t(4π−t)/(3π²)" },
        "speed": {
            "closed_form": SPEED_2_1,
            "quadrature": quad.value,
            "chain_mc": mc.value,
            "chain_mc_stderr": mc.stderr,
        },
        "density_iteration": {
            "grid": iteration.grid,
            "sup_errors": iteration.errors,
            "mean_ratio": iteration.mean_ratio(),
        },
    }));
    Ok(doc)
}

fn write_chain_samples(samples: &[f64], path: &Path) -> Result<(), Error> {
    let mut text = String::with_capacity(samples.len() * 24);
    text.push_str("n,theta\n");
    for (i, t) in samples.iter().enumerate() {
        text.push_str(&format!("{i},{t}\n"));
    }
    std::fs::write(path, text).map_err(|e| {
        let _ = std::fs::remove_file(path);
        Error::from(e)
    })
}

fn split_runs(cfg: &WalkConfig, replicas: u64) -> Result<Vec<SplitRun>, Error> {
    use rayon::prelude::*;
    (0..replicas)
        .into_par_iter()
        .map(|r| run_split(&cfg.clone().with_replica(r)))
        .collect()
}

fn cmd_renewal(args: &CommonArgs) -> Result<SummaryDocument, Error> {
    let cfg = args.walk_config()?;
    let runs = split_runs(&cfg, args.replicas)?;
    let reports: Vec<_> = runs.iter().map(collect_renewals).collect();
    let total_renewals: usize = reports.iter().map(|r| r.records.len()).sum();
    let total_blocks: u64 = runs.iter().map(|r| r.blocks).sum();
    let good: u64 = runs.iter().map(|r| r.good_blocks).sum();
    let violations: usize = reports.iter().map(|r| r.bound_violations(3.0).len()).sum();
    let speeds: Vec<f64> = runs.iter().map(SplitRun::speed).collect();
    let mut doc = SummaryDocument::new("renewal", run_echo(&cfg, args.replicas));
    if speeds.len() >= 2 {
        let est = SpeedEstimate::from_speeds(&speeds, cfg.steps, config_fingerprint(&cfg))?;
        doc.v_hat = Some(est.v_hat);
        doc.stderr = Some(est.stderr);
        doc.ci95 = Some(est.ci95);
    } else {
        doc.v_hat = speeds.first().copied();
    }
    let params = runs.first().map(|r| r.params);
    doc.renewal = Some(json!({
        "alpha": params.map(|p| p.alpha),
        "c": reports.first().map(|r| r.c),
        "blocks": total_blocks,
        "renewals": total_renewals,
        "renewals_per_block": total_renewals as f64 / total_blocks.max(1) as f64,
        "alpha_squared": params.map(|p| p.alpha * p.alpha),
        "good_fraction": good as f64 / total_blocks.max(1) as f64,
        "survival_bound_violations": violations,
        "replicas": reports.iter().map(|r| json!({
            "records": to_value(&r.records),
            "survival": to_value(&r.survival),
        })).collect::<Vec<_>>(),
    }));
    Ok(doc)
}

fn cmd_crosscheck(args: &CommonArgs) -> Result<SummaryDocument, Error> {
    let mut args = args.clone();
    args.variant = VariantArg::Homogeneous;
    let cfg = args.walk_config()?;
    let ell = cfg.mode().ell().cloned().expect("homogeneous variant has ell");
    let split = split_runs(&cfg, args.replicas)?;
    let cc = crosscheck_renewal_speed(&split, &ell)?;
    // Independent plain replicas for the direct speed.
    let direct_cfg = cfg.clone().with_seed(cfg.seed ^ 0x5eed_0000_0000_0001);
    let plain = replicas_or_fail(&direct_cfg, args.replicas)?;
    let along: Vec<f64> = plain.iter().map(|t| t.final_position.dot(&ell) / t.steps as f64).collect();
    let direct = SpeedEstimate::from_speeds(&along, cfg.steps, config_fingerprint(&direct_cfg))?;
    let combined = (cc.v_stderr.powi(2) + direct.stderr.powi(2)).sqrt();
    let z = (cc.v_derived - direct.v_hat) / combined;
    let mut doc = SummaryDocument::new(
        "crosscheck",
        json!({ "split": run_echo(&cfg, args.replicas), "direct": run_echo(&direct_cfg, args.replicas) }),
    );
    doc.v_hat = Some(direct.v_hat);
    doc.stderr = Some(direct.stderr);
    doc.ci95 = Some(direct.ci95);
    doc.renewal = Some(to_value(&cc));
    doc.details = Some(json!({
        "v_derived": cc.v_derived,
        "v_derived_stderr": cc.v_stderr,
        "v_direct": direct.v_hat,
        "v_direct_stderr": direct.stderr,
        "z": z,
        "within_3_sigma": z.abs() < 3.0,
        "gap_lag1_bound": 3.0 / (cc.cycles as f64).sqrt(),
        "reference_speed": reference_speed(&cfg),
    }));
    Ok(doc)
}

fn cmd_sweep(args: &SweepArgs) -> Result<SummaryDocument, Error> {
    let min_k = *args.k_values.iter().min().ok_or_else(|| Error::Validation("empty --k-values".into()))?;
    let mut common = args.common.clone();
    common.k = min_k;
    let base = common.walk_config()?;
    let table = k_sweep(&base, &args.k_values, args.common.replicas)?;
    let mut echo = run_echo(&base, args.common.replicas);
    echo["k_values"] = json!(args.k_values);
    let mut doc = SummaryDocument::new("sweep-k", echo);
    if let Some(first) = table.rows.first() {
        doc.v_hat = Some(first.estimate.v_hat);
        doc.stderr = Some(first.estimate.stderr);
        doc.ci95 = Some(first.estimate.ci95);
    }
    doc.details = Some(to_value(&table));
    Ok(doc)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let threads = match &cli.command {
        Command::Walk(a) => a.common.threads,
        Command::Speed(a) | Command::Renewal(a) | Command::Crosscheck(a) => a.threads,
        Command::SweepK(a) => a.common.threads,
        Command::AngleChain(a) => a.threads,
    };
    let threads = thread_count(threads)?;
    let start = Instant::now();
    let (mut doc, out) = with_pool(threads, || -> Result<_, Error> {
        Ok(match &cli.command {
            Command::Walk(a) => (cmd_walk(a)?, a.summary.clone()),
            Command::Speed(a) => (cmd_speed(a)?, a.out.clone()),
            Command::AngleChain(a) => (cmd_angle_chain(a)?, a.out.clone()),
            Command::Renewal(a) => (cmd_renewal(a)?, a.out.clone()),
            Command::Crosscheck(a) => (cmd_crosscheck(a)?, a.out.clone()),
            Command::SweepK(a) => (cmd_sweep(a)?, a.common.out.clone()),
        })
    })??;
    doc.wall_clock_seconds = start.elapsed().as_secs_f64();
    emit(&doc, out.as_deref())
}

/// Parses `argv` (including the program name), runs the pipeline and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
