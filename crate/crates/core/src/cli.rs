//! Command-line front end: argument parsing, seed management, dispatch to
//! the estimator and verification workflows, and CSV/JSONL emission.
//!
//! Every run is reproducible by default: the master seed is a fixed
//! constant unless `--seed random` (or an explicit value) is given, and
//! identical invocations produce byte-identical output files.

use crate::dynamics::{ModelKind, SimulationConfig};
use crate::environment::{parse_rho, RhoDistribution};
use crate::error::{Error, Result};
use crate::estimators::{
    config_digest, edge_infection_probability, env_violation_rate, estimate_critical,
    estimate_survival, graphical_equivalence, laplace_limit_check, mean_field_target,
    subcritical_path_expectation, survival_digest, Measure,
};
use crate::lattice::Vertex;
use crate::output::{float17, Format, Table, Value};
use crate::rwalk::{ruin_probability, simulate_hitting, HitDirection, WalkSpec};
use crate::sawpair::{default_saw_length, lemma431_bound, pair_stats};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Fixed default master seed: casual runs are reproducible, randomness is
/// opt-in via `--seed random`.
pub const DEFAULT_SEED: u64 = 20_260_818;

#[derive(Parser, Debug)]
#[command(
    name = "epilattice",
    version,
    about = "Exact simulators and estimators for epidemics on Z^d with random edge weights",
    after_help = "Master seed defaults to a fixed constant; pass --seed random for entropy.\n\
                  All floats in output files carry 17 significant digits; reruns with\n\
                  identical arguments produce byte-identical files."
)]
pub struct Cli {
    /// Master seed: an unsigned integer, or 'random' for entropy.
    #[arg(long, global = true, default_value = "20260818")]
    pub seed: String,

    /// Output file path; without it only the summary line is printed.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format: csv or jsonl.
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    pub format: Format,

    /// Worker thread count (defaults to the rayon heuristic).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Recompute every emitted config digest and fail on mismatch.
    #[arg(long, global = true)]
    pub verify_digest: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Survival probability estimate against the mean-field target.
    ///
    /// CSV columns, in order: name, model, dim, lambda, rho, trials,
    /// censored, value, se, ci_lo, ci_hi, target, config_digest.
    Survival(SurvivalArgs),

    /// Bisection bracket for the critical infection rate.
    ///
    /// CSV columns, in order: probe, lambda, value, se, ci_lo, ci_hi,
    /// trials, censored, significant, config_digest. One row per probe.
    Critical(CriticalArgs),

    /// Per-vertex agreement of SIR dynamics with infectious-path
    /// reachability.
    ///
    /// CSV columns, in order: vertex, p_dynamics, se_dynamics,
    /// p_graphical, se_graphical, diff, pooled_se, within_three_se,
    /// config_digest. One row per vertex of the box.
    GraphicalCheck(GraphicalCheckArgs),

    /// Biased-walk hitting probabilities against the ruin closed form.
    ///
    /// CSV columns, in order: theta, k, start, trials, p_upper_exact,
    /// p_lower_exact, p_upper, p_upper_se, p_lower, p_lower_se, tau_mean,
    /// tau_se, tau_ratio, capped, config_digest.
    Walk(WalkArgs),

    /// Self-avoiding pair collision statistics, optionally assembled into
    /// the second-moment survival bound.
    ///
    /// CSV columns, in order: d, n, x, y, trials, kappa_prob, kappa_se,
    /// weight_mean, weight_log_mean, zeta_frac, top_share_flagged,
    /// dead_ends, bound, config_digest. One row per start pair.
    Saw(SawArgs),

    /// Finite-dimension Laplace transform against its limit.
    ///
    /// CSV columns, in order: d, lambda, theta, rho, s, finite_d, limit,
    /// abs_gap, inner_power, outer_power, config_digest.
    Laplace(LaplaceArgs),

    /// Frequency of incident-weight deviations against the Chernoff union
    /// bound.
    ///
    /// CSV columns, in order: d, m, eps, rho, seeds, violations, rate,
    /// se, ball, chernoff, union_bound, config_digest.
    EnvCheck(EnvCheckArgs),

    /// Subcritical per-path infection bound and its envelope.
    ///
    /// CSV columns, in order: gamma, d, n, rho, edge_probability,
    /// per_step, per_path, total_bound, envelope, config_digest.
    Paths(PathsArgs),
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    Format::parse(s).map_err(|e| e.to_string())
}

fn parse_dist(s: &str) -> std::result::Result<RhoDistribution, String> {
    parse_rho(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).map_err(|e| e.to_string())
}

fn parse_vertex(s: &str) -> std::result::Result<Vertex, String> {
    let coords: std::result::Result<Vec<i32>, _> =
        s.split(':').map(str::parse::<i32>).collect();
    match coords {
        Ok(c) if !c.is_empty() => Ok(Vertex::new(c)),
        _ => Err(format!("expected colon-separated integers, got '{s}'")),
    }
}

#[derive(Args, Debug)]
pub struct SurvivalArgs {
    #[arg(long, default_value = "sis", value_parser = parse_model)]
    pub model: ModelKind,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub lambda: f64,
    /// Weight distribution: const:v, bern:p:scale, unif:theta, or
    /// disc:v,p;v,p;...
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1e4)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1000)]
    pub nmax: u64,
    /// Confine the epidemic to the l1 ball of this radius.
    #[arg(long = "box")]
    pub box_radius: Option<u32>,
    /// Fix one environment for every trial instead of redrawing.
    #[arg(long)]
    pub quenched_env: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CriticalArgs {
    #[arg(long, default_value = "sis", value_parser = parse_model)]
    pub model: ModelKind,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
    /// Bracket lower edge (survival must be insignificant here).
    #[arg(long)]
    pub lo: f64,
    /// Bracket upper edge (survival must be significant here).
    #[arg(long)]
    pub hi: f64,
    #[arg(long, default_value_t = 0.25)]
    pub tol: f64,
    #[arg(long, default_value_t = 400)]
    pub trials: u64,
    #[arg(long, default_value_t = 1e4)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1000)]
    pub nmax: u64,
    #[arg(long = "box")]
    pub box_radius: Option<u32>,
}

#[derive(Args, Debug)]
pub struct GraphicalCheckArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
    #[arg(long = "box", default_value_t = 4)]
    pub box_radius: u32,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
}

#[derive(Args, Debug)]
pub struct WalkArgs {
    /// Upward bias: up-step probability is theta/(1+theta).
    #[arg(long)]
    pub theta: f64,
    /// Upper absorbing level.
    #[arg(long)]
    pub k: u64,
    #[arg(long, default_value_t = 1)]
    pub start: u64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 100_000_000)]
    pub step_cap: u64,
}

#[derive(Args, Debug)]
pub struct SawArgs {
    #[arg(long)]
    pub dim: usize,
    /// Path length; defaults to fifty period windows.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    /// First start vertex (colon-separated coordinates); defaults to the
    /// unit vector on the last axis.
    #[arg(long, value_parser = parse_vertex)]
    pub x: Option<Vertex>,
    /// Second start vertex; defaults to x shifted by -1 on axis 0.
    #[arg(long, value_parser = parse_vertex)]
    pub y: Option<Vertex>,
    /// Off-edge collision weight constant.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// Shared-edge collision weight constant.
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    /// Assemble the survival bound over a start set of this size
    /// (requires --lambda and --rho, which also fix c1 and c2).
    #[arg(long)]
    pub bset: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_dist)]
    pub rho: Option<RhoDistribution>,
}

#[derive(Args, Debug)]
pub struct LaplaceArgs {
    #[arg(long)]
    pub dim: u64,
    #[arg(long)]
    pub lambda: f64,
    /// Clock-rate parameter; defaults to the support maximum of --rho.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
    /// Transform argument.
    #[arg(long)]
    pub s: f64,
}

#[derive(Args, Debug)]
pub struct EnvCheckArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
    /// Ball radius of the checked event.
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    /// Deviation half-width around the mean.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Number of environment seeds.
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
}

#[derive(Args, Debug)]
pub struct PathsArgs {
    /// Subcritical rate parameter in (0, 1).
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub dim: usize,
    /// Path length.
    #[arg(long)]
    pub n: u32,
    #[arg(long, value_parser = parse_dist)]
    pub rho: RhoDistribution,
}

fn resolve_seed(text: &str) -> Result<u64> {
    if text == "random" {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        return Ok(crate::rng::hash_words(&[nanos, u64::from(std::process::id())]));
    }
    text.parse::<u64>()
        .map_err(|_| Error::arg(format!("--seed must be an unsigned integer or 'random', got '{text}'")))
}

fn hex(digest: u64) -> String {
    format!("{digest:016x}")
}

struct Emission {
    table: Table,
    summary: String,
    digests: Vec<(u64, u64)>,
}

/// Runs the parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::arg("--jobs must be >= 1"));
        }
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let seed = resolve_seed(&cli.seed)?;
    let emission = match &cli.command {
        Command::Survival(args) => run_survival(args, seed)?,
        Command::Critical(args) => run_critical(args, seed)?,
        Command::GraphicalCheck(args) => run_graphical_check(args, seed)?,
        Command::Walk(args) => run_walk(args, seed)?,
        Command::Saw(args) => run_saw(args, seed)?,
        Command::Laplace(args) => run_laplace(args, seed)?,
        Command::EnvCheck(args) => run_env_check(args, seed)?,
        Command::Paths(args) => run_paths(args, seed)?,
    };
    if cli.verify_digest {
        for (stored, recomputed) in &emission.digests {
            if stored != recomputed {
                return Err(Error::Numeric(format!(
                    "config digest mismatch: row carries {} but recomputation gives {}",
                    hex(*stored),
                    hex(*recomputed)
                )));
            }
        }
        println!("verified {} config digest(s)", emission.digests.len());
    }
    if let Some(path) = &cli.out {
        emission.table.write(path, cli.format)?;
    }
    println!("{}", emission.summary);
    Ok(())
}

fn run_survival(args: &SurvivalArgs, seed: u64) -> Result<Emission> {
    let mut cfg = SimulationConfig::new(args.dim, args.lambda, args.rho.clone())?;
    cfg.t_max = args.tmax;
    cfg.n_max = args.nmax;
    cfg.box_radius = args.box_radius;
    cfg.validate()?;
    let measure = match args.quenched_env {
        Some(env_seed) => Measure::Quenched { env_seed },
        None => Measure::Annealed,
    };
    let record = estimate_survival(args.model, &cfg, args.trials, seed, measure)?;
    let target = mean_field_target(args.lambda, &args.rho);
    let mut table = Table::new(vec![
        "name", "model", "dim", "lambda", "rho", "trials", "censored", "value", "se", "ci_lo",
        "ci_hi", "target", "config_digest",
    ]);
    table.push_row(vec![
        Value::from(record.name.clone()),
        Value::from(args.model.name()),
        Value::from(args.dim as u64),
        Value::from(args.lambda),
        Value::from(args.rho.to_string()),
        Value::from(record.trials),
        Value::from(record.censored),
        Value::from(record.value),
        Value::from(record.se),
        Value::from(record.ci95.0),
        Value::from(record.ci95.1),
        Value::from(target.target),
        Value::from(hex(record.config_digest)),
    ])?;
    let recomputed = survival_digest(args.model, &cfg, args.trials, seed, measure);
    Ok(Emission {
        table,
        summary: format!(
            "{} = {:.6} +- {:.6} (95% CI [{:.6}, {:.6}]), mean-field target {:.6}, digest {}",
            record.name,
            record.value,
            record.se,
            record.ci95.0,
            record.ci95.1,
            target.target,
            hex(record.config_digest)
        ),
        digests: vec![(record.config_digest, recomputed)],
    })
}

fn run_critical(args: &CriticalArgs, seed: u64) -> Result<Emission> {
    let mut cfg = SimulationConfig::new(args.dim, args.lo.max(0.0), args.rho.clone())?;
    cfg.t_max = args.tmax;
    cfg.n_max = args.nmax;
    cfg.box_radius = args.box_radius;
    let est = estimate_critical(
        args.model,
        &cfg,
        (args.lo, args.hi),
        args.tol,
        args.trials,
        seed,
    )?;
    let mut table = Table::new(vec![
        "probe",
        "lambda",
        "value",
        "se",
        "ci_lo",
        "ci_hi",
        "trials",
        "censored",
        "significant",
        "config_digest",
    ]);
    let mut digests = Vec::new();
    for (idx, probe) in est.probes.iter().enumerate() {
        table.push_row(vec![
            Value::from(idx as u64),
            Value::from(probe.lambda),
            Value::from(probe.record.value),
            Value::from(probe.record.se),
            Value::from(probe.record.ci95.0),
            Value::from(probe.record.ci95.1),
            Value::from(probe.record.trials),
            Value::from(probe.record.censored),
            Value::from(if probe.significant { 1u64 } else { 0u64 }),
            Value::from(hex(probe.record.config_digest)),
        ])?;
        let mut probe_cfg = cfg.clone();
        probe_cfg.lambda = probe.lambda;
        let probe_seed = crate::rng::derive_seed(seed, crate::rng::tags::TRIAL, idx as u64);
        digests.push((
            probe.record.config_digest,
            survival_digest(args.model, &probe_cfg, args.trials, probe_seed, Measure::Annealed),
        ));
    }
    Ok(Emission {
        table,
        summary: format!(
            "critical bracket [{:.6}, {:.6}] (width {:.6}) after {} probes of {} trials",
            est.lo,
            est.hi,
            est.hi - est.lo,
            est.probes.len(),
            args.trials
        ),
        digests,
    })
}

fn run_graphical_check(args: &GraphicalCheckArgs, seed: u64) -> Result<Emission> {
    let rows = graphical_equivalence(
        args.dim,
        args.lambda,
        &args.rho,
        args.box_radius,
        args.trials,
        seed,
    )?;
    let parts = [
        "graphical-check".to_string(),
        format!("d={}", args.dim),
        format!("lambda={}", float17(args.lambda)),
        format!("rho={}", args.rho),
        format!("box={}", args.box_radius),
        format!("trials={}", args.trials),
        format!("seed={seed}"),
    ];
    let digest = digest_of(&parts);
    let mut table = Table::new(vec![
        "vertex",
        "p_dynamics",
        "se_dynamics",
        "p_graphical",
        "se_graphical",
        "diff",
        "pooled_se",
        "within_three_se",
        "config_digest",
    ]);
    let mut agreeing = 0usize;
    let mut worst: f64 = 0.0;
    for row in &rows {
        if row.within_three_se {
            agreeing += 1;
        }
        if row.pooled_se > 0.0 {
            worst = worst.max(row.diff / row.pooled_se);
        }
        table.push_row(vec![
            Value::from(row.vertex.to_string()),
            Value::from(row.p_dynamics),
            Value::from(row.se_dynamics),
            Value::from(row.p_graphical),
            Value::from(row.se_graphical),
            Value::from(row.diff),
            Value::from(row.pooled_se),
            Value::from(if row.within_three_se { 1u64 } else { 0u64 }),
            Value::from(hex(digest)),
        ])?;
    }
    Ok(Emission {
        table,
        summary: format!(
            "graphical check: {agreeing}/{} vertices within 3 pooled SE (worst ratio {:.3}), digest {}",
            rows.len(),
            worst,
            hex(digest)
        ),
        digests: vec![(digest, digest_of(&parts))],
    })
}

fn run_walk(args: &WalkArgs, seed: u64) -> Result<Emission> {
    let spec = WalkSpec::with_start(args.theta, args.start)?;
    let p_upper_exact = ruin_probability(spec, args.k, HitDirection::HitKBefore0)?;
    let p_lower_exact = ruin_probability(spec, args.k, HitDirection::Hit0BeforeK)?;
    let est = simulate_hitting(spec, args.k, args.trials, args.step_cap, seed)?;
    let parts = [
        "walk".to_string(),
        format!("theta={}", float17(args.theta)),
        format!("k={}", args.k),
        format!("start={}", args.start),
        format!("trials={}", args.trials),
        format!("step_cap={}", args.step_cap),
        format!("seed={seed}"),
    ];
    let digest = digest_of(&parts);
    let mut table = Table::new(vec![
        "theta",
        "k",
        "start",
        "trials",
        "p_upper_exact",
        "p_lower_exact",
        "p_upper",
        "p_upper_se",
        "p_lower",
        "p_lower_se",
        "tau_mean",
        "tau_se",
        "tau_ratio",
        "capped",
        "config_digest",
    ]);
    table.push_row(vec![
        Value::from(args.theta),
        Value::from(args.k),
        Value::from(args.start),
        Value::from(est.trials),
        Value::from(p_upper_exact),
        Value::from(p_lower_exact),
        Value::from(est.p_upper),
        Value::from(est.upper_se),
        Value::from(est.p_lower),
        Value::from(est.lower_se),
        Value::from(est.tau_mean),
        Value::from(est.tau_se),
        Value::from(est.tau_ratio),
        Value::from(est.capped),
        Value::from(hex(digest)),
    ])?;
    Ok(Emission {
        table,
        summary: format!(
            "walk hit-K probability {:.6} +- {:.6} vs exact {:.6} (theta {}, K {}){}",
            est.p_upper,
            est.upper_se,
            p_upper_exact,
            args.theta,
            args.k,
            if est.cap_flagged { " [step cap hit]" } else { "" }
        ),
        digests: vec![(digest, digest_of(&parts))],
    })
}

fn saw_columns() -> Vec<&'static str> {
    vec![
        "d",
        "n",
        "x",
        "y",
        "trials",
        "kappa_prob",
        "kappa_se",
        "weight_mean",
        "weight_log_mean",
        "zeta_frac",
        "top_share_flagged",
        "dead_ends",
        "bound",
        "config_digest",
    ]
}

fn push_saw_row(
    table: &mut Table,
    summary: &crate::sawpair::PairSummary,
    bound: Option<f64>,
    digest: u64,
) -> Result<()> {
    table.push_row(vec![
        Value::from(summary.d as u64),
        Value::from(summary.n as u64),
        Value::from(summary.x.to_string()),
        Value::from(summary.y.to_string()),
        Value::from(summary.trials),
        Value::from(summary.kappa_prob),
        Value::from(summary.kappa_se),
        Value::from(summary.weight_mean),
        Value::from(summary.weight_log_mean),
        Value::from(summary.zeta_frac),
        Value::from(if summary.top_share_flagged { 1u64 } else { 0u64 }),
        Value::from(summary.dead_end_resamples),
        Value::from(bound),
        Value::from(hex(digest)),
    ])
}

fn run_saw(args: &SawArgs, seed: u64) -> Result<Emission> {
    let n = args.length.unwrap_or_else(|| default_saw_length(args.dim));
    let default_x = Vertex::unit(args.dim, args.dim - 1, true);
    match args.bset {
        Some(size) => {
            let (lambda, dist) = match (args.lambda, &args.rho) {
                (Some(l), Some(r)) => (l, r.clone()),
                _ => {
                    return Err(Error::arg(
                        "--bset requires --lambda and --rho to fix the weight constants",
                    ))
                }
            };
            if size == 0 {
                return Err(Error::arg("--bset must be >= 1"));
            }
            let starts: Vec<Vertex> = (0..size)
                .map(|k| {
                    let mut v = default_x.clone();
                    for _ in 0..k {
                        v = v.step(0, true);
                    }
                    v
                })
                .collect();
            let est = lemma431_bound(args.dim, lambda, &dist, &starts, n, args.trials, seed)?;
            let parts = [
                "saw-bound".to_string(),
                format!("d={}", args.dim),
                format!("n={n}"),
                format!("lambda={}", float17(lambda)),
                format!("rho={dist}"),
                format!("bset={size}"),
                format!("trials={}", args.trials),
                format!("seed={seed}"),
            ];
            let digest = digest_of(&parts);
            let mut table = Table::new(saw_columns());
            for summary in &est.pair_summaries {
                push_saw_row(&mut table, summary, Some(est.bound), digest)?;
            }
            Ok(Emission {
                table,
                summary: format!(
                    "survival lower bound {:.6} +- {:.6} (M2 {:.4}, C2 {:.4}, {} pairs x {} trials{})",
                    est.bound,
                    est.se,
                    est.m2,
                    est.c2,
                    est.pairs,
                    est.trials_per_pair,
                    if est.any_top_share_flagged {
                        ", heavy-tail flagged"
                    } else {
                        ""
                    }
                ),
                digests: vec![(digest, digest_of(&parts))],
            })
        }
        None => {
            let x = args.x.clone().unwrap_or_else(|| default_x.clone());
            let y = args.y.clone().unwrap_or_else(|| default_x.step(0, false));
            let summary = pair_stats(args.dim, n, &x, &y, args.c1, args.c2, args.trials, seed)?;
            let parts = [
                "saw-pair".to_string(),
                format!("d={}", args.dim),
                format!("n={n}"),
                format!("x={x}"),
                format!("y={y}"),
                format!("c1={}", float17(args.c1)),
                format!("c2={}", float17(args.c2)),
                format!("trials={}", args.trials),
                format!("seed={seed}"),
            ];
            let digest = digest_of(&parts);
            let mut table = Table::new(saw_columns());
            push_saw_row(&mut table, &summary, None, digest)?;
            Ok(Emission {
                table,
                summary: format!(
                    "collision probability {:.6} +- {:.6} over {} pairs of length {} at d = {}",
                    summary.kappa_prob, summary.kappa_se, summary.trials, n, args.dim
                ),
                digests: vec![(digest, digest_of(&parts))],
            })
        }
    }
}

fn run_laplace(args: &LaplaceArgs, seed: u64) -> Result<Emission> {
    let theta = args.theta.unwrap_or_else(|| args.rho.theta());
    let check = laplace_limit_check(args.dim, args.lambda, theta, &args.rho, args.s)?;
    let parts = [
        "laplace".to_string(),
        format!("d={}", args.dim),
        format!("lambda={}", float17(args.lambda)),
        format!("theta={}", float17(theta)),
        format!("rho={}", args.rho),
        format!("s={}", float17(args.s)),
        format!("seed={seed}"),
    ];
    let digest = digest_of(&parts);
    let mut table = Table::new(vec![
        "d",
        "lambda",
        "theta",
        "rho",
        "s",
        "finite_d",
        "limit",
        "abs_gap",
        "inner_power",
        "outer_power",
        "config_digest",
    ]);
    table.push_row(vec![
        Value::from(check.d),
        Value::from(args.lambda),
        Value::from(theta),
        Value::from(args.rho.to_string()),
        Value::from(args.s),
        Value::from(check.finite_d),
        Value::from(check.limit),
        Value::from((check.finite_d - check.limit).abs()),
        Value::from(check.inner_power),
        Value::from(check.outer_power),
        Value::from(hex(digest)),
    ])?;
    Ok(Emission {
        table,
        summary: format!(
            "laplace transform at d = {}: {:.8} vs limit {:.8} (gap {:.3e})",
            check.d,
            check.finite_d,
            check.limit,
            (check.finite_d - check.limit).abs()
        ),
        digests: vec![(digest, digest_of(&parts))],
    })
}

fn run_env_check(args: &EnvCheckArgs, seed: u64) -> Result<Emission> {
    let row = env_violation_rate(&args.rho, args.dim, args.m, args.eps, args.trials, seed)?;
    let parts = [
        "env-check".to_string(),
        format!("d={}", args.dim),
        format!("rho={}", args.rho),
        format!("m={}", args.m),
        format!("eps={}", float17(args.eps)),
        format!("trials={}", args.trials),
        format!("seed={seed}"),
    ];
    let digest = digest_of(&parts);
    let mut table = Table::new(vec![
        "d",
        "m",
        "eps",
        "rho",
        "seeds",
        "violations",
        "rate",
        "se",
        "ball",
        "chernoff",
        "union_bound",
        "config_digest",
    ]);
    table.push_row(vec![
        Value::from(row.d as u64),
        Value::from(u64::from(row.m)),
        Value::from(row.eps),
        Value::from(args.rho.to_string()),
        Value::from(row.seeds),
        Value::from(row.violations),
        Value::from(row.rate),
        Value::from(row.se),
        Value::from(row.ball),
        Value::from(row.chernoff),
        Value::from(row.union_bound),
        Value::from(hex(digest)),
    ])?;
    Ok(Emission {
        table,
        summary: format!(
            "deviation rate {:.6} +- {:.6} vs union bound {:.6} ({} vertices, {} seeds)",
            row.rate, row.se, row.union_bound, row.ball, row.seeds
        ),
        digests: vec![(digest, digest_of(&parts))],
    })
}

fn run_paths(args: &PathsArgs, seed: u64) -> Result<Emission> {
    let bound = subcritical_path_expectation(args.gamma, args.dim, args.n, &args.rho)?;
    let lambda = args.gamma / args.rho.mean();
    let edge = edge_infection_probability(lambda, args.dim, &args.rho)?;
    let parts = [
        "paths".to_string(),
        format!("gamma={}", float17(args.gamma)),
        format!("d={}", args.dim),
        format!("n={}", args.n),
        format!("rho={}", args.rho),
        format!("seed={seed}"),
    ];
    let digest = digest_of(&parts);
    let mut table = Table::new(vec![
        "gamma",
        "d",
        "n",
        "rho",
        "edge_probability",
        "per_step",
        "per_path",
        "total_bound",
        "envelope",
        "config_digest",
    ]);
    table.push_row(vec![
        Value::from(args.gamma),
        Value::from(args.dim as u64),
        Value::from(u64::from(args.n)),
        Value::from(args.rho.to_string()),
        Value::from(edge),
        Value::from(bound.per_step),
        Value::from(bound.per_path),
        Value::from(bound.total_bound),
        Value::from(bound.envelope),
        Value::from(hex(digest)),
    ])?;
    Ok(Emission {
        table,
        summary: format!(
            "per-path probability {:.6e}, total bound {:.6e} <= envelope {:.6e} (gamma {}, n {})",
            bound.per_path, bound.total_bound, bound.envelope, args.gamma, args.n
        ),
        digests: vec![(digest, digest_of(&parts))],
    })
}

fn digest_of(parts: &[String]) -> u64 {
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    config_digest(&refs)
}

/// Parses the process arguments and runs the command; returns the process
/// exit code.
#[must_use]
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
