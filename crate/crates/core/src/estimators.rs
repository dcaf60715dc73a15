//! Estimators connecting the simulators to the limit statements: survival
//! probabilities against the mean-field target, critical-value brackets,
//! the finite-dimension Laplace transform and its limit, the subcritical
//! path-count bound, and the dynamics-versus-reachability equivalence
//! check.

use crate::dynamics::{
    ever_infected_probabilities, simulate_epidemic, ModelKind, SimulationConfig, Verdict,
};
use crate::environment::{chernoff_bound, check_env_event, DeviationSide, EnvEventKind, RhoDistribution, WeightField};
use crate::error::{Error, Result};
use crate::graphical::{infectious_reachable, GraphicalField, SubgraphFilter};
use crate::lattice::{ball_enumerate, ball_size, Vertex};
use crate::numeric::{adaptive_simpson, binomial_se, wilson_interval, Z95};
use crate::output::float17;
use crate::rng::{derive_seed, hash_bytes, tags};
use rayon::prelude::*;

/// Wilson lower bound above which a survival probe counts as significant.
pub const SURVIVAL_SIGNIFICANCE_LB: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub name: String,
    pub value: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub trials: u64,
    pub censored: u64,
    pub config_digest: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldTarget {
    pub lambda: f64,
    pub e_rho: f64,
    pub target: f64,
}

/// (lambda E rho - 1) / (lambda E rho), clamped to [0, 1). Exactly zero
/// at and below the mean-field threshold lambda E rho = 1.
#[must_use]
pub fn mean_field_target(lambda: f64, dist: &RhoDistribution) -> MeanFieldTarget {
    let e_rho = dist.mean();
    let product = lambda * e_rho;
    let target = if product <= 1.0 {
        0.0
    } else {
        (product - 1.0) / product
    };
    MeanFieldTarget {
        lambda,
        e_rho,
        target,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Fresh environment per trial.
    Annealed,
    /// One fixed environment for every trial.
    Quenched { env_seed: u64 },
}

impl Measure {
    fn label(&self) -> String {
        match self {
            Measure::Annealed => "annealed".to_string(),
            Measure::Quenched { env_seed } => format!("quenched:{env_seed}"),
        }
    }
}

/// Digest of a survival-run configuration, embedded in its record and
/// recomputable for verification.
#[must_use]
pub fn survival_digest(
    model: ModelKind,
    cfg: &SimulationConfig,
    trials: u64,
    master_seed: u64,
    measure: Measure,
) -> u64 {
    let text = format!(
        "{};trials={trials};seed={master_seed};measure={}",
        cfg.digest_string(model),
        measure.label()
    );
    hash_bytes(text.as_bytes())
}

/// Fraction of trials censored at the population cap, as a survival
/// proxy, with a Wilson 95% interval.
pub fn estimate_survival(
    model: ModelKind,
    cfg: &SimulationConfig,
    trials: u64,
    master_seed: u64,
    measure: Measure,
) -> Result<EstimateRecord> {
    cfg.validate()?;
    if trials < 100 {
        return Err(Error::arg(format!(
            "survival estimation needs at least 100 trials, got {trials}"
        )));
    }
    let verdicts: Result<Vec<Verdict>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let env_seed = match measure {
                Measure::Annealed => derive_seed(master_seed, tags::ENV, i),
                Measure::Quenched { env_seed } => env_seed,
            };
            let env = WeightField::new(env_seed, cfg.dist.clone());
            let dyn_seed = derive_seed(master_seed, tags::DYN, i);
            Ok(simulate_epidemic(model, cfg, &env, dyn_seed)?.verdict)
        })
        .collect();
    let verdicts = verdicts?;
    let censored = verdicts
        .iter()
        .filter(|v| **v == Verdict::CensoredSurvived)
        .count() as u64;
    Ok(EstimateRecord {
        name: format!("survival_{}", model.name()),
        value: censored as f64 / trials as f64,
        se: binomial_se(censored, trials),
        ci95: wilson_interval(censored, trials, Z95),
        trials,
        censored,
        config_digest: survival_digest(model, cfg, trials, master_seed, measure),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub lambda: f64,
    pub record: EstimateRecord,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEstimate {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub trials_per_probe: u64,
    pub probes: Vec<ProbeRecord>,
}

/// Bisects the infection rate on the survival-significance rule: a probe
/// counts as surviving when its Wilson lower bound exceeds
/// [`SURVIVAL_SIGNIFICANCE_LB`]. The bracket must straddle the transition
/// (insignificant at `lo`, significant at `hi`).
pub fn estimate_critical(
    model: ModelKind,
    cfg_template: &SimulationConfig,
    bracket: (f64, f64),
    tol: f64,
    trials_per_probe: u64,
    master_seed: u64,
) -> Result<CriticalEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(lo >= 0.0) {
        return Err(Error::arg(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    let mut probes = Vec::new();
    let probe = |lambda: f64, probes: &mut Vec<ProbeRecord>| -> Result<bool> {
        let mut cfg = cfg_template.clone();
        cfg.lambda = lambda;
        let probe_seed = derive_seed(master_seed, tags::TRIAL, probes.len() as u64);
        let record = estimate_survival(model, &cfg, trials_per_probe, probe_seed, Measure::Annealed)?;
        let significant = record.ci95.0 > SURVIVAL_SIGNIFICANCE_LB;
        probes.push(ProbeRecord {
            lambda,
            record,
            significant,
        });
        Ok(significant)
    };
    let lo_significant = probe(lo, &mut probes)?;
    let hi_significant = probe(hi, &mut probes)?;
    if lo_significant || !hi_significant {
        let describe = |p: &ProbeRecord| {
            format!(
                "lambda = {}: survival {} (95% CI [{}, {}], {} trials)",
                p.lambda, p.record.value, p.record.ci95.0, p.record.ci95.1, p.record.trials
            )
        };
        return Err(Error::Bracket(format!(
            "bracket does not straddle the transition: {}; {}",
            describe(&probes[0]),
            describe(&probes[1])
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CriticalEstimate {
        lo,
        hi,
        tol,
        trials_per_probe,
        probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceCheck {
    pub finite_d: f64,
    pub limit: f64,
    pub d: u64,
    pub inner_power: u64,
    pub outer_power: u64,
}

/// Finite-dimension Laplace transform of the scaled second-generation
/// count against its high-dimension limit exp(-lambda s E rho / (2 (lambda
/// Theta + 1))). `theta` is the clock-rate parameter and may exceed the
/// support maximum of `dist`. Pure quadrature; no lattice state involved.
pub fn laplace_limit_check(
    d: u64,
    lambda: f64,
    theta: f64,
    dist: &RhoDistribution,
    s: f64,
) -> Result<LaplaceCheck> {
    if d < 2 {
        return Err(Error::arg(format!("dimension must be >= 2, got {d}")));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::arg(format!("transform argument must be >= 0, got {s}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::arg(format!("infection rate must be >= 0, got {lambda}")));
    }
    if theta < dist.theta() {
        return Err(Error::arg(format!(
            "theta = {theta} below the weight support maximum {}",
            dist.theta()
        )));
    }
    let d_f = d as f64;
    let inner_power = (d_f / d_f.ln()).floor();
    let outer_power = crate::numeric::floor_nth_root(d, 3);
    let rate = 1.0 + lambda * theta;
    let e_rho = dist.mean();
    let limit = (-lambda * s * e_rho / (2.0 * (lambda * theta + 1.0))).exp();
    if s == 0.0 {
        return Ok(LaplaceCheck {
            finite_d: 1.0,
            limit: 1.0,
            d,
            inner_power: inner_power as u64,
            outer_power,
        });
    }
    let scale = -(-s * d_f.ln() / d_f.cbrt()).exp_m1();
    let integrand = move |t: f64| {
        let g = dist.one_minus_laplace(lambda * t / (2.0 * d_f));
        rate * (-rate * t + inner_power * (-scale * g).ln_1p()).exp()
    };
    let horizon = 45.0 / rate;
    let inner = adaptive_simpson(&integrand, 0.0, horizon, 1e-12)?;
    if !(inner > 0.0) || inner > 1.0 + 1e-9 {
        return Err(Error::Numeric(format!(
            "inner transform evaluated to {inner} at d = {d}, s = {s}"
        )));
    }
    let finite_d = (outer_power as f64 * inner.ln()).exp();
    Ok(LaplaceCheck {
        finite_d,
        limit,
        d,
        inner_power: inner_power as u64,
        outer_power,
    })
}

/// Annealed probability that a directed edge transmits before its source
/// recovers: (lambda/2d) E[rho / (1 + lambda rho / 2d)].
pub fn edge_infection_probability(lambda: f64, d: usize, dist: &RhoDistribution) -> Result<f64> {
    if d == 0 {
        return Err(Error::arg("dimension must be >= 1"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::arg(format!("infection rate must be >= 0, got {lambda}")));
    }
    let a = lambda / (2.0 * d as f64);
    Ok(a * dist.damped_mean(a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubcriticalBound {
    pub per_step: f64,
    pub per_path: f64,
    pub total_bound: f64,
    pub envelope: f64,
}

/// Expected infectious-path weight at the subcritical rate gamma / E rho:
/// per_path is the annealed probability that one fixed n-step path is
/// infectious, total_bound multiplies by the (2d)^n path count, and the
/// envelope gamma^n dominates it.
pub fn subcritical_path_expectation(
    gamma: f64,
    d: usize,
    n: u32,
    dist: &RhoDistribution,
) -> Result<SubcriticalBound> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if d == 0 {
        return Err(Error::arg("dimension must be >= 1"));
    }
    let e_rho = dist.mean();
    if e_rho <= 0.0 {
        return Err(Error::arg("weight distribution must have positive mean"));
    }
    let a = gamma / (2.0 * d as f64 * e_rho);
    let per_step = a * dist.damped_mean(a);
    let per_path = per_step.powi(n as i32);
    let total_bound = (2.0 * d as f64 * per_step).powi(n as i32);
    let envelope = gamma.powi(n as i32);
    Ok(SubcriticalBound {
        per_step,
        per_path,
        total_bound,
        envelope,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub vertex: Vertex,
    pub p_dynamics: f64,
    pub se_dynamics: f64,
    pub p_graphical: f64,
    pub se_graphical: f64,
    pub diff: f64,
    pub pooled_se: f64,
    pub within_three_se: bool,
}

/// Per-vertex ever-infected probability from SIR dynamics against the
/// infectious-path reachability probability from independent graphical
/// fields, over every vertex of the l1 ball of radius `box_radius`. The
/// two laws coincide, so the estimates must agree within Monte Carlo
/// error at every vertex.
pub fn graphical_equivalence(
    d: usize,
    lambda: f64,
    dist: &RhoDistribution,
    box_radius: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<EquivalenceRow>> {
    if trials == 0 {
        return Err(Error::arg("trials must be >= 1"));
    }
    let budget = ball_size(d, box_radius).saturating_mul(2).max(1024) as usize;
    let targets = ball_enumerate(d, box_radius, budget as u64)?;
    let mut cfg = SimulationConfig::new(d, lambda, dist.clone())?;
    cfg.box_radius = Some(box_radius);
    cfg.n_max = ball_size(d, box_radius) + 1;
    let dynamics_master = derive_seed(master_seed, 0xD1, 0);
    let graphical_master = derive_seed(master_seed, 0x61, 0);
    let dyn_estimates =
        ever_infected_probabilities(ModelKind::Sir, &cfg, trials, &targets, dynamics_master)?;
    let reach_hits: Result<Vec<Vec<bool>>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let env_seed = derive_seed(graphical_master, tags::ENV, i);
            let env = WeightField::new(env_seed, dist.clone());
            let field = GraphicalField::new(env, lambda, d, derive_seed(graphical_master, tags::TRIAL, i))?;
            let outcome = infectious_reachable(
                &field,
                &[Vertex::origin(d)],
                SubgraphFilter::Box(box_radius),
                budget,
                None,
            )?;
            Ok(targets.iter().map(|t| outcome.contains(t)).collect())
        })
        .collect();
    let reach_hits = reach_hits?;
    let rows = targets
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let hits = reach_hits.iter().filter(|row| row[j]).count() as u64;
            let p_graphical = hits as f64 / trials as f64;
            let se_graphical = binomial_se(hits, trials);
            let dyn_est = &dyn_estimates[j];
            let diff = (dyn_est.p_hat - p_graphical).abs();
            let pooled_se = (dyn_est.se.powi(2) + se_graphical.powi(2)).sqrt();
            EquivalenceRow {
                vertex: t.clone(),
                p_dynamics: dyn_est.p_hat,
                se_dynamics: dyn_est.se,
                p_graphical,
                se_graphical,
                diff,
                pooled_se,
                within_three_se: diff <= 3.0 * pooled_se,
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpRow {
    pub d: usize,
    pub m: u32,
    pub eps: f64,
    pub seeds: u64,
    pub violations: u64,
    pub rate: f64,
    pub se: f64,
    pub ball: u64,
    pub chernoff: f64,
    pub union_bound: f64,
}

/// Empirical probability that some vertex of the m-ball has an incident
/// weight sum outside 2d (mean +- eps), against the per-vertex Chernoff
/// bound times the ball size.
pub fn env_violation_rate(
    dist: &RhoDistribution,
    d: usize,
    m: u32,
    eps: f64,
    seeds: u64,
    master_seed: u64,
) -> Result<LdpRow> {
    if seeds == 0 {
        return Err(Error::arg("needs at least one seed"));
    }
    let below = chernoff_bound(dist, eps, d, DeviationSide::Below)?;
    let above = chernoff_bound(dist, eps, d, DeviationSide::Above)?;
    let violations: Result<Vec<bool>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let env = WeightField::new(derive_seed(master_seed, tags::ENV, i), dist.clone());
            let ok_below = check_env_event(&env, EnvEventKind::AllAbove, d, m, eps)?;
            let ok_above = check_env_event(&env, EnvEventKind::AllBelow, d, m, eps)?;
            Ok(!(ok_below && ok_above))
        })
        .collect();
    let violations = violations?.into_iter().filter(|v| *v).count() as u64;
    let ball = ball_size(d, m);
    Ok(LdpRow {
        d,
        m,
        eps,
        seeds,
        violations,
        rate: violations as f64 / seeds as f64,
        se: binomial_se(violations, seeds),
        ball,
        chernoff: below + above,
        union_bound: ball as f64 * (below + above),
    })
}

/// Digest of a canonical parameter list, for embedding in output rows.
/// Parts are hashed individually, so the boundary between parts matters.
#[must_use]
pub fn config_digest(parts: &[&str]) -> u64 {
    let words: Vec<u64> = parts.iter().map(|p| hash_bytes(p.as_bytes())).collect();
    crate::rng::hash_words(&words)
}

/// Canonical float formatting for digest strings.
#[must_use]
pub fn digest_float(x: f64) -> String {
    float17(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::sample_q_event;
    use crate::rng::Stream;
    use approx::assert_relative_eq;

    #[test]
    fn mean_field_target_matches_formula_and_clamp() {
        let unit = RhoDistribution::constant(1.0).unwrap();
        assert_eq!(mean_field_target(2.0, &unit).target, 0.5);
        assert_eq!(mean_field_target(1.0, &unit).target, 0.0);
        assert_eq!(mean_field_target(0.5, &unit).target, 0.0);
        let half = RhoDistribution::bernoulli(0.5, 1.0).unwrap();
        assert_eq!(mean_field_target(2.0, &half).target, 0.0);
        assert_relative_eq!(mean_field_target(4.0, &half).target, 0.5);
        assert!(mean_field_target(1e12, &unit).target < 1.0);
    }

    #[test]
    fn wilson_intervals_cover_at_least_93_percent() {
        let n = 500u64;
        for p in [0.1, 0.5, 0.9] {
            let mut covered = 0u64;
            let reps = 1000u64;
            let mut stream = Stream::new(0xC0FE + (p * 10.0) as u64);
            for _ in 0..reps {
                let mut hits = 0u64;
                for _ in 0..n {
                    if stream.next_f64() < p {
                        hits += 1;
                    }
                }
                let (lo, hi) = wilson_interval(hits, n, Z95);
                if lo <= p && p <= hi {
                    covered += 1;
                }
            }
            let coverage = covered as f64 / reps as f64;
            assert!(coverage >= 0.93, "coverage {coverage} at p = {p}");
        }
    }

    #[test]
    fn survival_estimate_is_zero_without_infections() {
        let cfg = SimulationConfig::new(2, 0.0, RhoDistribution::constant(1.0).unwrap()).unwrap();
        let rec = estimate_survival(ModelKind::Sis, &cfg, 150, 3, Measure::Annealed).unwrap();
        assert_eq!(rec.value, 0.0);
        assert_eq!(rec.censored, 0);
        assert_eq!(rec.trials, 150);
        assert!(rec.ci95.0 <= 0.0 && rec.ci95.1 >= 0.0);
        assert!(rec.ci95.0 <= rec.value && rec.value <= rec.ci95.1);
        assert!(estimate_survival(ModelKind::Sis, &cfg, 99, 3, Measure::Annealed).is_err());
    }

    #[test]
    fn survival_estimates_are_deterministic_and_digest_keyed() {
        let mut cfg = SimulationConfig::new(2, 1.8, RhoDistribution::constant(1.0).unwrap()).unwrap();
        cfg.n_max = 80;
        cfg.t_max = 100.0;
        let a = estimate_survival(ModelKind::Sis, &cfg, 200, 5, Measure::Annealed).unwrap();
        let b = estimate_survival(ModelKind::Sis, &cfg, 200, 5, Measure::Annealed).unwrap();
        assert_eq!(a, b);
        let c = estimate_survival(ModelKind::Sis, &cfg, 200, 6, Measure::Annealed).unwrap();
        assert_ne!(a.config_digest, c.config_digest);
        let q = estimate_survival(ModelKind::Sis, &cfg, 200, 5, Measure::Quenched { env_seed: 9 })
            .unwrap();
        assert_ne!(a.config_digest, q.config_digest);
    }

    #[test]
    fn quenched_measure_reuses_one_environment() {
        // with a Bernoulli environment at p = 0, quenching on any seed
        // gives zero weights and certain extinction
        let dist = RhoDistribution::bernoulli(0.0, 1.0).unwrap();
        let cfg = SimulationConfig::new(2, 5.0, dist).unwrap();
        let rec =
            estimate_survival(ModelKind::Sis, &cfg, 120, 8, Measure::Quenched { env_seed: 4 })
                .unwrap();
        assert_eq!(rec.value, 0.0);
    }

    #[test]
    fn scale_consistency_of_target_and_survival() {
        let base = RhoDistribution::constant(1.0).unwrap();
        let doubled = RhoDistribution::constant(2.0).unwrap();
        let t1 = mean_field_target(2.0, &base);
        let t2 = mean_field_target(1.0, &doubled);
        assert_eq!(t1.target, t2.target);

        let mut cfg1 = SimulationConfig::new(2, 2.0, base).unwrap();
        cfg1.n_max = 200;
        cfg1.t_max = 500.0;
        let mut cfg2 = cfg1.clone();
        cfg2.lambda = 1.0;
        cfg2.dist = doubled;
        let r1 = estimate_survival(ModelKind::Sis, &cfg1, 800, 21, Measure::Annealed).unwrap();
        let r2 = estimate_survival(ModelKind::Sis, &cfg2, 800, 22, Measure::Annealed).unwrap();
        let pooled = (r1.se.powi(2) + r2.se.powi(2)).sqrt();
        assert!(
            (r1.value - r2.value).abs() <= 3.0 * pooled,
            "{} vs {}",
            r1.value,
            r2.value
        );
    }

    #[test]
    fn critical_bracket_localizes_the_one_dimensional_transition() {
        let mut cfg = SimulationConfig::new(1, 1.0, RhoDistribution::constant(1.0).unwrap()).unwrap();
        cfg.n_max = 200;
        cfg.t_max = 200.0;
        let est =
            estimate_critical(ModelKind::Sis, &cfg, (2.0, 5.0), 0.6, 300, 17).unwrap();
        assert!(est.hi - est.lo <= 0.6 + 1e-12);
        assert!(est.lo >= 2.0 && est.hi <= 5.0);
        assert!(est.lo <= 4.0, "lower edge {} too high", est.lo);
        assert!(est.hi >= 2.5, "upper edge {} too low", est.hi);
        let rerun = estimate_critical(ModelKind::Sis, &cfg, (2.0, 5.0), 0.6, 300, 17).unwrap();
        assert_eq!(est, rerun);
        // survival must grow with lambda along the probes, within noise
        let mut sorted = est.probes.clone();
        sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        for pair in sorted.windows(2) {
            let pooled = (pair[0].record.se.powi(2) + pair[1].record.se.powi(2)).sqrt();
            assert!(
                pair[1].record.value >= pair[0].record.value - 3.0 * pooled,
                "survival fell from {} to {} between lambda {} and {}",
                pair[0].record.value,
                pair[1].record.value,
                pair[0].lambda,
                pair[1].lambda
            );
        }
    }

    #[test]
    fn critical_bracket_rejects_non_straddling_endpoints() {
        let mut cfg = SimulationConfig::new(1, 1.0, RhoDistribution::constant(1.0).unwrap()).unwrap();
        cfg.n_max = 120;
        cfg.t_max = 120.0;
        let err = estimate_critical(ModelKind::Sis, &cfg, (0.1, 0.4), 0.1, 200, 2).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)), "{err}");
        let err = estimate_critical(ModelKind::Sis, &cfg, (4.5, 6.0), 0.5, 200, 2).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)), "{err}");
        assert!(estimate_critical(ModelKind::Sis, &cfg, (3.0, 2.0), 0.5, 200, 2).is_err());
    }

    #[test]
    fn subcritical_sir_shows_no_significant_survival() {
        let dist = RhoDistribution::constant(1.0).unwrap();
        let gamma = 0.8;
        let mut cfg = SimulationConfig::new(4, gamma / dist.mean(), dist).unwrap();
        cfg.n_max = 300;
        cfg.t_max = 400.0;
        let rec = estimate_survival(ModelKind::Sir, &cfg, 400, 31, Measure::Annealed).unwrap();
        assert!(
            rec.ci95.0 <= SURVIVAL_SIGNIFICANCE_LB,
            "subcritical run signalled survival: {:?}",
            rec
        );
    }

    #[test]
    fn laplace_limit_frozen_value() {
        let dist = RhoDistribution::constant(1.0).unwrap();
        let check = laplace_limit_check(1000, 1.0, 1.0, &dist, 1.0).unwrap();
        assert_relative_eq!(check.limit, (-0.25f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(check.limit, 0.7788007830714049, max_relative = 1e-12);
        assert!(check.finite_d > 0.0 && check.finite_d < 1.0);
        let trivial = laplace_limit_check(1000, 1.0, 1.0, &dist, 0.0).unwrap();
        assert_eq!(trivial.finite_d, 1.0);
        assert_eq!(trivial.limit, 1.0);
    }

    #[test]
    fn laplace_finite_d_matches_fixed_grid_oracle() {
        let dist = RhoDistribution::bernoulli(0.5, 1.0).unwrap();
        let (d, lambda, theta, s) = (1000u64, 2.0, 1.0, 0.5);
        let check = laplace_limit_check(d, lambda, theta, &dist, s).unwrap();
        // plain Simpson on a uniform grid, no adaptivity shared with the
        // production path
        let d_f = d as f64;
        let b = (d_f / d_f.ln()).floor();
        let k = crate::numeric::floor_nth_root(d, 3);
        let rate = 1.0 + lambda * theta;
        let scale = -(-s * d_f.ln() / d_f.cbrt()).exp_m1();
        let f = |t: f64| {
            let g = dist.one_minus_laplace(lambda * t / (2.0 * d_f));
            rate * (-rate * t + b * (-scale * g).ln_1p()).exp()
        };
        let horizon = 45.0 / rate;
        let steps = 200_000usize;
        let h = horizon / steps as f64;
        let mut acc = f(0.0) + f(horizon);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let inner = acc * h / 3.0;
        let oracle = (k as f64 * inner.ln()).exp();
        assert_relative_eq!(check.finite_d, oracle, max_relative = 1e-6);
    }

    #[test]
    fn laplace_gap_shrinks_with_dimension() {
        let dist = RhoDistribution::constant(1.0).unwrap();
        let (lambda, theta, s) = (2.0, 1.0, 0.5);
        let gaps: Vec<f64> = [1000u64, 10_000]
            .iter()
            .map(|&d| {
                let c = laplace_limit_check(d, lambda, theta, &dist, s).unwrap();
                (c.finite_d - c.limit).abs()
            })
            .collect();
        assert!(gaps[1] < gaps[0], "gaps {gaps:?} not decreasing");
    }

    #[test]
    fn laplace_validates_arguments() {
        let dist = RhoDistribution::constant(1.0).unwrap();
        assert!(laplace_limit_check(1, 1.0, 1.0, &dist, 1.0).is_err());
        assert!(laplace_limit_check(1000, 1.0, 0.5, &dist, 1.0).is_err());
        assert!(laplace_limit_check(1000, 1.0, 1.0, &dist, -1.0).is_err());
        assert!(laplace_limit_check(1000, 1.0, 2.0, &dist, 1.0).is_ok());
    }

    #[test]
    fn edge_infection_closed_forms() {
        let unit = RhoDistribution::constant(1.0).unwrap();
        assert_relative_eq!(
            edge_infection_probability(1.0, 1, &unit).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-14
        );
        let zero = RhoDistribution::constant(0.0).unwrap();
        assert_eq!(edge_infection_probability(1.0, 2, &zero).unwrap(), 0.0);
        let bern = RhoDistribution::bernoulli(0.3, 1.0).unwrap();
        let (lambda, d) = (1.2, 2usize);
        let a = lambda / (2.0 * d as f64);
        assert_relative_eq!(
            edge_infection_probability(lambda, d, &bern).unwrap(),
            0.3 * a / (1.0 + a),
            max_relative = 1e-13
        );
    }

    #[test]
    fn edge_infection_matches_two_exponential_race() {
        let dist = RhoDistribution::uniform(1.5).unwrap();
        let (lambda, d) = (1.8, 2usize);
        let p = edge_infection_probability(lambda, d, &dist).unwrap();
        let mut stream = Stream::new(0xACE);
        let trials = 200_000u64;
        let mut hits = 0u64;
        for _ in 0..trials {
            let rho = dist.quantile(stream.next_f64());
            let y = stream.next_exp(1.0);
            let u = stream.next_exp(lambda * rho / (2.0 * d as f64));
            if u < y {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / trials as f64;
        let se = binomial_se(hits, trials);
        assert!((p_hat - p).abs() < 3.0 * se, "{p_hat} vs {p}");
    }

    #[test]
    fn subcritical_bound_frozen_values_and_envelope() {
        let unit = RhoDistribution::constant(1.0).unwrap();
        let b = subcritical_path_expectation(0.5, 1, 1, &unit).unwrap();
        assert_relative_eq!(b.per_step, 0.2, max_relative = 1e-14);
        assert_relative_eq!(b.per_path, 0.2, max_relative = 1e-14);
        assert_relative_eq!(b.total_bound, 0.4, max_relative = 1e-14);
        assert_eq!(b.envelope, 0.5);

        let empty = subcritical_path_expectation(0.5, 3, 0, &unit).unwrap();
        assert_eq!(empty.per_path, 1.0);
        assert_eq!(empty.total_bound, 1.0);
        assert_eq!(empty.envelope, 1.0);

        let dists = [
            RhoDistribution::constant(1.0).unwrap(),
            RhoDistribution::bernoulli(0.5, 1.0).unwrap(),
            RhoDistribution::uniform(2.0).unwrap(),
            RhoDistribution::discrete(vec![(0.5, 0.25), (1.0, 0.5), (2.0, 0.25)]).unwrap(),
        ];
        for dist in &dists {
            for gamma in [0.3, 0.5, 0.8, 0.95] {
                for d in [1usize, 2, 3, 8] {
                    for n in 0..=6u32 {
                        let b = subcritical_path_expectation(gamma, d, n, dist).unwrap();
                        assert!(
                            b.total_bound <= b.envelope,
                            "total {} above envelope {} at gamma {gamma}, d {d}, n {n}",
                            b.total_bound,
                            b.envelope
                        );
                        assert!(b.per_path <= b.total_bound + 1e-300);
                    }
                }
            }
        }
        assert!(subcritical_path_expectation(1.0, 2, 1, &unit).is_err());
        assert!(subcritical_path_expectation(0.0, 2, 1, &unit).is_err());
    }

    #[test]
    fn graphical_equivalence_rows_agree_at_small_scale() {
        let dist = RhoDistribution::constant(1.0).unwrap();
        let rows = graphical_equivalence(1, 1.0, &dist, 2, 2500, 13).unwrap();
        assert_eq!(rows.len(), 5);
        for row in &rows {
            assert!(
                row.within_three_se,
                "vertex {}: dynamics {} vs graphical {} (pooled {})",
                row.vertex, row.p_dynamics, row.p_graphical, row.pooled_se
            );
        }
        let origin = rows
            .iter()
            .find(|r| r.vertex == Vertex::origin(1))
            .unwrap();
        assert_eq!(origin.p_dynamics, 1.0);
        assert_eq!(origin.p_graphical, 1.0);
    }

    #[test]
    fn env_violation_rate_respects_union_bound() {
        let dist = RhoDistribution::bernoulli(0.5, 1.0).unwrap();
        let row = env_violation_rate(&dist, 5, 1, 0.1, 2000, 19).unwrap();
        assert_eq!(row.ball, 11);
        assert!(row.rate <= row.union_bound + 3.0 * row.se,
            "rate {} above union bound {} + noise", row.rate, row.union_bound);
        // the two-sided sum can exceed 1 at small d, where the bound is
        // valid but vacuous
        assert!(row.chernoff > 0.0 && row.chernoff.is_finite());
    }

    #[test]
    fn config_digest_separates_and_reproduces() {
        let a = config_digest(&["survival", "d=3", "lambda=2"]);
        let b = config_digest(&["survival", "d=3", "lambda=2"]);
        let c = config_digest(&["survival", "d=3", "lambda=2.5"]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(config_digest(&["x", "y"]), config_digest(&["x;y"]));
    }

    #[test]
    fn q_event_probability_feeds_laplace_rate() {
        // the conditional recovery-clock rate used by the transform is
        // 1 + lambda Theta; its unconditional event probability must be
        // consistent with the closed form on a tiny Monte Carlo
        let dist = RhoDistribution::constant(1.0).unwrap();
        let (lambda, theta) = (1.0, 1.0);
        let p = crate::graphical::q_single_probability(lambda, theta);
        assert_relative_eq!(p, 0.5);
        let env = WeightField::new(3, dist);
        let field = GraphicalField::new(env, lambda, 2, 4).unwrap();
        let a = vec![Vertex::origin(2)];
        let _ = sample_q_event(&field, &a, crate::graphical::QDirection::YBelowPsi);
    }
}
