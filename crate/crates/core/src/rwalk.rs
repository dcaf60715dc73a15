//! Biased nearest-neighbor random walk on {0, ..., K}: gambler's-ruin
//! probabilities in closed form and Monte Carlo hitting simulation.
//!
//! The walk moves up with probability theta/(1+theta) and down with
//! probability 1/(1+theta). The same code serves both coupling walks used
//! by the epidemic bounds: callers substitute theta = lambda(E rho + eps)
//! for the upper-bounding walk and theta = lambda(E rho - 2 eps) for the
//! lower one.

use crate::error::{Error, Result};
use crate::numeric::mean_and_se;
use crate::rng::{tags, Stream};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSpec {
    pub theta: f64,
    pub start: u64,
}

impl WalkSpec {
    pub fn new(theta: f64) -> Result<Self> {
        Self::with_start(theta, 1)
    }

    pub fn with_start(theta: f64, start: u64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::arg(format!("walk drift must be > 0, got {theta}")));
        }
        Ok(WalkSpec { theta, start })
    }

    /// Probability of a single up-step.
    #[must_use]
    pub fn up_probability(&self) -> f64 {
        self.theta / (1.0 + self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitDirection {
    /// Absorb at 0 before reaching K.
    Hit0BeforeK,
    /// Absorb at K before reaching 0.
    HitKBefore0,
}

/// Exact gambler's-ruin probability for the walk absorbed at {0, K}.
///
/// With u = 1/theta and start s: P(hit K first) = (1 - u^s)/(1 - u^K) and
/// P(hit 0 first) = (u^s - u^K)/(1 - u^K); theta = 1 degenerates to s/K.
/// Both forms are evaluated through `exp_m1` so extreme drifts stay
/// accurate instead of overflowing.
pub fn ruin_probability(spec: WalkSpec, k: u64, direction: HitDirection) -> Result<f64> {
    if k < spec.start {
        return Err(Error::arg(format!(
            "target level {k} below start {}",
            spec.start
        )));
    }
    if k == 0 || spec.start == k {
        // already absorbed at K (or at 0 when start = K = 0)
        let at_k = spec.start == k && k > 0;
        return Ok(match direction {
            HitDirection::HitKBefore0 => {
                if at_k {
                    1.0
                } else {
                    0.0
                }
            }
            HitDirection::Hit0BeforeK => {
                if at_k {
                    0.0
                } else {
                    1.0
                }
            }
        });
    }
    if spec.start == 0 {
        return Ok(match direction {
            HitDirection::Hit0BeforeK => 1.0,
            HitDirection::HitKBefore0 => 0.0,
        });
    }
    let s = spec.start as f64;
    let kf = k as f64;
    let l = -spec.theta.ln(); // log of u = 1/theta
    if l.abs() < 1e-14 {
        return Ok(match direction {
            HitDirection::HitKBefore0 => s / kf,
            HitDirection::Hit0BeforeK => 1.0 - s / kf,
        });
    }
    let p = if l > 0.0 {
        // u > 1: factor out u^K to keep every term bounded
        let up = (-((kf - s) * l)).exp() * -(-s * l).exp_m1() / -(-kf * l).exp_m1();
        match direction {
            HitDirection::HitKBefore0 => up,
            HitDirection::Hit0BeforeK => {
                -((s - kf) * l).exp_m1() / -(-kf * l).exp_m1()
            }
        }
    } else {
        match direction {
            HitDirection::HitKBefore0 => (s * l).exp_m1() / (kf * l).exp_m1(),
            HitDirection::Hit0BeforeK => {
                ((s * l).exp_m1() - (kf * l).exp_m1()) / -(kf * l).exp_m1()
            }
        }
    };
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingEstimate {
    pub trials: u64,
    pub upper_hits: u64,
    pub lower_hits: u64,
    pub capped: u64,
    pub p_upper: f64,
    pub upper_se: f64,
    pub p_lower: f64,
    pub lower_se: f64,
    /// Mean step count among trials that reached K.
    pub tau_mean: Option<f64>,
    pub tau_se: Option<f64>,
    /// tau_mean / K; converges to (1+theta)/(theta-1) for theta > 1.
    pub tau_ratio: Option<f64>,
    /// Set when more than 1% of trials hit the step cap.
    pub cap_flagged: bool,
}

/// Monte Carlo hitting simulation of the walk absorbed at {0, K}.
///
/// Trials use independent derived streams, so the estimate is
/// reproducible for a fixed seed and independent of worker scheduling.
pub fn simulate_hitting(
    spec: WalkSpec,
    k: u64,
    trials: u64,
    step_cap: u64,
    seed: u64,
) -> Result<HittingEstimate> {
    if trials == 0 {
        return Err(Error::arg("trials must be >= 1"));
    }
    if k < spec.start {
        return Err(Error::arg(format!(
            "target level {k} below start {}",
            spec.start
        )));
    }
    let p_up = spec.up_probability();
    let outcomes: Vec<(u8, u64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut stream = Stream::derived(seed, tags::WALK, i);
            let mut pos = spec.start;
            let mut steps = 0u64;
            loop {
                if pos == 0 {
                    return (0u8, steps);
                }
                if pos == k {
                    return (1u8, steps);
                }
                if steps >= step_cap {
                    return (2u8, steps);
                }
                if stream.next_f64() < p_up {
                    pos += 1;
                } else {
                    pos -= 1;
                }
                steps += 1;
            }
        })
        .collect();

    let mut upper_hits = 0u64;
    let mut lower_hits = 0u64;
    let mut capped = 0u64;
    let mut upper_steps = Vec::new();
    for &(kind, steps) in &outcomes {
        match kind {
            0 => lower_hits += 1,
            1 => {
                upper_hits += 1;
                upper_steps.push(steps as f64);
            }
            _ => capped += 1,
        }
    }
    let p_upper = upper_hits as f64 / trials as f64;
    let p_lower = lower_hits as f64 / trials as f64;
    let (tau_mean, tau_se, tau_ratio) = if upper_steps.is_empty() {
        (None, None, None)
    } else {
        let (m, se) = mean_and_se(&upper_steps);
        (Some(m), Some(se), Some(m / k as f64))
    };
    Ok(HittingEstimate {
        trials,
        upper_hits,
        lower_hits,
        capped,
        p_upper,
        upper_se: crate::numeric::binomial_se(upper_hits, trials),
        p_lower,
        lower_se: crate::numeric::binomial_se(lower_hits, trials),
        tau_mean,
        tau_se,
        tau_ratio,
        cap_flagged: capped * 100 > trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ruin_frozen_values() {
        // theta = 2, K = 2, start 1: (0.5 - 0.25)/(1 - 0.25) = 1/3
        let spec = WalkSpec::new(2.0).unwrap();
        let p = ruin_probability(spec, 2, HitDirection::Hit0BeforeK).unwrap();
        assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        let q = ruin_probability(spec, 2, HitDirection::HitKBefore0).unwrap();
        assert_relative_eq!(q, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn ruin_at_target_is_decided() {
        let spec = WalkSpec::new(2.0).unwrap();
        assert_eq!(
            ruin_probability(spec, 1, HitDirection::Hit0BeforeK).unwrap(),
            0.0
        );
        assert_eq!(
            ruin_probability(spec, 1, HitDirection::HitKBefore0).unwrap(),
            1.0
        );
        let at_zero = WalkSpec::with_start(2.0, 0).unwrap();
        assert_eq!(
            ruin_probability(at_zero, 5, HitDirection::Hit0BeforeK).unwrap(),
            1.0
        );
    }

    #[test]
    fn ruin_large_k_approaches_drift_limit() {
        // theta = 2: P(hit 0 ever) -> 1/theta = 0.5
        let spec = WalkSpec::new(2.0).unwrap();
        let p = ruin_probability(spec, 60, HitDirection::Hit0BeforeK).unwrap();
        assert_relative_eq!(p, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_walk_is_start_over_k() {
        for (s, k) in [(1u64, 4u64), (3, 10), (7, 7)] {
            let spec = WalkSpec::with_start(1.0, s).unwrap();
            let p = ruin_probability(spec, k, HitDirection::HitKBefore0).unwrap();
            assert_relative_eq!(p, s as f64 / k as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn directions_are_complementary() {
        for theta in [0.5, 1.0, 1.5, 2.0, 3.0] {
            for k in [2u64, 5, 17, 50] {
                for s in 1..k.min(8) {
                    let spec = WalkSpec::with_start(theta, s).unwrap();
                    let a = ruin_probability(spec, k, HitDirection::Hit0BeforeK).unwrap();
                    let b = ruin_probability(spec, k, HitDirection::HitKBefore0).unwrap();
                    assert!(
                        (a + b - 1.0).abs() < 1e-12,
                        "theta {theta} k {k} s {s}: {a} + {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn extreme_drift_stays_finite_and_tiny() {
        // u = 10, start 50, K = 100: hit probability ~ 10^-50
        let spec = WalkSpec::with_start(0.1, 50).unwrap();
        let p = ruin_probability(spec, 100, HitDirection::HitKBefore0).unwrap();
        assert!(p > 0.0 && p < 1e-49, "p = {p}");
        assert_relative_eq!(p, 1e-50, max_relative = 1e-9);
        let q = ruin_probability(spec, 100, HitDirection::Hit0BeforeK).unwrap();
        assert!(q > 1.0 - 1e-12 && q <= 1.0);
    }

    #[test]
    fn hit_probability_monotone_in_start() {
        let mut prev = 0.0;
        for s in 1..10u64 {
            let spec = WalkSpec::with_start(1.7, s).unwrap();
            let p = ruin_probability(spec, 10, HitDirection::HitKBefore0).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(WalkSpec::new(0.0).is_err());
        assert!(WalkSpec::new(-1.0).is_err());
        let spec = WalkSpec::with_start(2.0, 5).unwrap();
        assert!(ruin_probability(spec, 3, HitDirection::Hit0BeforeK).is_err());
        assert!(simulate_hitting(spec, 3, 10, 100, 0).is_err());
        assert!(simulate_hitting(spec, 8, 0, 100, 0).is_err());
    }

    #[test]
    fn simulation_matches_closed_form() {
        let spec = WalkSpec::new(2.0).unwrap();
        let est = simulate_hitting(spec, 5, 20_000, 100_000, 71).unwrap();
        let exact = ruin_probability(spec, 5, HitDirection::HitKBefore0).unwrap();
        assert!(
            (est.p_upper - exact).abs() < 3.0 * est.upper_se,
            "{} vs {exact} +- {}",
            est.p_upper,
            3.0 * est.upper_se
        );
        assert_eq!(est.upper_hits + est.lower_hits + est.capped, est.trials);
        assert_eq!(est.capped, 0);
        assert!(!est.cap_flagged);
    }

    #[test]
    fn hitting_counts_are_complementary_when_uncapped() {
        let spec = WalkSpec::new(3.0).unwrap();
        let est = simulate_hitting(spec, 5, 5_000, 1_000_000, 3).unwrap();
        assert_eq!(est.upper_hits + est.lower_hits, est.trials);
        assert_relative_eq!(est.p_upper + est.p_lower, 1.0);
    }

    #[test]
    fn hitting_speed_approaches_drift_speed() {
        // (1 + theta)/(theta - 1) = 3 at theta = 2
        let spec = WalkSpec::new(2.0).unwrap();
        let est = simulate_hitting(spec, 1000, 300, 10_000_000, 7).unwrap();
        let ratio = est.tau_ratio.unwrap();
        assert!((ratio - 3.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn cap_flag_fires_on_hopeless_caps() {
        // strongly downward drift, far target, tiny cap: most trials cap or drop
        let spec = WalkSpec::with_start(0.2, 50).unwrap();
        let est = simulate_hitting(spec, 100, 500, 10, 9).unwrap();
        assert!(est.capped > 0);
        assert!(est.cap_flagged);
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = WalkSpec::new(1.5).unwrap();
        let a = simulate_hitting(spec, 8, 2_000, 100_000, 42).unwrap();
        let b = simulate_hitting(spec, 8, 2_000, 100_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_hitting(spec, 8, 2_000, 100_000, 43).unwrap();
        assert_ne!(a.upper_hits, c.upper_hits);
    }
}
