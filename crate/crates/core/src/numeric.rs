//! Numeric support: quadrature, 1-d concave maximization, interval
//! estimates and streaming accumulators used by the estimator modules.

use crate::error::{Error, Result};

/// z quantile for two-sided 95% coverage.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Largest integer `k` with `k^n <= d`.
#[must_use]
pub fn floor_nth_root(d: u64, n: u32) -> u64 {
    if d == 0 {
        return 0;
    }
    let mut k = (d as f64).powf(1.0 / f64::from(n)).floor() as u64;
    // Float estimate can be off by one in either direction near exact powers.
    while k.checked_pow(n).map_or(true, |p| p > d) {
        k -= 1;
    }
    while (k + 1).checked_pow(n).is_some_and(|p| p <= d) {
        k += 1;
    }
    k
}

/// Adaptive Simpson integration of `f` on `[a, b]` to the given absolute
/// tolerance. Errors if the recursion cannot reach the tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numeric(format!(
                "adaptive quadrature failed to converge on [{a}, {b}]"
            )));
        }
        let half = 0.5 * tol;
        Ok(recurse(f, a, m, fa, flm, fm, left, half, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, half, depth - 1)?)
    }

    if !(b > a) {
        return Err(Error::Numeric(format!("bad integration range [{a}, {b}]")));
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Golden-section maximization of a concave function on `[lo, hi]`.
/// Returns `(argmax, max)`.
#[must_use]
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Wilson score interval for a binomial proportion.
#[must_use]
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // clamp so the interval always contains the point estimate despite
    // rounding at the extremes (s = 0 or s = n)
    (
        ((center - spread) / denom).max(0.0).min(p),
        ((center + spread) / denom).min(1.0).max(p),
    )
}

/// Plain binomial standard error `sqrt(p(1-p)/n)`.
#[must_use]
pub fn binomial_se(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

/// Sample mean and standard error of the mean.
#[must_use]
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Streaming accumulator for means of products kept in log space.
///
/// Each observation arrives as `log(w)`; the accumulator maintains a
/// numerically stable log-sum-exp so that means of astronomically large or
/// tiny products never overflow. Observations equal to negative infinity
/// (w = 0) are admitted.
#[derive(Debug, Clone)]
pub struct LogMeanAcc {
    max_log: f64,
    scaled_sum: f64,
    scaled_sq_sum: f64,
    count: u64,
}

impl Default for LogMeanAcc {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMeanAcc {
    #[must_use]
    pub fn new() -> Self {
        LogMeanAcc {
            max_log: f64::NEG_INFINITY,
            scaled_sum: 0.0,
            scaled_sq_sum: 0.0,
            count: 0,
        }
    }

    pub fn push_log(&mut self, log_w: f64) {
        self.count += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.max_log {
            if self.max_log > f64::NEG_INFINITY {
                let shift = (self.max_log - log_w).exp();
                self.scaled_sum *= shift;
                self.scaled_sq_sum *= shift * shift;
            }
            self.max_log = log_w;
        }
        let scaled = (log_w - self.max_log).exp();
        self.scaled_sum += scaled;
        self.scaled_sq_sum += scaled * scaled;
    }

    #[must_use]
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Mean of the (linear-space) observations.
    #[must_use]
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        if self.max_log == f64::NEG_INFINITY {
            return 0.0;
        }
        self.max_log.exp() * self.scaled_sum / self.count as f64
    }

    /// Log of the mean; stays finite when the linear mean overflows.
    #[must_use]
    pub fn log_mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        if self.max_log == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.max_log + (self.scaled_sum / self.count as f64).ln()
    }

    /// Standard error divided by the mean, computed without leaving the
    /// scaled domain (usable when the linear mean overflows).
    #[must_use]
    pub fn rel_se(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        if self.max_log == f64::NEG_INFINITY {
            return 0.0;
        }
        let mean_scaled = self.scaled_sum / n;
        if mean_scaled <= 0.0 {
            return f64::NAN;
        }
        let var_scaled =
            (self.scaled_sq_sum / n - mean_scaled * mean_scaled).max(0.0) * n / (n - 1.0);
        (var_scaled / n).sqrt() / mean_scaled
    }

    /// Standard error of the mean.
    #[must_use]
    pub fn se(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        if self.max_log == f64::NEG_INFINITY {
            return 0.0;
        }
        let scale = self.max_log.exp();
        let mean_scaled = self.scaled_sum / n;
        let var_scaled = (self.scaled_sq_sum / n - mean_scaled * mean_scaled).max(0.0) * n
            / (n - 1.0);
        scale * (var_scaled / n).sqrt()
    }

    /// Largest single observation as a fraction of the observation sum.
    #[must_use]
    pub fn top_share(&self) -> f64 {
        if self.scaled_sum <= 0.0 {
            return 0.0;
        }
        // max observation has scaled value exactly 1 by construction.
        1.0 / self.scaled_sum
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F1 - F2|`.
#[must_use]
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup();
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    sb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let count_le = |s: &[f64], x: f64| s.partition_point(|&v| v <= x) as f64;
    let na = sa.len() as f64;
    let nb = sb.len() as f64;
    xs.iter()
        .map(|&x| (count_le(&sa, x) / na - count_le(&sb, x) / nb).abs())
        .fold(0.0, f64::max)
}

/// Critical value for the two-sample KS test at significance `alpha`.
#[must_use]
pub fn ks_two_sample_critical(n1: usize, n2: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}

/// Pearson chi-square statistic for observed counts against expected counts.
#[must_use]
pub fn chi_square_stat(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected.iter())
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}
