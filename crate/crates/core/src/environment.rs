//! Random edge-weight environments on Z^d.
//!
//! Every undirected nearest-neighbor edge carries an i.i.d. nonnegative
//! weight bounded by a constant `theta`. A [`WeightField`] realizes one
//! environment lazily: the weight of an edge is a pure function of the
//! field seed and the canonical edge key (lexicographically smaller
//! endpoint first), computed through a keyed hash and the inverse CDF of
//! the weight distribution, then memoized. Identical seeds therefore give
//! identical environments regardless of query order, and distinct edges
//! carry statistically independent weights.
//!
//! The module also provides the two bulk environment events used by the
//! coupling arguments (every vertex of a ball having total incident weight
//! below, resp. above, `2d(mean ± eps)`) and the Cramer/Chernoff bound
//! `exp(-2d J(eps))` on a single vertex violating them.

use crate::error::{Error, Result};
use crate::lattice::{ball_enumerate, Vertex};
use crate::numeric::golden_max;
use crate::rng::{hash_words, u64_to_f64};
use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

/// Weight distribution on `[0, theta]`. All kinds have finite upper
/// endpoint `theta`; the degenerate all-zero environment (`const:0`) is
/// admitted for null-model tests.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoKind {
    Constant(f64),
    Bernoulli { p: f64, scale: f64 },
    Uniform { theta: f64 },
    /// Sorted atoms `(value, probability)` with probabilities summing to 1.
    Discrete { atoms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoDistribution {
    kind: RhoKind,
}

impl RhoDistribution {
    pub fn constant(v: f64) -> Result<Self> {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::arg(format!("const weight must be >= 0, got {v}")));
        }
        Ok(RhoDistribution {
            kind: RhoKind::Constant(v),
        })
    }

    pub fn bernoulli(p: f64, scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg(format!("bern probability must be in [0,1], got {p}")));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::arg(format!("bern scale must be > 0, got {scale}")));
        }
        Ok(RhoDistribution {
            kind: RhoKind::Bernoulli { p, scale },
        })
    }

    pub fn uniform(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::arg(format!("unif bound must be > 0, got {theta}")));
        }
        Ok(RhoDistribution {
            kind: RhoKind::Uniform { theta },
        })
    }

    pub fn discrete(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::arg("disc distribution needs at least one atom"));
        }
        for &(v, p) in &atoms {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::arg(format!("disc value must be >= 0, got {v}")));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::arg(format!("disc probability must be >= 0, got {p}")));
            }
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "disc probabilities must sum to 1, got {total}"
            )));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // merge duplicate values and renormalize exactly
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        for a in &mut merged {
            a.1 /= total;
        }
        Ok(RhoDistribution {
            kind: RhoKind::Discrete { atoms: merged },
        })
    }

    #[must_use]
    pub fn kind(&self) -> &RhoKind {
        &self.kind
    }

    /// Upper endpoint of the support.
    #[must_use]
    pub fn theta(&self) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => *v,
            RhoKind::Bernoulli { p, scale } => {
                if *p > 0.0 {
                    *scale
                } else {
                    0.0
                }
            }
            RhoKind::Uniform { theta } => *theta,
            RhoKind::Discrete { atoms } => atoms
                .iter()
                .rev()
                .find(|&&(_, p)| p > 0.0)
                .map_or(0.0, |&(v, _)| v),
        }
    }

    /// Lower endpoint of the support.
    #[must_use]
    pub fn support_min(&self) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => *v,
            RhoKind::Bernoulli { p, scale } => {
                if *p < 1.0 {
                    0.0
                } else {
                    *scale
                }
            }
            RhoKind::Uniform { .. } => 0.0,
            RhoKind::Discrete { atoms } => atoms
                .iter()
                .find(|&&(_, p)| p > 0.0)
                .map_or(0.0, |&(v, _)| v),
        }
    }

    /// Point mass at `v` (zero for the uniform kind).
    #[must_use]
    pub fn mass_at(&self, v: f64) -> f64 {
        match &self.kind {
            RhoKind::Constant(c) => {
                if *c == v {
                    1.0
                } else {
                    0.0
                }
            }
            RhoKind::Bernoulli { p, scale } => {
                if v == 0.0 {
                    1.0 - p
                } else if v == *scale {
                    *p
                } else {
                    0.0
                }
            }
            RhoKind::Uniform { .. } => 0.0,
            RhoKind::Discrete { atoms } => atoms
                .iter()
                .find(|&&(a, _)| a == v)
                .map_or(0.0, |&(_, p)| p),
        }
    }

    /// Expected weight.
    #[must_use]
    pub fn mean(&self) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => *v,
            RhoKind::Bernoulli { p, scale } => p * scale,
            RhoKind::Uniform { theta } => theta / 2.0,
            RhoKind::Discrete { atoms } => atoms.iter().map(|&(v, p)| v * p).sum(),
        }
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    #[must_use]
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => *v,
            RhoKind::Bernoulli { p, scale } => {
                if u < 1.0 - p {
                    0.0
                } else {
                    *scale
                }
            }
            RhoKind::Uniform { theta } => u * theta,
            RhoKind::Discrete { atoms } => {
                let mut cum = 0.0;
                for &(v, p) in atoms {
                    cum += p;
                    if u < cum {
                        return v;
                    }
                }
                atoms.last().map_or(0.0, |&(v, _)| v)
            }
        }
    }

    /// Moment generating function `E e^{t rho}` (finite for all real `t`).
    #[must_use]
    pub fn mgf(&self, t: f64) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => (t * v).exp(),
            RhoKind::Bernoulli { p, scale } => 1.0 - p + p * (t * scale).exp(),
            RhoKind::Uniform { theta } => {
                let x = t * theta;
                if x.abs() < 1e-8 {
                    1.0 + x / 2.0 + x * x / 6.0
                } else {
                    x.exp_m1() / x
                }
            }
            RhoKind::Discrete { atoms } => atoms.iter().map(|&(v, p)| p * (t * v).exp()).sum(),
        }
    }

    /// `E(1 - e^{-c rho})` for `c >= 0`, in closed form.
    #[must_use]
    pub fn one_minus_laplace(&self, c: f64) -> f64 {
        match &self.kind {
            RhoKind::Constant(v) => -(-c * v).exp_m1(),
            RhoKind::Bernoulli { p, scale } => p * -(-c * scale).exp_m1(),
            RhoKind::Uniform { theta } => {
                let x = c * theta;
                if x.abs() < 1e-8 {
                    x / 2.0 - x * x / 6.0
                } else {
                    1.0 - -(-x).exp_m1() / x
                }
            }
            RhoKind::Discrete { atoms } => {
                atoms.iter().map(|&(v, p)| p * -(-c * v).exp_m1()).sum()
            }
        }
    }

    /// `E[rho / (1 + a rho)]` for `a >= 0`, in closed form.
    #[must_use]
    pub fn damped_mean(&self, a: f64) -> f64 {
        if a == 0.0 {
            return self.mean();
        }
        match &self.kind {
            RhoKind::Constant(v) => v / (1.0 + a * v),
            RhoKind::Bernoulli { p, scale } => p * scale / (1.0 + a * scale),
            RhoKind::Uniform { theta } => {
                let x = a * theta;
                if x < 1e-6 {
                    theta * (0.5 - x / 3.0 + x * x / 4.0)
                } else {
                    (1.0 - x.ln_1p() / x) / a
                }
            }
            RhoKind::Discrete { atoms } => {
                atoms.iter().map(|&(v, p)| p * v / (1.0 + a * v)).sum()
            }
        }
    }
}

impl fmt::Display for RhoDistribution {
    /// Canonical spec string: `const:c`, `bern:p:scale`, `unif:theta`,
    /// `disc:v1,p1;v2,p2;...`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RhoKind::Constant(v) => write!(f, "const:{v}"),
            RhoKind::Bernoulli { p, scale } => write!(f, "bern:{p}:{scale}"),
            RhoKind::Uniform { theta } => write!(f, "unif:{theta}"),
            RhoKind::Discrete { atoms } => {
                write!(f, "disc:")?;
                for (i, (v, p)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{v},{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses a distribution spec string (see [`RhoDistribution`] `Display`).
pub fn parse_rho(s: &str) -> Result<RhoDistribution> {
    let bad = |msg: &str| Error::arg(format!("weight distribution '{s}': {msg}"));
    let mut parts = s.splitn(2, ':');
    let kind = parts.next().unwrap_or("");
    let rest = parts.next().unwrap_or("");
    let parse_f = |x: &str, what: &str| -> Result<f64> {
        x.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("cannot parse {what} '{x}'")))
    };
    match kind {
        "const" => RhoDistribution::constant(parse_f(rest, "value")?),
        "bern" => {
            let mut it = rest.splitn(2, ':');
            let p = parse_f(it.next().unwrap_or(""), "probability")?;
            let scale = parse_f(
                it.next().ok_or_else(|| bad("expected bern:p:scale"))?,
                "scale",
            )?;
            RhoDistribution::bernoulli(p, scale)
        }
        "unif" => RhoDistribution::uniform(parse_f(rest, "bound")?),
        "disc" => {
            let mut atoms = Vec::new();
            for pair in rest.split(';') {
                let mut it = pair.splitn(2, ',');
                let v = parse_f(it.next().unwrap_or(""), "value")?;
                let p = parse_f(
                    it.next().ok_or_else(|| bad("expected value,probability pairs"))?,
                    "probability",
                )?;
                atoms.push((v, p));
            }
            RhoDistribution::discrete(atoms)
        }
        _ => Err(bad("unknown kind (expected const | bern | unif | disc)")),
    }
}

const EDGE_TAG: u64 = 0xED6E;

/// One realized random environment: i.i.d. edge weights, lazily sampled
/// and memoized. Cloning keeps the seed and distribution but drops the
/// memo table, so clones are cheap and safe to hand to parallel workers.
#[derive(Debug)]
pub struct WeightField {
    seed: u64,
    dist: RhoDistribution,
    cache: Mutex<HashMap<(Vertex, u32), f64>>,
}

impl Clone for WeightField {
    fn clone(&self) -> Self {
        WeightField {
            seed: self.seed,
            dist: self.dist.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl WeightField {
    #[must_use]
    pub fn new(seed: u64, dist: RhoDistribution) -> Self {
        WeightField {
            seed,
            dist,
            cache: Mutex::new(HashMap::new()),
        }
    }

    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[must_use]
    pub fn dist(&self) -> &RhoDistribution {
        &self.dist
    }

    /// Weight of the undirected edge `{x, y}`. Errors unless `x` and `y`
    /// are nearest neighbors of equal dimension.
    pub fn weight(&self, x: &Vertex, y: &Vertex) -> Result<f64> {
        if x.dim() != y.dim() {
            return Err(Error::Dimension {
                expected: x.dim(),
                got: y.dim(),
            });
        }
        let mut axis = None;
        for (i, (a, b)) in x.coords().iter().zip(y.coords()).enumerate() {
            if a != b {
                if (a - b).abs() != 1 || axis.is_some() {
                    return Err(Error::arg(format!("{x} and {y} are not nearest neighbors")));
                }
                axis = Some(i);
            }
        }
        let Some(axis) = axis else {
            return Err(Error::arg(format!("{x} and {y} are not nearest neighbors")));
        };
        let lower = if x.coords()[axis] < y.coords()[axis] {
            x
        } else {
            y
        };
        Ok(self.weight_edge(lower, axis))
    }

    /// Weight of the edge from `lower` to `lower + e_axis` (canonical form;
    /// no adjacency validation). Hot-path entry for the simulators.
    #[must_use]
    pub fn weight_edge(&self, lower: &Vertex, axis: usize) -> f64 {
        let key = (lower.clone(), axis as u32);
        if let Some(&w) = self.cache.lock().unwrap().get(&key) {
            return w;
        }
        let mut words = Vec::with_capacity(lower.dim() + 3);
        words.push(self.seed);
        words.push(EDGE_TAG);
        words.push(axis as u64);
        lower.extend_words(&mut words);
        let u = u64_to_f64(hash_words(&words));
        let w = self.dist.quantile(u);
        self.cache.lock().unwrap().insert(key, w);
        w
    }

    /// Weight of the edge leaving `x` along `axis` in the given direction.
    #[must_use]
    pub fn weight_step(&self, x: &Vertex, axis: usize, positive: bool) -> f64 {
        if positive {
            self.weight_edge(x, axis)
        } else {
            let lower = x.step(axis, false);
            self.weight_edge(&lower, axis)
        }
    }

    /// Total weight incident to `x`: `sum over neighbors y of w(x, y)`.
    #[must_use]
    pub fn incident_sum(&self, x: &Vertex) -> f64 {
        let d = x.dim();
        let mut s = 0.0;
        for axis in 0..d {
            s += self.weight_step(x, axis, false);
            s += self.weight_step(x, axis, true);
        }
        s
    }
}

/// The two bulk events on an environment restricted to the l1 ball of
/// radius `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvEventKind {
    /// Every vertex `x` of the ball has `incident_sum(x) <= 2d(mean + eps)`.
    AllBelow,
    /// Every vertex `x` of the ball has `incident_sum(x) > 2d(mean - eps)`.
    AllAbove,
}

const ENV_EVENT_BUDGET: u64 = 4_000_000;

/// Checks a bulk environment event on the ball `B(d, m)`.
pub fn check_env_event(
    field: &WeightField,
    kind: EnvEventKind,
    d: usize,
    m: u32,
    eps: f64,
) -> Result<bool> {
    if eps <= 0.0 {
        return Err(Error::arg(format!("eps must be > 0, got {eps}")));
    }
    let mean = field.dist().mean();
    let ball = ball_enumerate(d, m, ENV_EVENT_BUDGET)?;
    let two_d = 2.0 * d as f64;
    for x in &ball {
        let s = field.incident_sum(x);
        let ok = match kind {
            EnvEventKind::AllBelow => s <= two_d * (mean + eps),
            EnvEventKind::AllAbove => s > two_d * (mean - eps),
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Deviation side for [`chernoff_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationSide {
    /// Average of 2d weights at or above `mean + eps`.
    Above,
    /// Average of 2d weights at or below `mean - eps`.
    Below,
}

/// Chernoff/Cramer bound `exp(-2d J(eps))` on the probability that the
/// average of the `2d` weights at one vertex deviates from the mean by
/// `eps` on the given side. The rate `J` is computed by maximizing the
/// convex dual `t a - log E e^{t rho}` numerically; deviations outside the
/// support return 0, deviations exactly to the support endpoint return the
/// exact point-mass power.
pub fn chernoff_bound(
    dist: &RhoDistribution,
    eps: f64,
    d: usize,
    side: DeviationSide,
) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::arg(format!("eps must be > 0, got {eps}")));
    }
    if d == 0 {
        return Err(Error::arg("dimension must be >= 1"));
    }
    let n = 2.0 * d as f64;
    let mean = dist.mean();
    let (target, endpoint, sign) = match side {
        DeviationSide::Above => (mean + eps, dist.theta(), 1.0),
        DeviationSide::Below => (mean - eps, dist.support_min(), -1.0),
    };
    let past_endpoint = match side {
        DeviationSide::Above => target > endpoint,
        DeviationSide::Below => target < endpoint,
    };
    if past_endpoint {
        return Ok(0.0);
    }
    let at_endpoint = (target - endpoint).abs() <= 1e-12 * (1.0 + endpoint.abs());
    if at_endpoint {
        let mass = dist.mass_at(endpoint);
        return Ok(mass.powf(n));
    }
    // Concave dual: phi(t) = t * sign * target - log mgf(sign * t), t >= 0.
    let phi = |t: f64| t * sign * target - dist.mgf(sign * t).ln();
    let mut hi = 1.0;
    while phi(2.0 * hi) > phi(hi) && hi < 1e8 {
        hi *= 2.0;
    }
    let (_, rate) = golden_max(&phi, 0.0, 2.0 * hi, 1e-11 * (1.0 + 2.0 * hi));
    Ok((-n * rate.max(0.0)).exp())
}
