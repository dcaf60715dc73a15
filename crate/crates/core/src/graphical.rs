//! Graphical representation of the weighted SIR process: recovery clocks
//! Y(x) ~ Exp(1), directed infection clocks U(x,y) ~ Exp(lambda rho/(2d)),
//! auxiliary clocks Psi(x) ~ Exp(lambda Theta), and reachability along
//! infectious paths (consecutive steps with U(l_i, l_{i+1}) < Y(l_i)).
//!
//! All clocks are pure functions of the field seeds and the queried
//! vertex or directed edge, so a field realizes one joint sample that can
//! be revisited in any order. A zero-weight edge has an infinite clock
//! and never transmits. Equal clock values count as non-infection, so a
//! tie (measure zero, but floats) resolves deterministically.

use crate::environment::WeightField;
use crate::error::{Error, Result};
use crate::lattice::{gamma_class, GammaTag, Vertex};
use crate::numeric::adaptive_simpson;
use crate::rng::{derive_seed, exp_from_uniform, hash_words, tags, u64_to_open01};
use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;

#[derive(Debug)]
pub struct GraphicalField {
    env: WeightField,
    lambda: f64,
    d: usize,
    y_seed: u64,
    u_seed: u64,
    psi_seed: u64,
    gamma1_alt: Option<u64>,
    y_over: HashMap<Vertex, f64>,
    u_over: HashMap<(Vertex, Vertex), f64>,
    y_cache: Mutex<HashMap<Vertex, f64>>,
    psi_cache: Mutex<HashMap<Vertex, f64>>,
    u_cache: Mutex<HashMap<(Vertex, u32), f64>>,
}

impl Clone for GraphicalField {
    fn clone(&self) -> Self {
        GraphicalField {
            env: self.env.clone(),
            lambda: self.lambda,
            d: self.d,
            y_seed: self.y_seed,
            u_seed: self.u_seed,
            psi_seed: self.psi_seed,
            gamma1_alt: self.gamma1_alt,
            y_over: self.y_over.clone(),
            u_over: self.u_over.clone(),
            y_cache: Mutex::new(HashMap::new()),
            psi_cache: Mutex::new(HashMap::new()),
            u_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl GraphicalField {
    pub fn new(env: WeightField, lambda: f64, d: usize, master_seed: u64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::arg(format!("lambda must be >= 0, got {lambda}")));
        }
        if d == 0 {
            return Err(Error::arg("dimension must be >= 1"));
        }
        Ok(GraphicalField {
            env,
            lambda,
            d,
            y_seed: derive_seed(master_seed, tags::Y_CLOCK, 0),
            u_seed: derive_seed(master_seed, tags::U_CLOCK, 0),
            psi_seed: derive_seed(master_seed, tags::PSI_CLOCK, 0),
            gamma1_alt: None,
            y_over: HashMap::new(),
            u_over: HashMap::new(),
            y_cache: Mutex::new(HashMap::new()),
            psi_cache: Mutex::new(HashMap::new()),
            u_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Redraws every clock whose source vertex lies in Gamma1 from an
    /// alternate seed, leaving all other clocks untouched. Exercises the
    /// independence of the Gamma1 and Gamma2 clock families.
    pub fn with_gamma1_reseed(mut self, alt: u64) -> Result<Self> {
        if self.d < 3 {
            return Err(Error::arg(
                "gamma classification needs dimension >= 3".to_string(),
            ));
        }
        self.gamma1_alt = Some(alt);
        Ok(self)
    }

    /// Pins Y(x) to an explicit value (hand-built fields in tests).
    pub fn override_y(&mut self, x: Vertex, value: f64) {
        self.y_over.insert(x, value);
    }

    /// Pins U(x, y) to an explicit value.
    pub fn override_u(&mut self, x: Vertex, y: Vertex, value: f64) {
        self.u_over.insert((x, y), value);
    }

    #[must_use]
    pub fn env(&self) -> &WeightField {
        &self.env
    }

    #[must_use]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.d
    }

    fn seed_for(&self, base: u64, x: &Vertex) -> u64 {
        match self.gamma1_alt {
            Some(alt) => {
                let class = gamma_class(x, self.d).expect("dimension checked at construction");
                if class.tag == GammaTag::Gamma1 {
                    derive_seed(alt, base, 0)
                } else {
                    base
                }
            }
            None => base,
        }
    }

    /// Recovery clock Y(x) ~ Exp(1).
    #[must_use]
    pub fn y(&self, x: &Vertex) -> f64 {
        if let Some(&v) = self.y_over.get(x) {
            return v;
        }
        if let Some(&v) = self.y_cache.lock().unwrap().get(x) {
            return v;
        }
        let seed = self.seed_for(self.y_seed, x);
        let mut words = Vec::with_capacity(x.dim() + 1);
        words.push(seed);
        x.extend_words(&mut words);
        let v = exp_from_uniform(u64_to_open01(hash_words(&words)), 1.0);
        self.y_cache.lock().unwrap().insert(x.clone(), v);
        v
    }

    /// Auxiliary clock Psi(x) ~ Exp(lambda Theta); infinite when
    /// lambda Theta = 0.
    #[must_use]
    pub fn psi(&self, x: &Vertex) -> f64 {
        if let Some(&v) = self.psi_cache.lock().unwrap().get(x) {
            return v;
        }
        let rate = self.lambda * self.env.dist().theta();
        let mut words = Vec::with_capacity(x.dim() + 1);
        words.push(self.psi_seed);
        x.extend_words(&mut words);
        let v = exp_from_uniform(u64_to_open01(hash_words(&words)), rate);
        self.psi_cache.lock().unwrap().insert(x.clone(), v);
        v
    }

    /// Directed infection clock U(x, x +- e_axis) ~ Exp(lambda rho/(2d)).
    /// Infinite when the edge weight is zero. U(x,y) and U(y,x) are
    /// independent samples.
    #[must_use]
    pub fn u_step(&self, x: &Vertex, axis: usize, positive: bool) -> f64 {
        let dir = (axis as u32) << 1 | u32::from(positive);
        let key = (x.clone(), dir);
        if !self.u_over.is_empty() {
            let y = x.step(axis, positive);
            if let Some(&v) = self.u_over.get(&(x.clone(), y)) {
                return v;
            }
        }
        if let Some(&v) = self.u_cache.lock().unwrap().get(&key) {
            return v;
        }
        let rho = self.env.weight_step(x, axis, positive);
        let rate = self.lambda * rho / (2.0 * self.d as f64);
        let seed = self.seed_for(self.u_seed, x);
        let mut words = Vec::with_capacity(x.dim() + 2);
        words.push(seed);
        words.push(u64::from(dir));
        x.extend_words(&mut words);
        let v = exp_from_uniform(u64_to_open01(hash_words(&words)), rate);
        self.u_cache.lock().unwrap().insert(key, v);
        v
    }

    /// Directed clock by endpoints; errors unless `y` is a neighbor of `x`.
    pub fn u(&self, x: &Vertex, y: &Vertex) -> Result<f64> {
        let (axis, positive) = directed_step(x, y)?;
        Ok(self.u_step(x, axis, positive))
    }
}

fn directed_step(x: &Vertex, y: &Vertex) -> Result<(usize, bool)> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let mut found = None;
    for (i, (a, b)) in x.coords().iter().zip(y.coords()).enumerate() {
        if a != b {
            if (a - b).abs() != 1 || found.is_some() {
                return Err(Error::arg(format!("{x} and {y} are not nearest neighbors")));
            }
            found = Some((i, b > a));
        }
    }
    found.ok_or_else(|| Error::arg(format!("{x} and {y} are not nearest neighbors")))
}

/// Vertex predicate restricting which vertices a path may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubgraphFilter {
    All,
    Gamma1Only,
    Gamma2Only,
    Box(u32),
}

impl SubgraphFilter {
    pub fn passes(&self, x: &Vertex) -> Result<bool> {
        match self {
            SubgraphFilter::All => Ok(true),
            SubgraphFilter::Box(r) => Ok(x.norm1() <= u64::from(*r)),
            SubgraphFilter::Gamma1Only => {
                Ok(gamma_class(x, x.dim())?.tag == GammaTag::Gamma1)
            }
            SubgraphFilter::Gamma2Only => Ok(gamma_class(x, x.dim())?.in_gamma2()),
        }
    }
}

/// Result of an infectious-path closure: the reached set in visit order,
/// parent links for path extraction, and explicit truncation markers.
#[derive(Debug, Clone)]
pub struct ReachOutcome {
    reached: Vec<Vertex>,
    reached_set: HashSet<Vertex>,
    parents: HashMap<Vertex, Vertex>,
    pub truncated: bool,
    pub stopped_at: Option<Vertex>,
}

impl ReachOutcome {
    #[must_use]
    pub fn reached(&self) -> &[Vertex] {
        &self.reached
    }

    #[must_use]
    pub fn contains(&self, x: &Vertex) -> bool {
        self.reached_set.contains(x)
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.reached.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.reached.is_empty()
    }

    /// Path from the discovering source to `target` along parent links;
    /// `None` when the target was not reached.
    #[must_use]
    pub fn path_to(&self, target: &Vertex) -> Option<Vec<Vertex>> {
        if !self.reached_set.contains(target) {
            return None;
        }
        let mut path = vec![target.clone()];
        let mut cur = target;
        while let Some(p) = self.parents.get(cur) {
            path.push(p.clone());
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Breadth-first closure of `sources` under the directed relation
/// x -> y iff x ~ y, y passes the filter, and U(x,y) < Y(x).
///
/// Exactly the "ever reached by an infectious path inside the filter"
/// set; with `filter = Gamma1Only` and source {O} this realizes D1. The
/// closure halts early when `stop` fires on a newly reached vertex or
/// when the reached set hits `budget`; both halts are flagged, never
/// silent.
pub fn infectious_reachable(
    field: &GraphicalField,
    sources: &[Vertex],
    filter: SubgraphFilter,
    budget: usize,
    stop: Option<&dyn Fn(&Vertex) -> bool>,
) -> Result<ReachOutcome> {
    if sources.is_empty() {
        return Err(Error::arg("reachability needs at least one source"));
    }
    if budget == 0 {
        return Err(Error::arg("budget must be >= 1"));
    }
    let d = field.dim();
    let mut out = ReachOutcome {
        reached: Vec::new(),
        reached_set: HashSet::new(),
        parents: HashMap::new(),
        truncated: false,
        stopped_at: None,
    };
    let mut queue = VecDeque::new();
    for s in sources {
        if s.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: s.dim(),
            });
        }
        if !filter.passes(s)? {
            return Err(Error::arg(format!("source {s} fails the subgraph filter")));
        }
        if out.reached_set.insert(s.clone()) {
            if out.reached.len() >= budget {
                out.truncated = true;
                return Ok(out);
            }
            out.reached.push(s.clone());
            queue.push_back(s.clone());
            if let Some(pred) = stop {
                if pred(s) {
                    out.stopped_at = Some(s.clone());
                    return Ok(out);
                }
            }
        }
    }
    'bfs: while let Some(x) = queue.pop_front() {
        let y_clock = field.y(&x);
        for axis in 0..d {
            for positive in [false, true] {
                let target = x.step(axis, positive);
                if out.reached_set.contains(&target) {
                    continue;
                }
                if !filter.passes(&target)? {
                    continue;
                }
                if field.u_step(&x, axis, positive) < y_clock {
                    if out.reached.len() >= budget {
                        out.truncated = true;
                        break 'bfs;
                    }
                    out.reached_set.insert(target.clone());
                    out.reached.push(target.clone());
                    out.parents.insert(target.clone(), x.clone());
                    queue.push_back(target.clone());
                    if let Some(pred) = stop {
                        if pred(&target) {
                            out.stopped_at = Some(target);
                            break 'bfs;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// One-step front from Gamma1 into Gamma3: for each x in `b`, the
/// Gamma3 neighbors y = x + e_j (block axis j) with U(x,y) < Y(x).
/// Returned as (source, target) pairs; targets are distinct across
/// distinct sources because the block pattern of a target determines its
/// source.
pub fn d2_front(field: &GraphicalField, b: &[Vertex]) -> Result<Vec<(Vertex, Vertex)>> {
    let d = field.dim();
    let bsize = crate::lattice::block_size(d)?;
    let mut pairs = Vec::new();
    for x in b {
        let class = gamma_class(x, d)?;
        if class.tag != GammaTag::Gamma1 {
            return Err(Error::arg(format!("{x} is not in Gamma1")));
        }
        let y_clock = field.y(x);
        for axis in d - bsize..d {
            if field.u_step(x, axis, true) < y_clock {
                pairs.push((x.clone(), x.step(axis, true)));
            }
        }
    }
    Ok(pairs)
}

/// Direction of the auxiliary-clock comparison in a q event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QDirection {
    /// Y(x) < Psi(x) for every x (the literal event definition).
    #[default]
    YBelowPsi,
    /// Psi(x) < Y(x) for every x.
    PsiBelowY,
}

/// True iff the clock comparison holds at every vertex of `a`
/// (vacuously true for the empty set).
#[must_use]
pub fn sample_q_event(field: &GraphicalField, a: &[Vertex], direction: QDirection) -> bool {
    a.iter().all(|x| match direction {
        QDirection::YBelowPsi => field.y(x) < field.psi(x),
        QDirection::PsiBelowY => field.psi(x) < field.y(x),
    })
}

/// Closed-form P(Y(x) < Psi(x)) for one vertex: 1/(1 + lambda Theta).
#[must_use]
pub fn q_single_probability(lambda: f64, theta: f64) -> f64 {
    1.0 / (1.0 + lambda * theta)
}

/// Analytic E[|D2(x)| | q({x})] for a single Gamma1 vertex: conditioned
/// on Y winning, Y ~ Exp(1 + lambda Theta), and each of the b(d) block
/// neighbors fires independently with probability E_rho(1 - e^{-lambda
/// rho Y/(2d)}). Evaluated by quadrature.
pub fn d2_conditional_mean(
    d: usize,
    lambda: f64,
    dist: &crate::environment::RhoDistribution,
) -> Result<f64> {
    let b = crate::lattice::block_size(d)? as f64;
    let rate = 1.0 + lambda * dist.theta();
    let c = lambda / (2.0 * d as f64);
    let horizon = 45.0 / rate;
    let integral = adaptive_simpson(
        &|t: f64| rate * (-rate * t).exp() * dist.one_minus_laplace(c * t),
        0.0,
        horizon,
        1e-12,
    )?;
    Ok(b * integral)
}
