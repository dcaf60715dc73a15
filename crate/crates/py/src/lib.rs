//! Python bindings. Estimator results come back as plain dicts so the
//! numbers drop straight into notebooks; the two stateful objects
//! (weight distributions, sampled environments) are thin wrapper classes.

use epilattice::dynamics::{ModelKind, SimulationConfig};
use epilattice::environment::{parse_rho, RhoDistribution, WeightField};
use epilattice::error::Error;
use epilattice::estimators::{
    estimate_critical, estimate_survival, graphical_equivalence, laplace_limit_check,
    mean_field_target, subcritical_path_expectation, Measure,
};
use epilattice::graphical::q_single_probability;
use epilattice::lattice::{ball_enumerate, ball_size, gamma_class, GammaTag, Vertex};
use epilattice::rwalk::{ruin_probability, simulate_hitting, HitDirection, WalkSpec};
use epilattice::sawpair::{
    default_saw_length, harmonic_union_bound as harmonic_bound_impl, lemma431_bound, pair_stats,
    EventSystem,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn vertex_from(coords: Vec<i32>) -> PyResult<Vertex> {
    if coords.is_empty() {
        return Err(PyValueError::new_err("vertex needs at least one coordinate"));
    }
    Ok(Vertex::new(coords))
}

/// Edge weight distribution with support in [0, theta].
#[pyclass(name = "Rho", frozen, from_py_object)]
#[derive(Clone)]
struct PyRho {
    inner: RhoDistribution,
}

#[pymethods]
impl PyRho {
    /// Parses the canonical text form: const:v, bern:p:scale, unif:theta,
    /// or disc:v,p;v,p;...
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_rho(text).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn constant(v: f64) -> PyResult<Self> {
        Ok(Self {
            inner: RhoDistribution::constant(v).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn bernoulli(p: f64, scale: f64) -> PyResult<Self> {
        Ok(Self {
            inner: RhoDistribution::bernoulli(p, scale).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn uniform(theta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: RhoDistribution::uniform(theta).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn discrete(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: RhoDistribution::discrete(atoms).map_err(to_py_err)?,
        })
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    fn quantile(&self, u: f64) -> f64 {
        self.inner.quantile(u)
    }

    fn __repr__(&self) -> String {
        format!("Rho('{}')", self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// One sampled i.i.d. edge-weight environment, addressed by seed.
#[pyclass(name = "Environment", frozen)]
struct PyEnvironment {
    inner: WeightField,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    fn new(seed: u64, rho: PyRho) -> Self {
        Self {
            inner: WeightField::new(seed, rho.inner),
        }
    }

    /// Weight of the undirected edge between x and one of its neighbors.
    fn weight(&self, x: Vec<i32>, y: Vec<i32>) -> PyResult<f64> {
        let x = vertex_from(x)?;
        let y = vertex_from(y)?;
        self.inner.weight(&x, &y).map_err(to_py_err)
    }

    /// Weight of the edge from x along `axis` in the chosen direction.
    fn weight_step(&self, x: Vec<i32>, axis: usize, positive: bool) -> PyResult<f64> {
        Ok(self.inner.weight_step(&vertex_from(x)?, axis, positive))
    }

    /// Sum of the 2d incident edge weights at x.
    fn incident_sum(&self, x: Vec<i32>) -> PyResult<f64> {
        Ok(self.inner.incident_sum(&vertex_from(x)?))
    }

    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __repr__(&self) -> String {
        format!("Environment(seed={}, rho='{}')", self.inner.seed(), self.inner.dist())
    }
}

/// Number of lattice points within l1 distance r of the origin.
#[pyfunction]
fn ball_count(d: usize, r: u32) -> u64 {
    ball_size(d, r)
}

/// All lattice points within l1 distance r of the origin.
#[pyfunction]
fn ball(d: usize, r: u32) -> PyResult<Vec<Vec<i32>>> {
    let budget = ball_size(d, r).saturating_add(1);
    Ok(ball_enumerate(d, r, budget)
        .map_err(to_py_err)?
        .into_iter()
        .map(|v| v.coords().to_vec())
        .collect())
}

/// Region of a vertex by its trailing block coordinates: "gamma1",
/// "gamma3", "gamma2_interior", or "outside".
#[pyfunction]
fn block_region(coords: Vec<i32>, d: usize) -> PyResult<&'static str> {
    let v = vertex_from(coords)?;
    let class = gamma_class(&v, d).map_err(to_py_err)?;
    Ok(match class.tag {
        GammaTag::Gamma1 => "gamma1",
        GammaTag::Gamma3 => "gamma3",
        GammaTag::Gamma2Interior => "gamma2_interior",
        GammaTag::Outside => "outside",
    })
}

/// Limit survival probability (lambda E[rho] - 1) / (lambda E[rho]),
/// clamped at zero.
#[pyfunction]
fn mean_field_survival(lam: f64, rho: PyRho) -> f64 {
    mean_field_target(lam, &rho.inner).target
}

fn build_config(
    dim: usize,
    lam: f64,
    rho: &PyRho,
    tmax: f64,
    nmax: u64,
    box_radius: Option<u32>,
) -> PyResult<SimulationConfig> {
    let mut cfg = SimulationConfig::new(dim, lam, rho.inner.clone()).map_err(to_py_err)?;
    cfg.t_max = tmax;
    cfg.n_max = nmax;
    cfg.box_radius = box_radius;
    Ok(cfg)
}

fn parse_model(model: &str) -> PyResult<ModelKind> {
    ModelKind::parse(model).map_err(to_py_err)
}

/// Survival probability estimate from Monte Carlo epidemics.
#[pyfunction]
#[pyo3(signature = (model, dim, lam, rho, trials=1000, seed=1, tmax=1e4, nmax=1000, box_radius=None, quenched_env=None))]
#[allow(clippy::too_many_arguments)]
fn survival<'py>(
    py: Python<'py>,
    model: &str,
    dim: usize,
    lam: f64,
    rho: PyRho,
    trials: u64,
    seed: u64,
    tmax: f64,
    nmax: u64,
    box_radius: Option<u32>,
    quenched_env: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = build_config(dim, lam, &rho, tmax, nmax, box_radius)?;
    let measure = match quenched_env {
        Some(env_seed) => Measure::Quenched { env_seed },
        None => Measure::Annealed,
    };
    let rec = estimate_survival(parse_model(model)?, &cfg, trials, seed, measure)
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("value", rec.value)?;
    out.set_item("se", rec.se)?;
    out.set_item("ci95", rec.ci95)?;
    out.set_item("trials", rec.trials)?;
    out.set_item("censored", rec.censored)?;
    out.set_item("target", mean_field_target(lam, &rho.inner).target)?;
    out.set_item("digest", format!("{:016x}", rec.config_digest))?;
    Ok(out)
}

/// Bisection bracket for the critical infection rate.
#[pyfunction]
#[pyo3(signature = (model, dim, rho, lo, hi, tol=0.25, trials=400, seed=1, tmax=1e4, nmax=1000))]
#[allow(clippy::too_many_arguments)]
fn critical_bracket<'py>(
    py: Python<'py>,
    model: &str,
    dim: usize,
    rho: PyRho,
    lo: f64,
    hi: f64,
    tol: f64,
    trials: u64,
    seed: u64,
    tmax: f64,
    nmax: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = build_config(dim, lo.max(0.0), &rho, tmax, nmax, None)?;
    let est = estimate_critical(parse_model(model)?, &cfg, (lo, hi), tol, trials, seed)
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("lo", est.lo)?;
    out.set_item("hi", est.hi)?;
    out.set_item("probes", est.probes.len())?;
    let rows: Vec<(f64, f64, bool)> = est
        .probes
        .iter()
        .map(|p| (p.lambda, p.record.value, p.significant))
        .collect();
    out.set_item("probe_rows", rows)?;
    Ok(out)
}

/// Per-vertex agreement of SIR dynamics with infectious-path
/// reachability; one dict per vertex of the box.
#[pyfunction]
#[pyo3(signature = (dim, lam, rho, box_radius=4, trials=10_000, seed=1))]
fn equivalence_rows<'py>(
    py: Python<'py>,
    dim: usize,
    lam: f64,
    rho: PyRho,
    box_radius: u32,
    trials: u64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = graphical_equivalence(dim, lam, &rho.inner, box_radius, trials, seed)
        .map_err(to_py_err)?;
    rows.iter()
        .map(|r| {
            let out = PyDict::new(py);
            out.set_item("vertex", r.vertex.coords().to_vec())?;
            out.set_item("p_dynamics", r.p_dynamics)?;
            out.set_item("p_graphical", r.p_graphical)?;
            out.set_item("diff", r.diff)?;
            out.set_item("pooled_se", r.pooled_se)?;
            out.set_item("within_three_se", r.within_three_se)?;
            Ok(out)
        })
        .collect()
}

/// Probability that the biased walk hits K before 0 (or the reverse).
#[pyfunction]
#[pyo3(signature = (theta, k, start=1, upper=true))]
fn walk_hit_probability(theta: f64, k: u64, start: u64, upper: bool) -> PyResult<f64> {
    let spec = WalkSpec::with_start(theta, start).map_err(to_py_err)?;
    let direction = if upper {
        HitDirection::HitKBefore0
    } else {
        HitDirection::Hit0BeforeK
    };
    ruin_probability(spec, k, direction).map_err(to_py_err)
}

/// Monte Carlo hitting estimate for the biased walk.
#[pyfunction]
#[pyo3(signature = (theta, k, trials=100_000, seed=1, start=1, step_cap=100_000_000))]
fn walk_simulate<'py>(
    py: Python<'py>,
    theta: f64,
    k: u64,
    trials: u64,
    seed: u64,
    start: u64,
    step_cap: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = WalkSpec::with_start(theta, start).map_err(to_py_err)?;
    let est = simulate_hitting(spec, k, trials, step_cap, seed).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("p_upper", est.p_upper)?;
    out.set_item("p_upper_se", est.upper_se)?;
    out.set_item("p_lower", est.p_lower)?;
    out.set_item("p_lower_se", est.lower_se)?;
    out.set_item("tau_mean", est.tau_mean)?;
    out.set_item("tau_ratio", est.tau_ratio)?;
    out.set_item("capped", est.capped)?;
    Ok(out)
}

/// Finite-dimension Laplace transform value and its large-d limit.
#[pyfunction]
#[pyo3(signature = (dim, lam, rho, s, theta=None))]
fn laplace_check<'py>(
    py: Python<'py>,
    dim: u64,
    lam: f64,
    rho: PyRho,
    s: f64,
    theta: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let theta = theta.unwrap_or_else(|| rho.inner.theta());
    let check = laplace_limit_check(dim, lam, theta, &rho.inner, s).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("finite_d", check.finite_d)?;
    out.set_item("limit", check.limit)?;
    out.set_item("gap", (check.finite_d - check.limit).abs())?;
    out.set_item("inner_power", check.inner_power)?;
    out.set_item("outer_power", check.outer_power)?;
    Ok(out)
}

/// Closed-form per-path infection bound in the subcritical regime.
#[pyfunction]
fn path_bound<'py>(
    py: Python<'py>,
    gamma: f64,
    dim: usize,
    n: u32,
    rho: PyRho,
) -> PyResult<Bound<'py, PyDict>> {
    let b = subcritical_path_expectation(gamma, dim, n, &rho.inner).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("per_step", b.per_step)?;
    out.set_item("per_path", b.per_path)?;
    out.set_item("total_bound", b.total_bound)?;
    out.set_item("envelope", b.envelope)?;
    Ok(out)
}

/// Lower bound on P(union A_i) from first and second moments under a
/// probability vector q.
#[pyfunction]
fn harmonic_union_bound(
    probs: Vec<f64>,
    pair_probs: Vec<Vec<f64>>,
    q: Vec<f64>,
) -> PyResult<f64> {
    let sys = EventSystem::new(probs, pair_probs, q).map_err(to_py_err)?;
    harmonic_bound_impl(&sys).map_err(to_py_err)
}

/// Collision statistics for a pair of independent structured
/// self-avoiding walks.
#[pyfunction]
#[pyo3(signature = (dim, trials=1000, seed=1, n=None, x=None, y=None, c1=1.0, c2=1.0))]
#[allow(clippy::too_many_arguments)]
fn saw_pair_stats<'py>(
    py: Python<'py>,
    dim: usize,
    trials: u64,
    seed: u64,
    n: Option<usize>,
    x: Option<Vec<i32>>,
    y: Option<Vec<i32>>,
    c1: f64,
    c2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let n = n.unwrap_or_else(|| default_saw_length(dim));
    let default_x = Vertex::unit(dim, dim.saturating_sub(1), true);
    let x = match x {
        Some(c) => vertex_from(c)?,
        None => default_x.clone(),
    };
    let y = match y {
        Some(c) => vertex_from(c)?,
        None => default_x.step(0, false),
    };
    let s = pair_stats(dim, n, &x, &y, c1, c2, trials, seed).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("collision_prob", s.kappa_prob)?;
    out.set_item("collision_se", s.kappa_se)?;
    out.set_item("weight_mean", s.weight_mean)?;
    out.set_item("weight_log_mean", s.weight_log_mean)?;
    out.set_item("zeta_frac", s.zeta_frac)?;
    out.set_item("top_share_flagged", s.top_share_flagged)?;
    out.set_item("dead_end_resamples", s.dead_end_resamples)?;
    Ok(out)
}

/// Second-moment survival lower bound assembled from walk-pair collision
/// weights over a set of start vertices.
#[pyfunction]
#[pyo3(signature = (dim, lam, rho, bset, trials=1000, seed=1, n=None))]
#[allow(clippy::too_many_arguments)]
fn saw_survival_bound<'py>(
    py: Python<'py>,
    dim: usize,
    lam: f64,
    rho: PyRho,
    bset: usize,
    trials: u64,
    seed: u64,
    n: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    if bset == 0 {
        return Err(PyValueError::new_err("bset must be >= 1"));
    }
    let n = n.unwrap_or_else(|| default_saw_length(dim));
    let base = Vertex::unit(dim, dim.saturating_sub(1), true);
    let starts: Vec<Vertex> = (0..bset)
        .map(|k| {
            let mut v = base.clone();
            for _ in 0..k {
                v = v.step(0, true);
            }
            v
        })
        .collect();
    let est = lemma431_bound(dim, lam, &rho.inner, &starts, n, trials, seed).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("bound", est.bound)?;
    out.set_item("se", est.se)?;
    out.set_item("m2", est.m2)?;
    out.set_item("c2", est.c2)?;
    out.set_item("pairs", est.pairs)?;
    out.set_item("top_share_flagged", est.any_top_share_flagged)?;
    Ok(out)
}

/// Probability that a single vertex carries no outgoing infection arrow
/// before its recovery clock under the dominating rates.
#[pyfunction]
fn isolation_probability(lam: f64, theta: f64) -> f64 {
    q_single_probability(lam, theta)
}

#[pymodule]
fn epilattice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRho>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_function(wrap_pyfunction!(ball_count, m)?)?;
    m.add_function(wrap_pyfunction!(ball, m)?)?;
    m.add_function(wrap_pyfunction!(block_region, m)?)?;
    m.add_function(wrap_pyfunction!(mean_field_survival, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(critical_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence_rows, m)?)?;
    m.add_function(wrap_pyfunction!(walk_hit_probability, m)?)?;
    m.add_function(wrap_pyfunction!(walk_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_check, m)?)?;
    m.add_function(wrap_pyfunction!(path_bound, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_union_bound, m)?)?;
    m.add_function(wrap_pyfunction!(saw_pair_stats, m)?)?;
    m.add_function(wrap_pyfunction!(saw_survival_bound, m)?)?;
    m.add_function(wrap_pyfunction!(isolation_probability, m)?)?;
    Ok(())
}
