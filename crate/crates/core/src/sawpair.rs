//! Structured self-avoiding walks on the upper lattice sector, pair
//! collision statistics, the harmonic-mean union bound, and the
//! second-moment survival lower bound assembled from them.
//!
//! The walk takes a forced block step (+e_j for a uniformly chosen block
//! axis j) at every step index divisible by the block period, and
//! otherwise a free step chosen uniformly among the not-yet-visited
//! neighbors along free axes. Block steps raise the block-coordinate sum
//! by one, so the sum after n steps from a sector start equals
//! 1 + floor(n / period): paths can only share vertices when their step
//! indices lie in the same period window, which is what keeps collisions
//! between independent walks rare in high dimension.

use crate::error::{Error, Result};
use crate::lattice::{block_period, block_size, gamma_class, GammaTag, Vertex};
use crate::numeric::{binomial_se, LogMeanAcc};
use crate::rng::{derive_seed, tags, Stream};
use rayon::prelude::*;
use std::collections::HashSet;

const RESAMPLE_TAG: u64 = 0x5A17;
const TOP_SHARE_LIMIT: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct SawPath {
    vertices: Vec<Vertex>,
    d: usize,
    block_period: usize,
    block_size: usize,
}

impl SawPath {
    #[must_use]
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Number of steps (one less than the number of vertices).
    #[must_use]
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[must_use]
    pub fn block_period(&self) -> usize {
        self.block_period
    }

    #[must_use]
    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

/// Default truncation length for pair statistics: fifty period windows.
#[must_use]
pub fn default_saw_length(d: usize) -> usize {
    50 * block_period(d)
}

/// Draws one structured self-avoiding walk of `n` steps from `start`,
/// which must lie in the entry layer of the sector (block-coordinate sum
/// exactly one). Free steps are sampled by rejection against the visited
/// set, falling back to explicit enumeration; an empty free neighborhood
/// is a dead end, possible only at small d.
pub fn sample_saw(d: usize, n: usize, start: &Vertex, seed: u64) -> Result<SawPath> {
    let b = block_size(d)?;
    let period = block_period(d);
    let class = gamma_class(start, d)?;
    if class.tag != GammaTag::Gamma3 {
        return Err(Error::arg(format!(
            "walk start {start} must have block-coordinate sum 1 with nonnegative block part"
        )));
    }
    let free = d - b;
    let mut stream = Stream::new(seed);
    let mut vertices = Vec::with_capacity(n + 1);
    let mut visited: HashSet<Vertex> = HashSet::with_capacity(n + 1);
    vertices.push(start.clone());
    visited.insert(start.clone());
    for i in 1..=n {
        let cur = vertices.last().expect("path is nonempty");
        let next = if i % period == 0 {
            let j = free + stream.next_below(b as u64) as usize;
            cur.step(j, true)
        } else {
            let mut found = None;
            for _ in 0..64 {
                let pick = stream.next_below(2 * free as u64);
                let axis = (pick / 2) as usize;
                let positive = pick % 2 == 1;
                let cand = cur.step(axis, positive);
                if !visited.contains(&cand) {
                    found = Some(cand);
                    break;
                }
            }
            match found {
                Some(v) => v,
                None => {
                    let mut open = Vec::with_capacity(2 * free);
                    for axis in 0..free {
                        for positive in [false, true] {
                            let cand = cur.step(axis, positive);
                            if !visited.contains(&cand) {
                                open.push(cand);
                            }
                        }
                    }
                    if open.is_empty() {
                        return Err(Error::DeadEnd { step: i, dim: d });
                    }
                    let k = stream.next_below(open.len() as u64) as usize;
                    open.swap_remove(k)
                }
            }
        };
        debug_assert!(!visited.contains(&next), "self-avoidance violated at step {i}");
        visited.insert(next.clone());
        vertices.push(next);
    }
    Ok(SawPath {
        vertices,
        d,
        block_period: period,
        block_size: b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairStats {
    /// Indices i of the second path whose vertex appears anywhere on the
    /// first path.
    pub sigma_size: u64,
    /// Indices i >= 1 of the second path whose incoming directed edge
    /// also appears as a directed edge of the first path.
    pub zeta_size: u64,
    /// Smallest index in sigma, if any.
    pub kappa: Option<u64>,
}

/// Collision statistics of an ordered path pair.
pub fn pair_collision(alpha: &SawPath, q: &SawPath) -> Result<PairStats> {
    if alpha.d != q.d {
        return Err(Error::Dimension {
            expected: alpha.d,
            got: q.d,
        });
    }
    let alpha_vertices: HashSet<&Vertex> = alpha.vertices.iter().collect();
    let alpha_edges: HashSet<(&Vertex, &Vertex)> = alpha
        .vertices
        .windows(2)
        .map(|w| (&w[0], &w[1]))
        .collect();
    let mut sigma_size = 0u64;
    let mut zeta_size = 0u64;
    let mut kappa = None;
    for (i, v) in q.vertices.iter().enumerate() {
        if alpha_vertices.contains(v) {
            sigma_size += 1;
            if kappa.is_none() {
                kappa = Some(i as u64);
            }
            if i > 0 && alpha_edges.contains(&(&q.vertices[i - 1], v)) {
                zeta_size += 1;
            }
        }
    }
    Ok(PairStats {
        sigma_size,
        zeta_size,
        kappa,
    })
}

#[derive(Debug, Clone)]
pub struct PairSummary {
    pub d: usize,
    pub n: usize,
    pub x: Vertex,
    pub y: Vertex,
    pub trials: u64,
    pub kappa_hits: u64,
    /// Fraction of trials in which the paths collide at all (kappa <= n).
    pub kappa_prob: f64,
    pub kappa_se: f64,
    /// Mean of c1^{|sigma minus zeta|} c2^{|zeta|}; may overflow to
    /// infinity, in which case `weight_log_mean` stays meaningful.
    pub weight_mean: f64,
    pub weight_log_mean: f64,
    pub weight_rel_se: f64,
    /// Fraction of trials with at least one shared directed edge.
    pub zeta_frac: f64,
    pub weight_mean_zeta_zero: f64,
    pub weight_mean_zeta_pos: Option<f64>,
    /// Share of the weight sum carried by the single heaviest trial.
    pub top_share: f64,
    pub top_share_flagged: bool,
    pub dead_end_resamples: u64,
}

/// Samples `trials` independent path pairs from `x` and `y` and
/// aggregates collision statistics and the two-constant weight mean.
/// Weight products are accumulated in logarithmic space. Dead-end
/// samples are redrawn with a fresh stream and counted.
#[allow(clippy::too_many_arguments)]
pub fn pair_stats(
    d: usize,
    n: usize,
    x: &Vertex,
    y: &Vertex,
    c1: f64,
    c2: f64,
    trials: u64,
    master_seed: u64,
) -> Result<PairSummary> {
    if trials == 0 {
        return Err(Error::arg("trials must be >= 1"));
    }
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::arg(format!(
            "weight constants must be positive, got c1 = {c1}, c2 = {c2}"
        )));
    }
    sample_saw(d, 0, x, 0)?;
    sample_saw(d, 0, y, 0)?;
    let log_c1 = c1.ln();
    let log_c2 = c2.ln();
    let per_trial: Result<Vec<(PairStats, u64)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut dead_ends = 0u64;
            let alpha_master = derive_seed(master_seed, tags::SAW, 2 * i);
            let q_master = derive_seed(master_seed, tags::SAW, 2 * i + 1);
            let alpha = sample_with_resample(d, n, x, alpha_master, &mut dead_ends)?;
            let q = sample_with_resample(d, n, y, q_master, &mut dead_ends)?;
            Ok((pair_collision(&alpha, &q)?, dead_ends))
        })
        .collect();
    let per_trial = per_trial?;
    let mut acc = LogMeanAcc::new();
    let mut acc_zeta_zero = LogMeanAcc::new();
    let mut acc_zeta_pos = LogMeanAcc::new();
    let mut kappa_hits = 0u64;
    let mut zeta_hits = 0u64;
    let mut dead_end_resamples = 0u64;
    for (stats, dead_ends) in &per_trial {
        let log_w = (stats.sigma_size - stats.zeta_size) as f64 * log_c1
            + stats.zeta_size as f64 * log_c2;
        acc.push_log(log_w);
        if stats.zeta_size > 0 {
            zeta_hits += 1;
            acc_zeta_pos.push_log(log_w);
        } else {
            acc_zeta_zero.push_log(log_w);
        }
        if stats.kappa.is_some() {
            kappa_hits += 1;
        }
        dead_end_resamples += dead_ends;
    }
    let top_share = acc.top_share();
    Ok(PairSummary {
        d,
        n,
        x: x.clone(),
        y: y.clone(),
        trials,
        kappa_hits,
        kappa_prob: kappa_hits as f64 / trials as f64,
        kappa_se: binomial_se(kappa_hits, trials),
        weight_mean: acc.mean(),
        weight_log_mean: acc.log_mean(),
        weight_rel_se: acc.rel_se(),
        zeta_frac: zeta_hits as f64 / trials as f64,
        weight_mean_zeta_zero: acc_zeta_zero.mean(),
        weight_mean_zeta_pos: (zeta_hits > 0).then(|| acc_zeta_pos.mean()),
        top_share,
        top_share_flagged: top_share > TOP_SHARE_LIMIT,
        dead_end_resamples,
    })
}

fn sample_with_resample(
    d: usize,
    n: usize,
    start: &Vertex,
    master: u64,
    dead_ends: &mut u64,
) -> Result<SawPath> {
    for attempt in 0..1000 {
        match sample_saw(d, n, start, derive_seed(master, RESAMPLE_TAG, attempt)) {
            Ok(path) => return Ok(path),
            Err(Error::DeadEnd { .. }) => *dead_ends += 1,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Resource(format!(
        "1000 consecutive dead-end walks from {start} at d = {d}"
    )))
}

#[derive(Debug, Clone)]
pub struct EventSystem {
    probs: Vec<f64>,
    pair_probs: Vec<Vec<f64>>,
    q: Vec<f64>,
}

impl EventSystem {
    /// `probs[i]` = P(A_i), `pair_probs[i][j]` = P(A_i and A_j), `q` a
    /// probability vector of mixing weights.
    pub fn new(probs: Vec<f64>, pair_probs: Vec<Vec<f64>>, q: Vec<f64>) -> Result<Self> {
        let k = probs.len();
        if k == 0 {
            return Err(Error::arg("event system must be nonempty"));
        }
        if q.len() != k || pair_probs.len() != k {
            return Err(Error::arg("event system fields must have matching lengths"));
        }
        for (i, p) in probs.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::arg(format!("probs[{i}] = {p} must lie in (0, 1]")));
            }
        }
        for (i, row) in pair_probs.iter().enumerate() {
            if row.len() != k {
                return Err(Error::arg("pair probability matrix must be square"));
            }
            if (row[i] - probs[i]).abs() > 1e-12 {
                return Err(Error::arg(format!(
                    "diagonal pair_probs[{i}][{i}] = {} must equal probs[{i}] = {}",
                    row[i], probs[i]
                )));
            }
            for (j, pij) in row.iter().enumerate() {
                if !(*pij >= 0.0) || *pij > probs[i].min(probs[j]) + 1e-12 {
                    return Err(Error::arg(format!(
                        "pair_probs[{i}][{j}] = {pij} outside [0, min(P(A_i), P(A_j))]"
                    )));
                }
                if (pij - pair_probs[j][i]).abs() > 1e-12 {
                    return Err(Error::arg("pair probability matrix must be symmetric"));
                }
            }
        }
        let mut q_sum = 0.0;
        for (i, w) in q.iter().enumerate() {
            if !(*w >= 0.0) {
                return Err(Error::arg(format!("q[{i}] = {w} must be nonnegative")));
            }
            q_sum += w;
        }
        if (q_sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("q must sum to 1, got {q_sum}")));
        }
        Ok(EventSystem {
            probs,
            pair_probs,
            q,
        })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Harmonic-mean lower bound on P(union of the A_i):
/// 1 / sum_{i,j} q_i q_j P(A_i and A_j) / (P(A_i) P(A_j)).
pub fn harmonic_union_bound(sys: &EventSystem) -> Result<f64> {
    let k = sys.len();
    let mut denom = 0.0;
    for i in 0..k {
        if sys.probs[i] == 0.0 {
            return Err(Error::arg(format!("event {i} has zero probability")));
        }
        for j in 0..k {
            denom += sys.q[i] * sys.q[j] * sys.pair_probs[i][j] / (sys.probs[i] * sys.probs[j]);
        }
    }
    Ok(1.0 / denom)
}

#[derive(Debug, Clone)]
pub struct Lemma431Estimate {
    pub bound: f64,
    pub se: f64,
    pub m2: f64,
    pub c2: f64,
    pub pairs: usize,
    pub trials_per_pair: u64,
    /// Mean over ordered start pairs of the per-pair weight means, as a
    /// logarithm.
    pub grand_log_mean: f64,
    pub dead_end_resamples: u64,
    pub any_top_share_flagged: bool,
    pub pair_summaries: Vec<PairSummary>,
}

/// Second-moment survival lower bound over a start set `starts`: the
/// reciprocal of the average pair-weight expectation with constants
/// M2 = 3 Theta^2 / (E rho)^2 and C2 = (2d + lambda Theta)/(lambda E rho),
/// truncated at path length `n`. A finite-n proxy: the full statement is
/// a limit in n, so callers should read the trend, not the limit.
pub fn lemma431_bound(
    d: usize,
    lambda: f64,
    dist: &crate::environment::RhoDistribution,
    starts: &[Vertex],
    n: usize,
    trials: u64,
    master_seed: u64,
) -> Result<Lemma431Estimate> {
    let e_rho = dist.mean();
    if e_rho <= 0.0 {
        return Err(Error::arg("weight distribution must have positive mean"));
    }
    if !(lambda * e_rho > 1.0) {
        return Err(Error::arg(format!(
            "needs lambda * E rho > 1, got {}",
            lambda * e_rho
        )));
    }
    if starts.is_empty() {
        return Err(Error::arg("start set must be nonempty"));
    }
    let distinct: HashSet<&Vertex> = starts.iter().collect();
    if distinct.len() != starts.len() {
        return Err(Error::arg("start set must not contain duplicates"));
    }
    let theta = dist.theta();
    let m2 = 3.0 * theta * theta / (e_rho * e_rho);
    let c2 = (2.0 * d as f64 + lambda * theta) / (lambda * e_rho);
    let mut summaries = Vec::with_capacity(starts.len() * starts.len());
    let mut pair_index = 0u64;
    for x in starts {
        for y in starts {
            let pair_master = derive_seed(master_seed, tags::TRIAL, pair_index);
            summaries.push(pair_stats(d, n, x, y, m2, c2, trials, pair_master)?);
            pair_index += 1;
        }
    }
    let max_log = summaries
        .iter()
        .map(|s| s.weight_log_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled_sum: f64 = summaries
        .iter()
        .map(|s| (s.weight_log_mean - max_log).exp())
        .sum();
    let pairs = summaries.len();
    let grand_log_mean = max_log + (scaled_sum / pairs as f64).ln();
    let scaled_se_sq: f64 = summaries
        .iter()
        .map(|s| {
            let scaled = (s.weight_log_mean - max_log).exp();
            (scaled * s.weight_rel_se).powi(2)
        })
        .sum();
    let rel_se = scaled_se_sq.sqrt() / scaled_sum;
    let bound = (-grand_log_mean).exp();
    Ok(Lemma431Estimate {
        bound,
        se: bound * rel_se,
        m2,
        c2,
        pairs,
        trials_per_pair: trials,
        grand_log_mean,
        dead_end_resamples: summaries.iter().map(|s| s.dead_end_resamples).sum(),
        any_top_share_flagged: summaries.iter().any(|s| s.top_share_flagged),
        pair_summaries: summaries,
    })
}
