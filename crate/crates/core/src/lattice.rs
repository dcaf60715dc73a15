//! Integer lattice geometry: vertices of Z^d, nearest-neighbor structure,
//! l1 balls, and the block-coordinate classification used by the
//! high-dimension couplings.
//!
//! The last `block_size(d) = floor(d / ln d)` coordinates of a vertex are
//! its block coordinates; the rest are free coordinates. Vertices split
//! into three classes plus a remainder:
//!
//! * `Gamma1`: all block coordinates zero;
//! * `Gamma3`: block coordinates nonnegative with sum exactly 1;
//! * `Gamma2Interior`: block coordinates nonnegative with sum at least 2;
//! * `Outside`: everything else (some negative block coordinate).
//!
//! `Gamma2` as a region means `Gamma3 ∪ Gamma2Interior`. All logarithms
//! here are natural logarithms.

use crate::error::{Error, Result};
use smallvec::SmallVec;
use std::fmt;

type Coords = SmallVec<[i32; 8]>;

/// A lattice vertex; its dimension is the length of its coordinate vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    coords: Coords,
}

impl Vertex {
    #[must_use]
    pub fn new(coords: impl Into<Vec<i32>>) -> Self {
        Vertex {
            coords: SmallVec::from_vec(coords.into()),
        }
    }

    #[must_use]
    pub fn from_slice(coords: &[i32]) -> Self {
        Vertex {
            coords: SmallVec::from_slice(coords),
        }
    }

    /// The origin of Z^d.
    #[must_use]
    pub fn origin(d: usize) -> Self {
        Vertex {
            coords: smallvec::smallvec![0; d],
        }
    }

    /// Unit vector along `axis` with the given sign.
    #[must_use]
    pub fn unit(d: usize, axis: usize, positive: bool) -> Self {
        let mut v = Vertex::origin(d);
        v.coords[axis] = if positive { 1 } else { -1 };
        v
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[must_use]
    pub fn coords(&self) -> &[i32] {
        &self.coords
    }

    /// l1 norm.
    #[must_use]
    pub fn norm1(&self) -> u64 {
        self.coords.iter().map(|&c| u64::from(c.unsigned_abs())).sum()
    }

    /// Returns the vertex shifted by one step along `axis`.
    #[must_use]
    pub fn step(&self, axis: usize, positive: bool) -> Self {
        let mut v = self.clone();
        v.coords[axis] += if positive { 1 } else { -1 };
        v
    }

    /// In-place single-coordinate shift; pairs with [`Vertex::unstep`] for
    /// allocation-free neighbor probing.
    pub fn step_mut(&mut self, axis: usize, positive: bool) {
        self.coords[axis] += if positive { 1 } else { -1 };
    }

    pub fn unstep_mut(&mut self, axis: usize, positive: bool) {
        self.coords[axis] -= if positive { 1 } else { -1 };
    }

    /// Hash words for keyed sampling: the raw coordinates, sign-extended.
    pub(crate) fn extend_words(&self, words: &mut Vec<u64>) {
        words.extend(self.coords.iter().map(|&c| i64::from(c) as u64));
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{:?}", self.coords.as_slice())
    }
}

impl fmt::Display for Vertex {
    /// Colon-separated coordinates, e.g. `1:-3:0`. Used in CSV fields.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ":")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

fn check_dim(x: &Vertex, d: usize) -> Result<()> {
    if x.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: x.dim(),
        });
    }
    Ok(())
}

/// The 2d nearest neighbors of `x`, in canonical order: coordinate index
/// ascending, minus direction before plus.
pub fn neighbors(x: &Vertex, d: usize) -> Result<Vec<Vertex>> {
    check_dim(x, d)?;
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        out.push(x.step(axis, false));
        out.push(x.step(axis, true));
    }
    Ok(out)
}

/// Number of vertices in the closed l1 ball of radius `r` in Z^d.
///
/// `|B(d, r)| = sum_k 2^k C(d, k) C(r, k) ... ` computed by the standard
/// recurrence `B(d, r) = B(d-1, r) + B(d, r-1) + B(d-1, r-1) - B(d-1, r-1)`
/// folded into a Delannoy-style table; saturates at `u64::MAX` on overflow.
#[must_use]
pub fn ball_size(d: usize, r: u32) -> u64 {
    // B(d, r) with B(0, r) = 1 and B(d, 0) = 1:
    // B(d, r) = B(d - 1, r) + B(d, r - 1) + B(d - 1, r - 1).
    let r = r as usize;
    let mut prev = vec![1u64; r + 1];
    for _ in 1..=d {
        let mut cur = vec![0u64; r + 1];
        cur[0] = 1;
        for j in 1..=r {
            cur[j] = prev[j]
                .saturating_add(cur[j - 1])
                .saturating_add(prev[j - 1]);
        }
        prev = cur;
    }
    prev[r]
}

/// Enumerates the closed l1 ball `{x : |x|_1 <= r}` in Z^d, in
/// lexicographic coordinate order. Errors when the ball would exceed
/// `budget` vertices.
pub fn ball_enumerate(d: usize, r: u32, budget: u64) -> Result<Vec<Vertex>> {
    if d == 0 {
        return Err(Error::arg("ball_enumerate: dimension must be at least 1"));
    }
    let size = ball_size(d, r);
    if size > budget {
        return Err(Error::Resource(format!(
            "ball of dimension {d} radius {r} has {size} vertices, over budget {budget}"
        )));
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut scratch = vec![0i32; d];
    fn rec(axis: usize, remaining: i32, scratch: &mut [i32], out: &mut Vec<Vertex>) {
        if axis == scratch.len() - 1 {
            for c in -remaining..=remaining {
                scratch[axis] = c;
                out.push(Vertex::from_slice(scratch));
            }
            return;
        }
        for c in -remaining..=remaining {
            scratch[axis] = c;
            rec(axis + 1, remaining - c.abs(), scratch, out);
        }
    }
    rec(0, r as i32, &mut scratch, &mut out);
    Ok(out)
}

/// `floor(d / ln d)`: the number of trailing block coordinates. Requires
/// `d >= 3` so the block is a proper subset of the coordinates.
pub fn block_size(d: usize) -> Result<usize> {
    if d < 3 {
        return Err(Error::arg(format!(
            "block coordinates need dimension >= 3, got {d}"
        )));
    }
    Ok((d as f64 / (d as f64).ln()).floor() as usize)
}

/// `floor(ln d)`: the spacing between forced block steps of the structured
/// self-avoiding walk.
#[must_use]
pub fn block_period(d: usize) -> usize {
    (d as f64).ln().floor() as usize
}

/// Classification of a vertex by its block coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GammaTag {
    Gamma1,
    Gamma2Interior,
    Gamma3,
    Outside,
}

/// Result of [`gamma_class`]: the class tag together with the block size
/// that was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GammaClass {
    pub tag: GammaTag,
    pub block_size: usize,
}

impl GammaClass {
    /// True when the vertex lies in the region Gamma2 = Gamma3 plus its
    /// interior.
    #[must_use]
    pub fn in_gamma2(&self) -> bool {
        matches!(self.tag, GammaTag::Gamma3 | GammaTag::Gamma2Interior)
    }
}

/// Classifies `x` by its trailing `block_size(d)` coordinates.
pub fn gamma_class(x: &Vertex, d: usize) -> Result<GammaClass> {
    check_dim(x, d)?;
    let b = block_size(d)?;
    let block = &x.coords()[d - b..];
    let mut sum: i64 = 0;
    let mut any_negative = false;
    for &c in block {
        if c < 0 {
            any_negative = true;
            break;
        }
        sum += i64::from(c);
    }
    let tag = if any_negative {
        GammaTag::Outside
    } else if sum == 0 {
        GammaTag::Gamma1
    } else if sum == 1 {
        GammaTag::Gamma3
    } else {
        GammaTag::Gamma2Interior
    };
    Ok(GammaClass { tag, block_size: b })
}

/// Sum of the block coordinates (signed). Callers that need the ladder
/// level of a walk use this with the walk's own block size.
#[must_use]
pub fn block_coordinate_sum(x: &Vertex, b: usize) -> i64 {
    let d = x.dim();
    x.coords()[d - b..].iter().map(|&c| i64::from(c)).sum()
}
