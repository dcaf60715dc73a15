//! Keyed pseudo-random streams and stateless keyed hashing.
//!
//! Reproducibility contract: every random quantity in the crate is a pure
//! function of a master seed plus a structured key (trial index, vertex
//! coordinates, edge, clock kind). Trials can therefore run in any order or
//! in parallel and still produce bit-identical results. Two primitives
//! implement this:
//!
//! * [`hash_words`]: a splitmix-style keyed hash of a word sequence, used
//!   both to derive per-trial seeds from `(master_seed, tag, index)` and as
//!   the stateless pseudo-random function behind lazily sampled
//!   environments and clock fields;
//! * [`Stream`]: a sequential splitmix64 generator seeded from a derived
//!   seed, used wherever an ordered stream of variates is consumed.

/// Finalizer from splitmix64: a bijective avalanche mix on 64 bits.
#[inline]
#[must_use]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Keyed hash of a word sequence. Order-sensitive and length-sensitive.
#[inline]
#[must_use]
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = GOLDEN ^ (words.len() as u64).wrapping_mul(0xA24B_AED4_963E_E407);
    for &w in words {
        h = mix64(h ^ w);
    }
    mix64(h)
}

/// Derives an independent stream seed from a master seed, a stream tag and
/// an index. Distinct `(tag, index)` pairs give statistically independent
/// streams.
#[inline]
#[must_use]
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    hash_words(&[master, tag, index])
}

/// Keyed hash of a byte string, little-endian packed into words.
#[must_use]
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut words: Vec<u64> = bytes
        .chunks(8)
        .map(|chunk| {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            u64::from_le_bytes(buf)
        })
        .collect();
    words.push(bytes.len() as u64);
    hash_words(&words)
}

/// Stream tags keeping the seed spaces of different consumers disjoint.
pub mod tags {
    /// Environment (edge weight) sampling.
    pub const ENV: u64 = 0x01;
    /// Epidemic dynamics event stream.
    pub const DYN: u64 = 0x02;
    /// Recovery clocks of a graphical field.
    pub const Y_CLOCK: u64 = 0x03;
    /// Transmission clocks of a graphical field.
    pub const U_CLOCK: u64 = 0x04;
    /// Comparison clocks of a graphical field.
    pub const PSI_CLOCK: u64 = 0x05;
    /// Random-walk trajectories.
    pub const WALK: u64 = 0x06;
    /// Self-avoiding-walk trajectories.
    pub const SAW: u64 = 0x07;
    /// Per-trial derivation inside an estimator.
    pub const TRIAL: u64 = 0x08;
}

/// Maps a hash value to a double in `[0, 1)` using the top 53 bits.
#[inline]
#[must_use]
pub fn u64_to_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maps a hash value to a double in the open interval `(0, 1)`; safe as the
/// argument of a logarithm.
#[inline]
#[must_use]
pub fn u64_to_open01(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF exponential variate from one uniform in `(0, 1)`.
/// Rate 0 yields positive infinity.
#[inline]
#[must_use]
pub fn exp_from_uniform(u_open: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -u_open.ln() / rate
}

/// Sequential splitmix64 generator.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    #[must_use]
    pub fn new(seed: u64) -> Self {
        Stream { state: seed }
    }

    /// Stream seeded from `(master, tag, index)`.
    #[must_use]
    pub fn derived(master: u64, tag: u64, index: u64) -> Self {
        Stream::new(derive_seed(master, tag, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform double in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        u64_to_f64(self.next_u64())
    }

    /// Uniform double in `(0, 1)`.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        u64_to_open01(self.next_u64())
    }

    /// Exponential variate with the given rate (strictly positive outcome).
    #[inline]
    pub fn next_exp(&mut self, rate: f64) -> f64 {
        exp_from_uniform(self.next_open01(), rate)
    }

    /// Exact uniform integer in `[0, n)` via multiply-with-rejection.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        loop {
            let x = self.next_u64();
            let m = (x as u128).wrapping_mul(n as u128);
            let lo = m as u64;
            if lo < n {
                let threshold = n.wrapping_neg() % n;
                if lo < threshold {
                    continue;
                }
            }
            return (m >> 64) as u64;
        }
    }

    /// Bernoulli draw with success probability `p`.
    #[inline]
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}
