//! QBER estimation by public comparison of a random sample of the sifted key.
//! Sampled bits are disclosed and therefore removed from both keys.

use rand::Rng;

use crate::postproc::PostprocError;
use crate::session::SiftedKey;

/// Minimum disclosed sample when the key is long enough to afford it.
pub const MIN_SAMPLE: usize = 4000;

/// `max(4000, ceil(n / 10))`.
pub fn default_sample_size(n: usize) -> usize {
    MIN_SAMPLE.max(n.div_ceil(10))
}

/// How many sifted bits a session discloses for QBER estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleRule {
    /// [`default_sample_size`] when that leaves at least half the key,
    /// otherwise `ceil(n / 10)`.
    #[default]
    Auto,
    Fixed(usize),
}

impl SampleRule {
    pub fn sample_size(self, n: usize) -> usize {
        match self {
            SampleRule::Auto if n >= 2 * MIN_SAMPLE => default_sample_size(n),
            SampleRule::Auto => n.div_ceil(10),
            SampleRule::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub mismatches: usize,
    pub sample_size: usize,
    pub key_a: SiftedKey,
    pub key_b: SiftedKey,
}

/// Sorted uniform random subset of `0..n` of size `k`.
pub fn choose_sample<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Removes `positions` (sorted, unique) from a key.
pub fn remove_positions(key: &SiftedKey, positions: &[usize]) -> SiftedKey {
    let mut out = SiftedKey::default();
    let mut skip = positions.iter().peekable();
    for (i, (&bit, &clock)) in key.bits.iter().zip(&key.clock_indices).enumerate() {
        if skip.peek() == Some(&&i) {
            skip.next();
            continue;
        }
        out.bits.push(bit);
        out.clock_indices.push(clock);
    }
    out
}

pub fn estimate_qber<R: Rng + ?Sized>(
    key_a: &SiftedKey,
    key_b: &SiftedKey,
    sample_size: usize,
    rng: &mut R,
) -> Result<QberEstimate, PostprocError> {
    let n = key_a.len();
    if key_b.len() != n {
        return Err(PostprocError::LengthMismatch(n, key_b.len()));
    }
    if sample_size == 0 || sample_size > n {
        return Err(PostprocError::InsufficientData {
            needed: sample_size.max(1),
            available: n,
        });
    }
    let positions = choose_sample(n, sample_size, rng);
    let mismatches = positions
        .iter()
        .filter(|&&i| key_a.bits[i] != key_b.bits[i])
        .count();
    Ok(QberEstimate {
        qber: mismatches as f64 / sample_size as f64,
        mismatches,
        sample_size,
        key_a: remove_positions(key_a, &positions),
        key_b: remove_positions(key_b, &positions),
    })
}
