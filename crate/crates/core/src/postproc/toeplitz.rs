//! Toeplitz-matrix universal hashing for privacy amplification.
//!
//! An `m x n` binary Toeplitz matrix is fixed by `n + m - 1` seed bits:
//! `T[i][j] = seed[i - j + n - 1]`. Row `i` read right to left is the seed
//! window `seed[i..i + n]`, so each output bit is the parity of the reversed
//! key ANDed with a sliding seed window. Both are packed into u64 words.

use crate::bits::to_words;
use crate::{Bit, ParamError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaParams {
    pub seed: Vec<Bit>,
    pub out_len: usize,
}

impl PaParams {
    pub fn seed_len(key_len: usize, out_len: usize) -> usize {
        (key_len + out_len).saturating_sub(1)
    }
}

/// Hashes an `n`-bit key to `out_len` bits.
pub fn privacy_amplify(key: &[Bit], pa: &PaParams) -> Result<Vec<Bit>, ParamError> {
    let n = key.len();
    let m = pa.out_len;
    if m > n {
        return Err(ParamError::new(
            "out_len",
            format!("output length {m} exceeds key length {n}"),
        ));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if pa.seed.len() != n + m - 1 {
        return Err(ParamError::new(
            "seed",
            format!("expected {} seed bits, got {}", n + m - 1, pa.seed.len()),
        ));
    }

    let reversed: Vec<Bit> = key.iter().rev().copied().collect();
    let key_words = to_words(&reversed);
    let mut seed_words = to_words(&pa.seed);
    seed_words.push(0);
    let last_mask = match n % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    };

    let out = (0..m)
        .map(|i| {
            let (w0, shift) = (i / 64, i % 64);
            let mut acc = 0u64;
            for (k, &kw) in key_words.iter().enumerate() {
                let lo = seed_words[w0 + k] >> shift;
                let hi = if shift == 0 {
                    0
                } else {
                    seed_words.get(w0 + k + 1).copied().unwrap_or(0) << (64 - shift)
                };
                let mut window = lo | hi;
                if k + 1 == key_words.len() {
                    window &= last_mask;
                }
                acc ^= window & kw;
            }
            (acc.count_ones() & 1) as Bit
        })
        .collect();
    Ok(out)
}
