//! Bit-vector helpers shared by the wire codecs and the hash functions.

use crate::Bit;

/// Packs bits MSB-first; the final byte is zero padded.
pub fn pack_bits(bits: &[Bit]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Vec<Bit> {
    (0..len).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect()
}

/// Packs bits into little-endian u64 words (bit `i` is bit `i % 64` of word `i / 64`).
pub fn to_words(bits: &[Bit]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        words[i / 64] |= u64::from(b & 1) << (i % 64);
    }
    words
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hash of a key as exchanged in `KEY_HASH`: FNV-1a over the bit count
/// (u64 LE) followed by the MSB-first packed bits.
pub fn key_hash(bits: &[Bit]) -> u64 {
    let mut buf = (bits.len() as u64).to_le_bytes().to_vec();
    buf.extend(pack_bits(bits));
    fnv1a64(&buf)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parity(bits: impl IntoIterator<Item = Bit>) -> Bit {
    bits.into_iter().fold(0, |acc, b| acc ^ b)
}
