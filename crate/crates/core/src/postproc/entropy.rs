//! Information-theoretic bookkeeping for key distillation.
//!
//! Eve's information per bit under individual attacks on single-photon BB84 is
//! taken as `tau(q) = log2(1 + 4q - 4q^2)`. Error correction at the Shannon
//! limit costs `h(q)`. The secret fraction `1 - tau(q) - h(q)` vanishes at
//! q* ~ 0.1138; that is the security limit used for distance limits.

/// `h(q) = -q log2 q - (1-q) log2(1-q)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Privacy-amplification shrink per bit, `log2(1 + 4q - 4q^2)`.
pub fn pa_shrink(q: f64) -> f64 {
    (1.0 + 4.0 * q - 4.0 * q * q).log2()
}

/// Secret fraction with error-correction inefficiency `f_ec` (1.0 = Shannon limit).
pub fn secret_fraction_with(q: f64, f_ec: f64) -> f64 {
    (1.0 - pa_shrink(q) - f_ec * binary_entropy(q)).max(0.0)
}

pub fn secret_fraction(q: f64) -> f64 {
    secret_fraction_with(q, 1.0)
}

/// Zero crossing of `1 - tau(q) - f_ec h(q)` on `(0, 0.5)`, by bisection.
pub fn security_limit_qber(f_ec: f64) -> f64 {
    let g = |q: f64| 1.0 - pa_shrink(q) - f_ec * binary_entropy(q);
    let (mut lo, mut hi) = (1e-12, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `max(0, floor(n (1 - tau(q)) - leaked_ec - safety_bits))`.
pub fn final_key_length(n: u64, qber: f64, leaked_ec: u64, safety_bits: u64) -> u64 {
    let m = (n as f64 * (1.0 - pa_shrink(qber))).floor() - leaked_ec as f64 - safety_bits as f64;
    if m <= 0.0 {
        0
    } else {
        m as u64
    }
}
