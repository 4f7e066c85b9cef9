//! Cascade interactive error correction.
//!
//! Alice holds the reference key and only answers parity queries. Bob drives
//! the protocol:
//!
//! 1. Pass 1 splits the key into contiguous blocks of `k1 = ceil(0.73 / q)`.
//!    Pass `i > 1` applies a seeded uniform permutation and uses blocks of
//!    `2^(i-1) k1`.
//! 2. Bob asks for the parity of every block of the pass. Each block whose
//!    parity differs holds an odd number of errors; a binary search, asking
//!    for the parity of the left half at each level, isolates and flips one.
//! 3. A flipped bit changes the parity of the block containing it in every
//!    earlier pass, exposing further odd blocks there. Pending blocks are
//!    processed smallest pass first until no disclosed block disagrees.
//!
//! All odd blocks of a single pass are searched together, one round trip per
//! level. Every parity bit Alice sends counts as leaked.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::postproc::PostprocError;
use crate::session::messages::{Message, ParityQuery};
use crate::session::transport::{memory_pair, Tap, Transport};
use crate::Bit;

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    pub passes: u32,
    pub k1_coefficient: f64,
    /// Permutation seed for each pass; entry 0 is unused (pass 1 is unshuffled).
    pub shuffle_seeds: Vec<u64>,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            passes: 4,
            k1_coefficient: 0.73,
            shuffle_seeds: Vec::new(),
        }
    }
}

impl CascadeParams {
    pub fn with_random_seeds<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        self.shuffle_seeds = (0..self.passes).map(|_| rng.random()).collect();
        self
    }

    fn seed(&self, pass: u32) -> Result<u64, PostprocError> {
        if pass == 0 {
            return Ok(0);
        }
        self.shuffle_seeds
            .get(pass as usize)
            .copied()
            .ok_or_else(|| PostprocError::param("shuffle_seeds", format!("no seed for pass {}", pass + 1)))
    }
}

/// `ceil(coefficient / q)`, clamped to `1..=n`.
pub fn first_block_size(qber_est: f64, n: usize, coefficient: f64) -> usize {
    let k = (coefficient / qber_est).ceil();
    if !k.is_finite() || k >= n as f64 {
        n.max(1)
    } else {
        (k as usize).max(1)
    }
}

fn pass_block_size(k1: usize, pass: u32, n: usize) -> usize {
    k1.checked_shl(pass)
        .filter(|&k| k >> pass == k1)
        .unwrap_or(usize::MAX)
        .min(n)
        .max(1)
}

/// Seeded Fisher-Yates permutation of `0..n`.
pub fn shuffle_order(n: usize, seed: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Key positions of one pass, in pass order, cut into blocks.
struct PassLayout {
    order: Vec<u32>,
    position: Vec<u32>,
    block_size: usize,
}

impl PassLayout {
    fn new(n: usize, block_size: usize, seed: u64, shuffled: bool) -> Self {
        let order = if shuffled {
            shuffle_order(n, seed)
        } else {
            (0..n as u32).collect()
        };
        let mut position = vec![0u32; n];
        for (p, &k) in order.iter().enumerate() {
            position[k as usize] = p as u32;
        }
        Self {
            order,
            position,
            block_size,
        }
    }

    fn num_blocks(&self) -> usize {
        self.order.len().div_ceil(self.block_size)
    }

    fn block_range(&self, b: usize) -> (usize, usize) {
        let start = b * self.block_size;
        (start, (start + self.block_size).min(self.order.len()))
    }

    fn block_of(&self, key_index: usize) -> usize {
        self.position[key_index] as usize / self.block_size
    }

    fn parity(&self, key: &[Bit], start: usize, end: usize) -> Bit {
        self.order[start..end]
            .iter()
            .fold(0, |acc, &k| acc ^ key[k as usize])
    }
}

fn check_qber(qber_est: f64) -> Result<(), PostprocError> {
    if !(qber_est > 0.0 && qber_est < 0.5) {
        return Err(PostprocError::param(
            "qber_est",
            format!("{qber_est} is outside (0, 0.5)"),
        ));
    }
    Ok(())
}

fn unexpected(expected: &str, got: &Message) -> PostprocError {
    match got {
        Message::Abort { reason } => PostprocError::Aborted(reason.clone()),
        other => PostprocError::Protocol(format!("expected {expected}, got {:?}", other.kind())),
    }
}

fn recv_msg<T: Transport + ?Sized>(t: &mut T) -> Result<Message, PostprocError> {
    Ok(Message::from_frame(&t.recv()?)?)
}

fn send_msg<T: Transport + ?Sized>(t: &mut T, msg: &Message) -> Result<(), PostprocError> {
    Ok(t.send(&msg.to_frame())?)
}

/// Alice's side. Returns the number of parity bits disclosed.
pub fn cascade_serve<T: Transport + ?Sized>(
    key_a: &[Bit],
    qber_est: f64,
    params: &CascadeParams,
    transport: &mut T,
) -> Result<u64, PostprocError> {
    check_qber(qber_est)?;
    let n = key_a.len();
    if n == 0 {
        return Err(PostprocError::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let k1 = first_block_size(qber_est, n, params.k1_coefficient);
    let mut layouts: Vec<PassLayout> = Vec::new();
    let mut leaked = 0u64;

    for pass in 0..params.passes {
        let block_size = pass_block_size(k1, pass, n);
        let seed = params.seed(pass)?;
        send_msg(
            transport,
            &Message::ShuffleSeed {
                pass: pass as u8,
                block_size: block_size as u32,
                seed,
            },
        )?;
        layouts.push(PassLayout::new(n, block_size, seed, pass > 0));

        loop {
            let queries = match recv_msg(transport)? {
                Message::Parities { queries } => queries,
                other => return Err(unexpected("PARITIES", &other)),
            };
            if queries.is_empty() {
                send_msg(transport, &Message::ParityReply { parities: vec![] })?;
                break;
            }
            let parities = queries
                .iter()
                .map(|q| {
                    let layout = layouts.get(q.pass as usize).ok_or_else(|| {
                        PostprocError::Protocol(format!("query for undisclosed pass {}", q.pass))
                    })?;
                    let (s, e) = (q.start as usize, q.end as usize);
                    if s >= e || e > n {
                        return Err(PostprocError::Protocol(format!(
                            "bad parity range {s}..{e} for key of {n} bits"
                        )));
                    }
                    Ok(layout.parity(key_a, s, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            leaked += parities.len() as u64;
            send_msg(transport, &Message::ParityReply { parities })?;
        }
    }
    Ok(leaked)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeOutcome {
    pub corrected: Vec<Bit>,
    pub leaked_bits: u64,
    pub flips: usize,
    pub round_trips: usize,
}

struct Corrector<'t, T: Transport + ?Sized> {
    transport: &'t mut T,
    key: Vec<Bit>,
    layouts: Vec<PassLayout>,
    /// `diff[p][b]`: disclosed parity of block `b` in pass `p` differs from Bob's.
    diff: Vec<Vec<bool>>,
    leaked: u64,
    flips: usize,
    round_trips: usize,
}

impl<T: Transport + ?Sized> Corrector<'_, T> {
    fn ask(&mut self, queries: Vec<ParityQuery>) -> Result<Vec<Bit>, PostprocError> {
        let count = queries.len();
        send_msg(self.transport, &Message::Parities { queries })?;
        self.round_trips += 1;
        match recv_msg(self.transport)? {
            Message::ParityReply { parities } if parities.len() == count => {
                self.leaked += count as u64;
                Ok(parities)
            }
            Message::ParityReply { parities } => Err(PostprocError::Protocol(format!(
                "asked {count} parities, got {}",
                parities.len()
            ))),
            other => Err(unexpected("PARITY_REPLY", &other)),
        }
    }

    fn flip(&mut self, key_index: usize) {
        self.key[key_index] ^= 1;
        self.flips += 1;
        for (layout, diff) in self.layouts.iter().zip(self.diff.iter_mut()) {
            diff[layout.block_of(key_index)] ^= true;
        }
    }

    /// Binary search in every odd block of `pass` at once.
    fn search_pass(&mut self, pass: usize) -> Result<(), PostprocError> {
        let mut searches: Vec<(usize, usize)> = self.diff[pass]
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(b, _)| self.layouts[pass].block_range(b))
            .collect();

        while searches.iter().any(|&(s, e)| e - s > 1) {
            let active: Vec<usize> = (0..searches.len())
                .filter(|&i| searches[i].1 - searches[i].0 > 1)
                .collect();
            let queries = active
                .iter()
                .map(|&i| {
                    let (s, e) = searches[i];
                    ParityQuery {
                        pass: pass as u8,
                        start: s as u32,
                        end: (s + (e - s) / 2) as u32,
                    }
                })
                .collect();
            let replies = self.ask(queries)?;
            for (&i, &alice) in active.iter().zip(&replies) {
                let (s, e) = searches[i];
                let mid = s + (e - s) / 2;
                let bob = self.layouts[pass].parity(&self.key, s, mid);
                searches[i] = if alice != bob { (s, mid) } else { (mid, e) };
            }
        }

        for (s, _) in searches {
            let key_index = self.layouts[pass].order[s] as usize;
            self.flip(key_index);
        }
        Ok(())
    }

    fn run_pass(&mut self, pass: u32, block_size: usize, seed: u64) -> Result<(), PostprocError> {
        let n = self.key.len();
        let layout = PassLayout::new(n, block_size, seed, pass > 0);
        let queries = (0..layout.num_blocks())
            .map(|b| {
                let (s, e) = layout.block_range(b);
                ParityQuery {
                    pass: pass as u8,
                    start: s as u32,
                    end: e as u32,
                }
            })
            .collect();
        self.layouts.push(layout);
        let alice = self.ask(queries)?;
        let layout = self.layouts.last().unwrap();
        let diff = alice
            .iter()
            .enumerate()
            .map(|(b, &a)| {
                let (s, e) = layout.block_range(b);
                a != layout.parity(&self.key, s, e)
            })
            .collect();
        self.diff.push(diff);

        while let Some(p) = self.diff.iter().position(|d| d.iter().any(|&x| x)) {
            self.search_pass(p)?;
        }
        Ok(())
    }
}

/// Bob's side: corrects `key_b` toward Alice's key over `transport`.
pub fn cascade_correct_remote<T: Transport + ?Sized>(
    key_b: &[Bit],
    passes: u32,
    transport: &mut T,
) -> Result<CascadeOutcome, PostprocError> {
    let n = key_b.len();
    let mut c = Corrector {
        transport,
        key: key_b.to_vec(),
        layouts: Vec::new(),
        diff: Vec::new(),
        leaked: 0,
        flips: 0,
        round_trips: 0,
    };
    for pass in 0..passes {
        let (block_size, seed) = match recv_msg(c.transport)? {
            Message::ShuffleSeed {
                pass: p,
                block_size,
                seed,
            } if u32::from(p) == pass && block_size >= 1 && block_size as usize <= n => {
                (block_size as usize, seed)
            }
            Message::ShuffleSeed { pass: p, block_size, .. } => {
                return Err(PostprocError::Protocol(format!(
                    "bad SHUFFLE_SEED for pass {pass}: pass {p}, block size {block_size}"
                )))
            }
            other => return Err(unexpected("SHUFFLE_SEED", &other)),
        };
        c.run_pass(pass, block_size, seed)?;
        c.ask(Vec::new())?;
    }
    Ok(CascadeOutcome {
        corrected: c.key,
        leaked_bits: c.leaked,
        flips: c.flips,
        round_trips: c.round_trips,
    })
}

/// Result of a two-party Cascade run over an in-memory link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeRun {
    pub corrected: Vec<Bit>,
    /// Parity bits counted by Bob's corrector.
    pub leaked_bits: u64,
    /// Parity bits counted by Alice's server.
    pub served_bits: u64,
    /// Parity bits observed on the wire by a transport tap.
    pub tapped_bits: u64,
    pub flips: usize,
}

/// Runs both roles in two threads connected by an audited in-memory link.
pub fn cascade_correct(
    key_a: &[Bit],
    key_b: &[Bit],
    qber_est: f64,
    params: &CascadeParams,
) -> Result<CascadeRun, PostprocError> {
    if key_a.len() != key_b.len() {
        return Err(PostprocError::LengthMismatch(key_a.len(), key_b.len()));
    }
    check_qber(qber_est)?;
    let (mut alice_end, bob_end) = memory_pair();
    let (mut bob_end, counters) = Tap::new(bob_end);
    let key_a = key_a.to_vec();
    let alice_params = params.clone();
    let alice = std::thread::spawn(move || {
        cascade_serve(&key_a, qber_est, &alice_params, &mut alice_end)
    });
    let bob = cascade_correct_remote(key_b, params.passes, &mut bob_end);
    drop(bob_end);
    let served = alice
        .join()
        .map_err(|_| PostprocError::Protocol("alice thread panicked".into()))?;
    let bob = bob?;
    Ok(CascadeRun {
        corrected: bob.corrected,
        leaked_bits: bob.leaked_bits,
        served_bits: served?,
        tapped_bits: counters.parity_bits(),
        flips: bob.flips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn params(seed: u64) -> CascadeParams {
        CascadeParams::default().with_random_seeds(&mut seeded(seed))
    }

    fn mismatches(a: &[Bit], b: &[Bit]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x != y).count()
    }

    #[test]
    fn block_sizes() {
        assert_eq!(first_block_size(0.05, 1024, 0.73), 15);
        assert_eq!(first_block_size(0.1, 64, 0.73), 8);
        assert_eq!(first_block_size(0.001, 64, 0.73), 64);
        assert_eq!(pass_block_size(15, 3, 1024), 120);
        assert_eq!(pass_block_size(600, 3, 1024), 1024);
        assert_eq!(pass_block_size(usize::MAX / 2, 3, 10), 10);
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let a = shuffle_order(1000, 5);
        assert_eq!(a, shuffle_order(1000, 5));
        assert_ne!(a, shuffle_order(1000, 6));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..1000).collect::<Vec<u32>>());
    }

    #[test]
    fn error_free_keys_leak_one_bit_per_block() {
        let key: Vec<Bit> = (0..1024).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let run = cascade_correct(&key, &key, 0.05, &params(1)).unwrap();
        assert_eq!(run.corrected, key);
        assert_eq!(run.flips, 0);
        // k1 = 15: ceil(1024/15) + ceil(1024/30) + ceil(1024/60) + ceil(1024/120)
        let expected: u64 = [15u64, 30, 60, 120].iter().map(|k| 1024u64.div_ceil(*k)).sum();
        assert_eq!(expected, 131);
        assert_eq!(run.leaked_bits, expected);
        assert_eq!(run.tapped_bits, expected);
        assert_eq!(run.served_bits, expected);
    }

    #[test]
    fn single_error_costs_three_extra_parities() {
        let key_a = vec![0u8; 64];
        let mut key_b = key_a.clone();
        key_b[13] = 1;
        let run = cascade_correct(&key_a, &key_b, 0.1, &params(2)).unwrap();
        assert_eq!(run.corrected, key_a);
        assert_eq!(run.flips, 1);
        // pass blocks 8 + 4 + 2 + 1, plus log2(8) = 3 search parities
        assert_eq!(run.leaked_bits, 8 + 4 + 2 + 1 + 3);
    }

    #[test]
    fn corrects_random_errors_and_never_adds_any() {
        let mut rng = seeded(3);
        for trial in 0..20 {
            let n = 2000;
            let key_a: Vec<Bit> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
            let key_b: Vec<Bit> = key_a
                .iter()
                .map(|&b| b ^ u8::from(rng.random_bool(0.05)))
                .collect();
            let before = mismatches(&key_a, &key_b);
            let run = cascade_correct(&key_a, &key_b, 0.05, &params(100 + trial)).unwrap();
            let after = mismatches(&key_a, &run.corrected);
            assert!(after <= before);
            assert_eq!(run.flips, before - after);
            assert_eq!(run.leaked_bits, run.tapped_bits);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = vec![0u8; 10];
        assert!(cascade_correct(&k, &k, 0.0, &params(4)).is_err());
        assert!(cascade_correct(&k, &k, 0.5, &params(4)).is_err());
        assert!(cascade_correct(&k, &k[..9], 0.1, &params(4)).is_err());
        let no_seeds = CascadeParams::default();
        assert!(cascade_correct(&k, &k, 0.1, &no_seeds).is_err());
    }
}
