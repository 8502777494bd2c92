//! Result verification with k-bit checksums under a user-chosen polynomial.
//!
//! The chain maps each correct-result digest to a k-bit checksum whose CRC
//! polynomial is taken from a random 128-bit seed known only to the user and
//! the chain. The user recomputes checksums over what the service provider
//! returned and compares the two multisets.

use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::record::Digest;

/// Bits 31, 35, ..., 127: bit `k - 1` for every admissible width `k`.
pub const SEED_FLOOR: u128 = {
    let mut c = 0u128;
    let mut k = 8;
    while k <= 32 {
        c |= 1 << (4 * k - 1);
        k += 1;
    }
    c
};

/// Admissible mapped widths: 32, 36, ..., 128.
pub const WIDTHS: core::ops::RangeInclusive<u32> = 1..=25;

pub fn width(n: u32) -> u32 {
    4 * n + 28
}

/// Smallest and largest width accepted by the checksum primitive.
pub const MIN_CRC_BITS: u32 = 8;
pub const MAX_CRC_BITS: u32 = 128;

/// Random polynomial source shared by the user and the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VerificationSeed(u128);

impl VerificationSeed {
    /// `r = r' | c`, forcing a nonzero leading coefficient at every width.
    pub fn new(r_prime: u128) -> Self {
        VerificationSeed(r_prime | SEED_FLOOR)
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let hi = rng.next_u64() as u128;
        let lo = rng.next_u64() as u128;
        Self::new(hi << 64 | lo)
    }

    pub fn get(self) -> u128 {
        self.0
    }

    /// Low `k` bits: the reflected polynomial used at width `k`.
    pub fn polynomial(self, k: u32) -> u128 {
        self.0 & low_bits(k)
    }
}

fn low_bits(k: u32) -> u128 {
    if k >= 128 {
        u128::MAX
    } else {
        (1u128 << k) - 1
    }
}

fn check_width(k: u32) -> Result<()> {
    if !(MIN_CRC_BITS..=MAX_CRC_BITS).contains(&k) {
        return Err(Error::Parameter(format!(
            "checksum width {k} outside {MIN_CRC_BITS}..={MAX_CRC_BITS}"
        )));
    }
    Ok(())
}

/// Bitwise k-bit CRC: all-ones init, reflected shift, all-ones final XOR.
pub fn improved_crc(data: &[u8], k: u32, seed: VerificationSeed) -> Result<u128> {
    check_width(k)?;
    let mask = low_bits(k);
    let poly = seed.polynomial(k);
    let mut crc = mask;
    for &byte in data {
        crc ^= byte as u128;
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ poly
            } else {
                crc >> 1
            };
        }
    }
    Ok(crc ^ mask)
}

/// Table-driven form of [`improved_crc`] for one fixed `(k, seed)`.
#[derive(Clone)]
pub struct ImprovedCrc {
    k: u32,
    mask: u128,
    table: [u128; 256],
}

impl ImprovedCrc {
    pub fn new(k: u32, seed: VerificationSeed) -> Result<Self> {
        check_width(k)?;
        let poly = seed.polynomial(k);
        let mut table = [0u128; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let mut crc = i as u128;
            for _ in 0..8 {
                crc = if crc & 1 == 1 {
                    (crc >> 1) ^ poly
                } else {
                    crc >> 1
                };
            }
            *slot = crc;
        }
        Ok(ImprovedCrc {
            k,
            mask: low_bits(k),
            table,
        })
    }

    pub fn width(&self) -> u32 {
        self.k
    }

    pub fn checksum(&self, data: &[u8]) -> u128 {
        let mut crc = self.mask;
        for &byte in data {
            crc = (crc >> 8) ^ self.table[((crc ^ byte as u128) & 0xFF) as usize];
        }
        crc ^ self.mask
    }
}

impl core::fmt::Debug for ImprovedCrc {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ImprovedCrc")
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

/// `N_h / 2^k`: the chance one fabricated item lands on some checksum.
/// Detection holds when this is below `1 - alpha`.
pub fn false_accept_bound(n_h: u64, k: u32) -> f64 {
    libm::ldexp(n_h as f64, -(k as i32))
}

/// Natural log of `prod_{i=2}^{n_h} (1 - (i - 1) / 2^k)`, the probability
/// that `n_h` checksums are pairwise distinct.
///
/// Summed exactly up to 2^20 items; beyond that a lower bound from
/// `ln(1 - x) >= -x - x^2` (valid for `x <= 1/2`) is used.
pub fn log_distinct_probability(n_h: u64, k: u32) -> f64 {
    if n_h < 2 {
        return 0.0;
    }
    let scale = libm::ldexp(1.0, -(k as i32));
    let x_max = (n_h - 1) as f64 * scale;
    if x_max >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if n_h <= 1 << 20 {
        return (1..n_h).map(|m| libm::log1p(-(m as f64) * scale)).sum();
    }
    if x_max > 0.5 {
        return f64::NEG_INFINITY;
    }
    let n = (n_h - 1) as f64;
    let s1 = n * (n + 1.0) / 2.0 * scale;
    let s2 = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0 * scale * scale;
    -s1 - s2
}

/// Checksum width chosen for a result set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Width {
    Mapped(u32),
    /// No admissible width meets both bounds; full digests are sent.
    Raw,
}

/// Smallest admissible width meeting both the detection bound `alpha` and
/// the distinctness bound `beta`.
pub fn select_k(n_h: u64, alpha: f64, beta: f64) -> Result<Width> {
    for (name, p) in [("alpha", alpha), ("beta", beta)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!(
                "{name} must lie in (0, 1), got {p}"
            )));
        }
    }
    let miss = 1.0 - alpha;
    let log_beta = libm::log(beta);
    for n in WIDTHS {
        let k = width(n);
        if false_accept_bound(n_h, k) < miss && log_distinct_probability(n_h, k) > log_beta {
            return Ok(Width::Mapped(k));
        }
    }
    Ok(Width::Raw)
}

/// Checksums of the correct results, or their digests in raw mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VerificationObject {
    Mapped { k: u32, checksums: Vec<u128> },
    Raw { digests: Vec<Digest> },
}

const MODE_MAPPED: u8 = 0;
const MODE_RAW: u8 = 1;

impl VerificationObject {
    pub fn len(&self) -> usize {
        match self {
            VerificationObject::Mapped { checksums, .. } => checksums.len(),
            VerificationObject::Raw { digests } => digests.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> Width {
        match self {
            VerificationObject::Mapped { k, .. } => Width::Mapped(*k),
            VerificationObject::Raw { .. } => Width::Raw,
        }
    }

    fn empty_like(&self) -> Self {
        match self {
            VerificationObject::Mapped { k, .. } => VerificationObject::Mapped {
                k: *k,
                checksums: Vec::new(),
            },
            VerificationObject::Raw { .. } => VerificationObject::Raw {
                digests: Vec::new(),
            },
        }
    }

    /// Wire form: mode byte, width byte (mapped only), little-endian u32
    /// count, then `ceil(k / 8)`-byte little-endian checksums or 32-byte digests.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            VerificationObject::Mapped { k, checksums } => {
                out.push(MODE_MAPPED);
                out.push(*k as u8);
                out.extend_from_slice(&(checksums.len() as u32).to_le_bytes());
                let bytes = k.div_ceil(8) as usize;
                for c in checksums {
                    out.extend_from_slice(&c.to_le_bytes()[..bytes]);
                }
            }
            VerificationObject::Raw { digests } => {
                out.push(MODE_RAW);
                out.extend_from_slice(&(digests.len() as u32).to_le_bytes());
                for d in digests {
                    out.extend_from_slice(d);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Decode(format!("verification object: {what}"));
        let (&mode, rest) = bytes.split_first().ok_or_else(|| bad("empty buffer"))?;
        match mode {
            MODE_MAPPED => {
                let (&k, rest) = rest.split_first().ok_or_else(|| bad("missing width"))?;
                let k = k as u32;
                check_width(k).map_err(|_| bad("width out of range"))?;
                let (count, body) = split_count(rest).ok_or_else(|| bad("missing count"))?;
                let size = k.div_ceil(8) as usize;
                if body.len() != count * size {
                    return Err(bad("length does not match count"));
                }
                let checksums = body
                    .chunks_exact(size)
                    .map(|chunk| {
                        let mut word = [0u8; 16];
                        word[..size].copy_from_slice(chunk);
                        u128::from_le_bytes(word)
                    })
                    .collect::<Vec<_>>();
                if checksums.iter().any(|c| c & !low_bits(k) != 0) {
                    return Err(bad("checksum wider than k bits"));
                }
                Ok(VerificationObject::Mapped { k, checksums })
            }
            MODE_RAW => {
                let (count, body) = split_count(rest).ok_or_else(|| bad("missing count"))?;
                if body.len() != count * 32 {
                    return Err(bad("length does not match count"));
                }
                let digests = body
                    .chunks_exact(32)
                    .map(|c| c.try_into().expect("32-byte chunk"))
                    .collect();
                Ok(VerificationObject::Raw { digests })
            }
            other => Err(bad(&format!("unknown mode {other}"))),
        }
    }
}

fn split_count(bytes: &[u8]) -> Option<(usize, &[u8])> {
    let (count, body) = bytes.split_at_checked(4)?;
    Some((u32::from_le_bytes(count.try_into().ok()?) as usize, body))
}

/// Chain side: compresses the correct-result digests.
pub fn build_vo(
    digests: &[Digest],
    seed: VerificationSeed,
    alpha: f64,
    beta: f64,
) -> Result<VerificationObject> {
    match select_k(digests.len() as u64, alpha, beta)? {
        Width::Mapped(k) => build_vo_with_width(digests, seed, k),
        Width::Raw => Ok(VerificationObject::Raw {
            digests: digests.to_vec(),
        }),
    }
}

/// Mapped object at an explicit width, including widths below the admissible set.
pub fn build_vo_with_width(
    digests: &[Digest],
    seed: VerificationSeed,
    k: u32,
) -> Result<VerificationObject> {
    let crc = ImprovedCrc::new(k, seed)?;
    Ok(VerificationObject::Mapped {
        k,
        checksums: digests.iter().map(|d| crc.checksum(d)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerdictKind {
    Ok,
    /// Some returned items match no checksum.
    Fabricated,
    /// Some checksums match no returned item.
    Withheld,
    /// Too few items matched; everything is rejected.
    Rejected,
}

impl VerdictKind {
    pub fn label(self) -> &'static str {
        match self {
            VerdictKind::Ok => "OK",
            VerdictKind::Fabricated => "B1",
            VerdictKind::Withheld => "B2",
            VerdictKind::Rejected => "B3",
        }
    }
}

impl core::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of comparing returned items against the chain's object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Indices of accepted items, ascending.
    pub accepted: Vec<usize>,
    /// Indices of items that matched no checksum, ascending.
    pub fabricated: Vec<usize>,
    /// Chain checksums no returned item consumed.
    pub unmatched: VerificationObject,
    /// Items that matched a checksum, before any total rejection.
    pub matched: usize,
}

/// Multiset of chain-side keys with consumption.
struct Pool<K> {
    counts: HashMap<K, u32>,
}

impl<K: core::hash::Hash + Eq + Copy> Pool<K> {
    fn new(keys: impl IntoIterator<Item = K>) -> Self {
        let mut counts = HashMap::new();
        for key in keys {
            *counts.entry(key).or_insert(0) += 1;
        }
        Pool { counts }
    }

    fn take(&mut self, key: &K) -> bool {
        match self.counts.get_mut(key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        }
    }

    /// Unconsumed keys, in the order of `original`.
    fn remaining(mut self, original: &[K]) -> Vec<K> {
        original
            .iter()
            .filter(|key| self.take(key))
            .copied()
            .collect()
    }
}

/// Matches item digests against `vo`, returning matched indices and the
/// object left after consumption.
fn consume(
    items: &[Digest],
    vo: &VerificationObject,
    seed: VerificationSeed,
) -> Result<(Vec<usize>, Vec<usize>, VerificationObject)> {
    let (mut hits, mut misses) = (Vec::new(), Vec::new());
    let left = match vo {
        VerificationObject::Mapped { k, checksums } => {
            let crc = ImprovedCrc::new(*k, seed)?;
            let mut pool = Pool::new(checksums.iter().copied());
            for (i, d) in items.iter().enumerate() {
                if pool.take(&crc.checksum(d)) {
                    hits.push(i)
                } else {
                    misses.push(i)
                }
            }
            VerificationObject::Mapped {
                k: *k,
                checksums: pool.remaining(checksums),
            }
        }
        VerificationObject::Raw { digests } => {
            let mut pool = Pool::new(digests.iter().copied());
            for (i, d) in items.iter().enumerate() {
                if pool.take(d) {
                    hits.push(i)
                } else {
                    misses.push(i)
                }
            }
            VerificationObject::Raw {
                digests: pool.remaining(digests),
            }
        }
    };
    Ok((hits, misses, left))
}

/// User side: classifies the returned items given their digests.
pub fn verify_results(
    results: &[Digest],
    vo: &VerificationObject,
    seed: VerificationSeed,
    gamma: f64,
) -> Result<Verdict> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Parameter(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if results.is_empty() {
        let kind = if vo.is_empty() {
            VerdictKind::Ok
        } else {
            VerdictKind::Withheld
        };
        return Ok(Verdict {
            kind,
            accepted: Vec::new(),
            fabricated: Vec::new(),
            unmatched: vo.clone(),
            matched: 0,
        });
    }
    let (accepted, fabricated, unmatched) = consume(results, vo, seed)?;
    let matched = accepted.len();
    if (matched as f64) < gamma * results.len() as f64 {
        return Ok(Verdict {
            kind: VerdictKind::Rejected,
            accepted: Vec::new(),
            fabricated: (0..results.len()).collect(),
            unmatched: vo.clone(),
            matched,
        });
    }
    let kind = if !fabricated.is_empty() {
        VerdictKind::Fabricated
    } else if !unmatched.is_empty() {
        VerdictKind::Withheld
    } else {
        VerdictKind::Ok
    };
    Ok(Verdict {
        kind,
        accepted,
        fabricated,
        unmatched,
        matched,
    })
}

/// Result of re-checking late items against leftover checksums.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reverify {
    pub accepted: Vec<usize>,
    pub remaining: VerificationObject,
}

/// Accepts late items that consume a leftover checksum; needs no chain call.
pub fn local_reverify(
    items: &[Digest],
    unmatched: &VerificationObject,
    seed: VerificationSeed,
) -> Result<Reverify> {
    if items.is_empty() {
        return Ok(Reverify {
            accepted: Vec::new(),
            remaining: unmatched.clone(),
        });
    }
    if unmatched.is_empty() {
        return Ok(Reverify {
            accepted: Vec::new(),
            remaining: unmatched.empty_like(),
        });
    }
    let (accepted, _, remaining) = consume(items, unmatched, seed)?;
    Ok(Reverify {
        accepted,
        remaining,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn digests(n: usize, rng: &mut ChaCha8Rng) -> Vec<Digest> {
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn seed_floor_expansion() {
        // 25 hex eights, then 7 zeros
        assert_eq!(SEED_FLOOR, 0x8888_8888_8888_8888_8888_8888_8000_0000);
        assert_eq!(VerificationSeed::new(0).get(), SEED_FLOOR);
        let s = VerificationSeed::new(1 << 31);
        assert_eq!(s.get() & (1 << 31), 1 << 31);
    }

    #[test]
    fn seed_leading_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let s = VerificationSeed::random(&mut rng);
            assert_ne!(s.get() & (1 << 31), 0);
            for n in WIDTHS {
                let k = width(n);
                assert_ne!(s.polynomial(k) >> (k - 1), 0, "k = {k}");
            }
        }
    }

    #[test]
    fn crc32_check_value() {
        let seed = VerificationSeed::new(0xEDB8_8320);
        assert_eq!(seed.polynomial(32), 0xEDB8_8320);
        assert_eq!(improved_crc(b"123456789", 32, seed).unwrap(), 0xCBF4_3926);
        let table = ImprovedCrc::new(32, seed).unwrap();
        assert_eq!(table.checksum(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32fast::hash(b"123456789") as u128, 0xCBF4_3926);
    }

    #[test]
    fn crc_matches_crc32fast() {
        let seed = VerificationSeed::new(0xEDB8_8320);
        let crc = ImprovedCrc::new(32, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for len in 0..200 {
            let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            assert_eq!(crc.checksum(&data), crc32fast::hash(&data) as u128);
        }
    }

    #[test]
    fn empty_input_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = rng.random_range(MIN_CRC_BITS..=MAX_CRC_BITS);
            let seed = VerificationSeed::new(rng.random());
            assert_eq!(improved_crc(&[], k, seed).unwrap(), 0);
        }
    }

    #[test]
    fn width_bounds() {
        let seed = VerificationSeed::new(0);
        assert!(improved_crc(b"x", 7, seed).is_err());
        assert!(improved_crc(b"x", 129, seed).is_err());
        assert!(improved_crc(b"x", 128, seed).is_ok());
    }

    #[test]
    fn bits_above_k_are_ignored() {
        let a = VerificationSeed::new(0x1234);
        let b = VerificationSeed::new(0x1234 | 0xFFFF << 64);
        assert_eq!(
            improved_crc(b"abc", 48, a).unwrap(),
            improved_crc(b"abc", 48, b).unwrap()
        );
    }

    #[test]
    fn bounds_for_ten_thousand_items() {
        assert!(1.0 - false_accept_bound(10_000, 32) > 1.0 - 1e-5);
        let b32 = log_distinct_probability(10_000, 32);
        // sum of (i - 1) / 2^32 for i = 2..=10^4
        let first_order = 49_995_000.0 / 4_294_967_296.0;
        assert!((b32 + first_order).abs() < 1e-7);
        assert!((libm::exp(b32) / libm::exp(-0.01164) - 1.0).abs() < 1e-5);
        let b64 = log_distinct_probability(10_000, 64);
        assert!((b64 / -2.71e-12 - 1.0).abs() < 0.01);
    }

    #[test]
    fn select_k_examples() {
        assert_eq!(
            select_k(10_000, 1.0 - 1e-5, 0.98).unwrap(),
            Width::Mapped(32)
        );
        assert_eq!(
            select_k(10_000, 0.999_999, 0.99).unwrap(),
            Width::Mapped(36)
        );
        assert_eq!(select_k(0, 0.5, 0.5).unwrap(), Width::Mapped(32));
        // alpha cannot get within 2^-53 of 1 in f64, so the sentinel is forced through N_h
        assert_eq!(select_k(u64::MAX, 0.5, 0.9).unwrap(), Width::Raw);
        assert_eq!(select_k(1 << 40, 0.5, 0.5).unwrap(), Width::Mapped(80));
        assert!(select_k(10, 1.0, 0.5).is_err());
    }

    #[test]
    fn large_counts_use_the_bound() {
        let exact: f64 = (1..(1u64 << 20) + 1)
            .map(|m| libm::log1p(-(m as f64) / libm::ldexp(1.0, 64)))
            .sum();
        let bound = log_distinct_probability((1 << 20) + 2, 64);
        assert!(bound <= exact);
        assert!((bound / exact - 1.0).abs() < 1e-3);
    }

    #[test]
    fn vo_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seed = VerificationSeed::random(&mut rng);
        let ds = digests(3, &mut rng);
        let vo = build_vo(&ds, seed, 0.99, 0.99).unwrap();
        assert_eq!(vo.width(), Width::Mapped(32));
        assert_eq!(vo.len(), 3);
        assert_eq!(vo.encode().len(), 1 + 1 + 4 + 3 * 4);
        assert_eq!(VerificationObject::decode(&vo.encode()).unwrap(), vo);
        let raw = VerificationObject::Raw { digests: ds };
        assert_eq!(VerificationObject::decode(&raw.encode()).unwrap(), raw);
        let wide = build_vo_with_width(&digests(4, &mut rng), seed, 36).unwrap();
        assert_eq!(VerificationObject::decode(&wide.encode()).unwrap(), wide);
        assert!(VerificationObject::decode(&[0, 32, 1, 0, 0, 0]).is_err());
        assert!(VerificationObject::decode(&[7]).is_err());
        assert!(build_vo(&[], seed, 0.9, 0.9).unwrap().is_empty());
    }

    #[test]
    fn verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seed = VerificationSeed::random(&mut rng);
        let truth = digests(10, &mut rng);
        let vo = build_vo(&truth, seed, 0.99, 0.99).unwrap();

        let ok = verify_results(&truth, &vo, seed, 0.5).unwrap();
        assert_eq!(ok.kind, VerdictKind::Ok);
        assert_eq!(ok.accepted.len(), 10);
        assert!(ok.unmatched.is_empty());

        let b2 = verify_results(&truth[..8], &vo, seed, 0.5).unwrap();
        assert_eq!(b2.kind, VerdictKind::Withheld);
        assert_eq!(b2.accepted.len(), 8);
        assert_eq!(b2.unmatched.len(), 2);
        let re = local_reverify(&truth[8..], &b2.unmatched, seed).unwrap();
        assert_eq!(re.accepted, vec![0, 1]);
        assert!(re.remaining.is_empty());

        let mut b1 = truth.clone();
        b1.push(rng.random());
        let v = verify_results(&b1, &vo, seed, 0.5).unwrap();
        assert_eq!(v.kind, VerdictKind::Fabricated);
        assert_eq!(v.fabricated, vec![10]);

        let b3 = verify_results(&digests(10, &mut rng), &vo, seed, 0.5).unwrap();
        assert_eq!(b3.kind, VerdictKind::Rejected);
        assert!(b3.accepted.is_empty());

        let empty = build_vo(&[], seed, 0.99, 0.99).unwrap();
        assert_eq!(
            verify_results(&[], &empty, seed, 0.5).unwrap().kind,
            VerdictKind::Ok
        );
        assert_eq!(
            verify_results(&[], &vo, seed, 0.5).unwrap().kind,
            VerdictKind::Withheld
        );
    }

    #[test]
    fn duplicates_are_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = VerificationSeed::random(&mut rng);
        let d: Digest = rng.random();
        let vo = build_vo(&[d, d], seed, 0.9, 0.9).unwrap();
        assert_eq!(
            verify_results(&[d], &vo, seed, 0.5).unwrap().kind,
            VerdictKind::Withheld
        );
        assert_eq!(
            verify_results(&[d, d, d], &vo, seed, 0.5).unwrap().kind,
            VerdictKind::Fabricated
        );
    }

    #[test]
    fn raw_mode_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seed = VerificationSeed::random(&mut rng);
        let truth = digests(5, &mut rng);
        let vo = VerificationObject::Raw {
            digests: truth.clone(),
        };
        assert_eq!(
            verify_results(&truth, &vo, seed, 0.5).unwrap().kind,
            VerdictKind::Ok
        );
        let v = verify_results(&truth[1..], &vo, seed, 0.5).unwrap();
        assert_eq!(v.kind, VerdictKind::Withheld);
        assert_eq!(
            local_reverify(&truth[..1], &v.unmatched, seed)
                .unwrap()
                .accepted,
            vec![0]
        );
    }

    #[test]
    fn unrelated_probe_leaves_checksums() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seed = VerificationSeed::random(&mut rng);
        let vo = build_vo_with_width(&digests(2, &mut rng), seed, 12).unwrap();
        let mut kept = 0;
        for _ in 0..1000 {
            let r = local_reverify(&[rng.random()], &vo, seed).unwrap();
            kept += (r.remaining == vo) as u32;
        }
        // two checksums at k = 12: expected collisions about 1000 * 2 / 4096
        assert!(kept >= 990, "kept {kept}");
        assert_eq!(local_reverify(&[], &vo, seed).unwrap().remaining, vo);
    }

    #[test]
    fn false_accept_rate_at_reduced_width() {
        // the seed floor only guarantees the leading coefficient for admissible
        // widths, so the reduced-width seed sets bit k - 1 itself
        const K: u32 = 12;
        const N_H: usize = 100;
        const PROBES: u32 = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let seed = VerificationSeed::new(rng.random::<u128>() | 1 << (K - 1));
        let vo = build_vo_with_width(&digests(N_H, &mut rng), seed, K).unwrap();
        let VerificationObject::Mapped { checksums, .. } = &vo else {
            panic!("mapped object")
        };
        let crc = ImprovedCrc::new(K, seed).unwrap();
        let hits = (0..PROBES)
            .filter(|_| checksums.contains(&crc.checksum(&rng.random::<Digest>())))
            .count();
        let p = false_accept_bound(N_H as u64, K);
        let se = (p * (1.0 - p) / PROBES as f64).sqrt();
        let rate = hits as f64 / PROBES as f64;
        assert!((rate - p).abs() <= 3.0 * se, "rate {rate} vs {p} (se {se})");
    }

    proptest! {
        #[test]
        fn table_matches_bitwise(data: Vec<u8>, r: u128, k in MIN_CRC_BITS..=MAX_CRC_BITS) {
            let seed = VerificationSeed::new(r);
            prop_assert_eq!(ImprovedCrc::new(k, seed).unwrap().checksum(&data), improved_crc(&data, k, seed).unwrap());
        }

        #[test]
        fn checksum_fits_width(data: Vec<u8>, r: u128, k in MIN_CRC_BITS..=MAX_CRC_BITS) {
            let c = improved_crc(&data, k, VerificationSeed::new(r)).unwrap();
            prop_assert_eq!(c & !low_bits(k), 0);
        }
    }
}
