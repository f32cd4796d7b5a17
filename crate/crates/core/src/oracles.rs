//! Seeded oracle emulation: the random function f̃ with its packet
//! decomposition, m-wise independent polynomial families over binary
//! fields, and a toy keyed PRF sharing the same mixing primitive.
//!
//! The random oracle is lazy — outputs are derived on demand from
//! (seed, input, block index), never materialized as a table.

use crate::gaussian::{derive_seed, GaussianError, RandomBitstream, Seed256};
use thiserror::Error;

/// Domain-separation tag for random-oracle evaluation streams.
pub const TAG_ORACLE: u64 = 0x6f72_6163_6c65_0001;
/// Domain-separation tag for the toy PRF.
pub const TAG_PRF: u64 = 0x7072_6600_0000_0002;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("input {x} does not fit in {n} bits")]
    WrongInputLength { x: u64, n: u32 },
    #[error("packet index {i} out of range [1, {packets}]")]
    PacketIndex { i: u32, packets: u32 },
    #[error("unsupported binary-field width {0} (need 1 ≤ w ≤ 64)")]
    UnsupportedWidth(u32),
    #[error("m-wise family needs m ≥ 1 and output bits 1 ≤ p ≤ width")]
    BadFamilyParams,
    #[error(transparent)]
    Stream(#[from] GaussianError),
}

// ---------------------------------------------------------------------------
// Bit strings
// ---------------------------------------------------------------------------

/// An MSB-first packed bit string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    words: Vec<u64>,
    len_bits: u64,
}

impl BitString {
    pub fn empty() -> Self {
        BitString {
            words: Vec::new(),
            len_bits: 0,
        }
    }

    /// Reads `len_bits` from a stream into a packed string.
    pub fn from_stream(stream: &mut RandomBitstream, len_bits: u64) -> Result<Self, GaussianError> {
        let mut words = Vec::with_capacity(len_bits.div_ceil(64) as usize);
        let mut remaining = len_bits;
        while remaining > 0 {
            let take = remaining.min(64) as u32;
            let w = stream.read_bits(take)?;
            // MSB-align a partial final word so tail bits stay zero
            words.push(if take == 64 { w } else { w << (64 - take) });
            remaining -= take as u64;
        }
        Ok(BitString { words, len_bits })
    }

    pub fn len_bits(&self) -> u64 {
        self.len_bits
    }

    pub fn bit(&self, i: u64) -> bool {
        assert!(i < self.len_bits);
        (self.words[(i / 64) as usize] >> (63 - (i % 64))) & 1 == 1
    }

    /// Population count over the whole string.
    pub fn ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn push_bit(&mut self, b: bool) {
        let slot = (self.len_bits / 64) as usize;
        if slot == self.words.len() {
            self.words.push(0);
        }
        if b {
            self.words[slot] |= 1u64 << (63 - (self.len_bits % 64));
        }
        self.len_bits += 1;
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        for i in 0..other.len_bits {
            out.push_bit(other.bit(i));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Random oracle
// ---------------------------------------------------------------------------

/// Seeded deterministic stand-in for the random function
/// f̃: {0,1}ⁿ → {0,1}^{packets·packet_bits}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSpec {
    pub seed: Seed256,
    /// Input bit-length n.
    pub n: u32,
    /// Bits per packet, r(ε, B).
    pub packet_bits: u32,
    /// Number of packets, λ.
    pub packets: u32,
}

impl OracleSpec {
    pub fn new(seed: Seed256, n: u32, packet_bits: u32, packets: u32) -> Self {
        assert!(
            (1..=32).contains(&n),
            "oracle input length out of desk-scale range"
        );
        assert!(packet_bits >= 1 && packets >= 1);
        OracleSpec {
            seed,
            n,
            packet_bits,
            packets,
        }
    }

    /// Total output bits per input: λ·r.
    pub fn output_bits(&self) -> u64 {
        self.packets as u64 * self.packet_bits as u64
    }

    fn check_input(&self, x: u64) -> Result<(), OracleError> {
        if self.n < 64 && x >> self.n != 0 {
            return Err(OracleError::WrongInputLength { x, n: self.n });
        }
        Ok(())
    }

    /// The per-input stream seed. Each input owns its own counter space.
    fn input_seed(&self, x: u64) -> Seed256 {
        derive_seed(&self.seed, x, TAG_ORACLE)
    }
}

/// Full oracle output on input x: λ·r bits.
pub fn oracle_eval(spec: &OracleSpec, x: u64) -> Result<BitString, OracleError> {
    spec.check_input(x)?;
    let mut stream = RandomBitstream::new(spec.input_seed(x));
    Ok(BitString::from_stream(&mut stream, spec.output_bits())?)
}

/// The i-th packet (1-based, i ∈ [λ]): bits [(i−1)·r, i·r) of the output.
pub fn oracle_packet(spec: &OracleSpec, x: u64, i: u32) -> Result<BitString, OracleError> {
    let mut stream = oracle_packet_stream(spec, x, i)?;
    Ok(BitString::from_stream(
        &mut stream,
        spec.packet_bits as u64,
    )?)
}

/// Streaming view of packet i — generates only the blocks the packet
/// touches, which is what the generator consumes.
pub fn oracle_packet_stream(
    spec: &OracleSpec,
    x: u64,
    i: u32,
) -> Result<RandomBitstream, OracleError> {
    spec.check_input(x)?;
    if i < 1 || i > spec.packets {
        return Err(OracleError::PacketIndex {
            i,
            packets: spec.packets,
        });
    }
    let r = spec.packet_bits as u64;
    Ok(RandomBitstream::window(
        spec.input_seed(x),
        (i as u64 - 1) * r,
        r,
    ))
}

// ---------------------------------------------------------------------------
// Binary fields GF(2^w)
// ---------------------------------------------------------------------------

/// Product in GF(2^w) with reduction polynomial x^w + red (red holds the
/// low-order terms). Russian-peasant carryless multiply.
#[inline]
pub fn gf_mul(mut a: u64, mut b: u64, w: u32, red: u64) -> u64 {
    debug_assert!((1..=64).contains(&w));
    let mask = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
    let hi = 1u64 << (w - 1);
    let mut r = 0u64;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        let carry = a & hi != 0;
        a = (a << 1) & mask;
        if carry {
            a ^= red;
        }
    }
    r
}

fn poly_degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

/// Remainder of a modulo b in GF(2)[x].
fn poly_rem(mut a: u128, b: u128) -> u128 {
    let db = poly_degree(b);
    debug_assert!(db >= 0);
    while poly_degree(a) >= db {
        a ^= b << ((poly_degree(a) - db) as u32);
    }
    a
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_rem(a, b);
        a = b;
        b = r;
    }
    a
}

/// Squares a residue of degree < 64 in GF(2)[x] (bit-spread) and reduces
/// modulo f.
fn poly_sqmod(a: u64, f: u128) -> u64 {
    let mut spread: u128 = 0;
    let mut rest = a;
    while rest != 0 {
        let i = rest.trailing_zeros();
        spread |= 1u128 << (2 * i);
        rest &= rest - 1;
    }
    poly_rem(spread, f) as u64
}

/// x^(2^k) modulo f, starting from the residue x.
fn frobenius_power(k: u32, f: u128) -> u64 {
    let mut h: u64 = 0b10; // the polynomial x
    for _ in 0..k {
        h = poly_sqmod(h, f);
    }
    h
}

fn prime_divisors(mut w: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= w {
        if w.is_multiple_of(d) {
            out.push(d);
            while w.is_multiple_of(d) {
                w /= d;
            }
        }
        d += 1;
    }
    if w > 1 {
        out.push(w);
    }
    out
}

/// Irreducibility of f = x^w + low over GF(2): x^(2^w) ≡ x (mod f) and, for
/// every prime q | w, gcd(x^(2^(w/q)) − x, f) = 1.
fn is_irreducible(low: u64, w: u32) -> bool {
    let f = (1u128 << w) | low as u128;
    // x reduced mod f (only differs from x itself when w = 1)
    let x_res = poly_rem(0b10, f) as u64;
    if frobenius_power(w, f) != x_res {
        return false;
    }
    for q in prime_divisors(w) {
        let h = frobenius_power(w / q, f) ^ x_res;
        if h == 0 || poly_gcd(f, h as u128) != 1 {
            return false;
        }
    }
    true
}

/// Smallest (by integer value of its low terms) irreducible polynomial of
/// degree w: returns the low-order bits; the x^w term is implicit.
pub fn reduction_poly(w: u32) -> Result<u64, OracleError> {
    if w == 0 || w > 64 {
        return Err(OracleError::UnsupportedWidth(w));
    }
    // constant term must be 1, otherwise x divides f
    let mut low = 1u64;
    loop {
        if is_irreducible(low, w) {
            return Ok(low);
        }
        low += 2;
        assert!(
            low < (1 << 20),
            "no irreducible polynomial found (impossible)"
        );
    }
}

// ---------------------------------------------------------------------------
// m-wise independent family
// ---------------------------------------------------------------------------

/// Key of the degree-(m−1) random-polynomial family over GF(2^width):
/// outputs on any m distinct inputs are jointly uniform.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MWiseKey {
    /// Coefficients c₀, …, c_{m−1} of Σ cⱼ·Xʲ; length m.
    pub coefficients: Vec<u64>,
    /// Field width w ≥ max(input_bits, output_bits).
    pub width: u32,
    /// Low-order bits of the field's reduction polynomial.
    pub reduction: u64,
    /// Input bit-length n.
    pub input_bits: u32,
    /// Output truncation p ≤ width.
    pub output_bits: u32,
}

impl MWiseKey {
    /// m = degree + 1.
    pub fn m(&self) -> u32 {
        self.coefficients.len() as u32
    }
}

/// Samples a fresh key of the m-wise family for n-bit inputs and p-bit
/// outputs. The field width is max(n, p), capped at 64.
pub fn mwise_keygen(
    n: u32,
    p: u32,
    m: u32,
    rng: &mut RandomBitstream,
) -> Result<MWiseKey, OracleError> {
    if m == 0 || p == 0 || n == 0 {
        return Err(OracleError::BadFamilyParams);
    }
    let w = n.max(p);
    if w > 64 {
        return Err(OracleError::UnsupportedWidth(w));
    }
    if p > w {
        return Err(OracleError::BadFamilyParams);
    }
    let reduction = reduction_poly(w)?;
    let coefficients = (0..m)
        .map(|_| rng.read_bits(w).map_err(OracleError::from))
        .collect::<Result<Vec<u64>, _>>()?;
    Ok(MWiseKey {
        coefficients,
        width: w,
        reduction,
        input_bits: n,
        output_bits: p,
    })
}

/// Evaluates the key's polynomial at the field embedding of x and truncates
/// to the low p bits.
pub fn mwise_eval(key: &MWiseKey, x: u64) -> Result<u64, OracleError> {
    if key.input_bits < 64 && x >> key.input_bits != 0 {
        return Err(OracleError::WrongInputLength {
            x,
            n: key.input_bits,
        });
    }
    let mut acc = 0u64;
    for &c in key.coefficients.iter().rev() {
        acc = gf_mul(acc, x, key.width, key.reduction) ^ c;
    }
    let pmask = if key.output_bits == 64 {
        u64::MAX
    } else {
        (1u64 << key.output_bits) - 1
    };
    Ok(acc & pmask)
}

// ---------------------------------------------------------------------------
// Toy PRF
// ---------------------------------------------------------------------------

/// Key for the toy keyed function standing in for a PRF. Deterministic and
/// statistically well-mixed at desk scale; no cryptographic claim.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PrfKey {
    pub key: Seed256,
    /// Input bit-length n.
    pub input_bits: u32,
    /// Output bits per input.
    pub output_bits: u64,
}

impl PrfKey {
    fn check_input(&self, x: u64) -> Result<(), OracleError> {
        if self.input_bits < 64 && x >> self.input_bits != 0 {
            return Err(OracleError::WrongInputLength {
                x,
                n: self.input_bits,
            });
        }
        Ok(())
    }
}

/// Keyed evaluation: output_bits pseudorandom bits for input x.
pub fn prf_eval(key: &PrfKey, x: u64) -> Result<BitString, OracleError> {
    key.check_input(x)?;
    let mut stream = RandomBitstream::new(derive_seed(&key.key, x, TAG_PRF));
    Ok(BitString::from_stream(&mut stream, key.output_bits)?)
}

/// Streaming window onto bits [start, start+len) of prf_eval(key, x),
/// generating only the blocks it touches.
pub fn prf_window(
    key: &PrfKey,
    x: u64,
    start: u64,
    len: u64,
) -> Result<RandomBitstream, OracleError> {
    key.check_input(x)?;
    debug_assert!(start + len <= key.output_bits);
    Ok(RandomBitstream::window(
        derive_seed(&key.key, x, TAG_PRF),
        start,
        len,
    ))
}
