//! Rounded-Gaussian sampling machinery: deterministic bitstreams, the
//! rounding function on the `(ε, B)` grid, the exact pmf of the rounded
//! Gaussian, the fixed-bit-budget sampler [`gsample`], and chi-square CDF
//! helpers used by the exact norm-probability formulas.

use num_complex::Complex64;
use thiserror::Error;

/// 256-bit seed, stored big-endian as four words (word 0 = most significant).
pub type Seed256 = [u64; 4];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GaussianError {
    #[error("bitstream exhausted: needed {needed} bits past a window of {limit} bits")]
    StreamExhausted { needed: u64, limit: u64 },
    #[error("invalid rounding parameters: m={m}, B={b_cut} (need m ≥ 1, B ≥ 1, m ≤ 64)")]
    BadRoundingParams { m: u32, b_cut: u32 },
    #[error("chi-square dof must be even and positive, got {0}")]
    OddDof(u64),
    #[error("invalid seed hex: {0}")]
    BadSeedHex(String),
}

// ---------------------------------------------------------------------------
// Counter-based mixing
// ---------------------------------------------------------------------------

/// splitmix64 finalizer: a fixed, public 64-bit mixing permutation.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Keyed counter-to-block function: 256 bits out per (seed, counter) pair.
///
/// A small sponge over the splitmix64 finalizer: the counter and all four
/// seed words are absorbed sequentially, then four words are squeezed with
/// distinct round offsets. Every output word depends on the full seed and
/// the counter, and the map is identical on every platform (pure wrapping
/// u64 arithmetic).
#[inline]
pub fn mix_block(seed: &Seed256, counter: u64) -> [u64; 4] {
    let mut h = mix64(counter.wrapping_mul(GOLDEN) ^ 0x243f_6a88_85a3_08d3);
    for &w in seed {
        h = mix64(h ^ w);
    }
    let mut out = [0u64; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        h = mix64(h.wrapping_add(GOLDEN ^ (i as u64)));
        *slot = h;
    }
    out
}

/// Derives an independent seed for a substream, e.g. one Monte Carlo trial.
///
/// `tag` separates roles (oracle evaluation, rejection randomness, …) so the
/// same master seed can feed several independent streams per trial index.
#[inline]
pub fn derive_seed(seed: &Seed256, stream: u64, tag: u64) -> Seed256 {
    let tagged = [
        seed[0] ^ tag,
        seed[1],
        seed[2],
        seed[3] ^ tag.rotate_left(32),
    ];
    mix_block(&tagged, stream)
}

/// Parses a 64-hex-character string into a 256-bit seed (big-endian).
pub fn seed_from_hex(s: &str) -> Result<Seed256, GaussianError> {
    let bytes = hex::decode(s.trim()).map_err(|e| GaussianError::BadSeedHex(e.to_string()))?;
    if bytes.len() != 32 {
        return Err(GaussianError::BadSeedHex(format!(
            "expected 32 bytes, got {}",
            bytes.len()
        )));
    }
    let mut seed = [0u64; 4];
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        seed[i] = u64::from_be_bytes(chunk.try_into().unwrap());
    }
    Ok(seed)
}

/// Formats a 256-bit seed as 64 hex characters (big-endian).
pub fn seed_to_hex(seed: &Seed256) -> String {
    let mut bytes = Vec::with_capacity(32);
    for w in seed {
        bytes.extend_from_slice(&w.to_be_bytes());
    }
    hex::encode(bytes)
}

// ---------------------------------------------------------------------------
// RandomBitstream
// ---------------------------------------------------------------------------

/// Deterministic bitstream addressed by (seed, bit position).
///
/// Bits come from successive [`mix_block`] outputs: block `c` supplies bits
/// `[256c, 256c + 256)`, most significant bit of word 0 first. Identical
/// `(seed, position)` always yields identical bits, so disjoint windows or
/// distinct derived seeds may be consumed concurrently with no coordination.
///
/// A stream is either unbounded ([`RandomBitstream::new`]) or a finite
/// window onto the underlying stream ([`RandomBitstream::window`]); only the
/// latter can report exhaustion.
#[derive(Debug, Clone)]
pub struct RandomBitstream {
    seed: Seed256,
    /// Absolute bit position of the next unread bit.
    pos: u64,
    /// One past the last readable bit for a finite window.
    end: Option<u64>,
    cached_block: u64,
    buf: [u64; 4],
    buf_valid: bool,
    consumed: u64,
}

impl RandomBitstream {
    /// Unbounded stream starting at bit position 0.
    pub fn new(seed: Seed256) -> Self {
        RandomBitstream {
            seed,
            pos: 0,
            end: None,
            cached_block: 0,
            buf: [0; 4],
            buf_valid: false,
            consumed: 0,
        }
    }

    /// Unbounded stream with a seed derived from `(seed, stream, tag)`.
    pub fn substream(seed: &Seed256, stream: u64, tag: u64) -> Self {
        Self::new(derive_seed(seed, stream, tag))
    }

    /// Finite window `[start_bit, start_bit + len_bits)` of the stream.
    pub fn window(seed: Seed256, start_bit: u64, len_bits: u64) -> Self {
        RandomBitstream {
            seed,
            pos: start_bit,
            end: Some(start_bit + len_bits),
            cached_block: 0,
            buf: [0; 4],
            buf_valid: false,
            consumed: 0,
        }
    }

    /// Total bits read since construction.
    pub fn consumed_bits(&self) -> u64 {
        self.consumed
    }

    #[inline]
    fn word_at(&mut self, word_index: u64) -> u64 {
        let block = word_index / 4;
        if !self.buf_valid || block != self.cached_block {
            self.buf = mix_block(&self.seed, block);
            self.cached_block = block;
            self.buf_valid = true;
        }
        self.buf[(word_index % 4) as usize]
    }

    /// Reads `nb` bits (1 ≤ nb ≤ 64), MSB-first, as the low bits of a u64.
    #[inline]
    pub fn read_bits(&mut self, nb: u32) -> Result<u64, GaussianError> {
        debug_assert!((1..=64).contains(&nb));
        if let Some(end) = self.end {
            if self.pos + nb as u64 > end {
                return Err(GaussianError::StreamExhausted {
                    needed: self.pos + nb as u64 - end,
                    limit: end,
                });
            }
        }
        let mut acc = 0u64;
        let mut remaining = nb;
        while remaining > 0 {
            let word = self.word_at(self.pos / 64);
            let offset = (self.pos % 64) as u32;
            let avail = 64 - offset;
            let take = remaining.min(avail);
            let chunk = (word << offset) >> (64 - take);
            acc = if take == 64 {
                chunk
            } else {
                (acc << take) | chunk
            };
            self.pos += take as u64;
            remaining -= take;
        }
        self.consumed += nb as u64;
        Ok(acc)
    }

    #[inline]
    fn take_bits(&mut self, nb: u32) -> u64 {
        self.read_bits(nb).expect("unbounded stream cannot exhaust")
    }

    /// Uniform double in (0, 1): midpoint of a 53-bit grid cell, so neither
    /// endpoint is ever returned.
    #[inline]
    pub fn uniform_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
        ((self.take_bits(64) >> 11) as f64 + 0.5) * SCALE
    }

    /// Two independent standard normals via Box–Muller (one polar pair).
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_f64();
        let u2 = self.uniform_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (radius * c, radius * s)
    }

    /// One standard complex Gaussian: unit variance in each of re and im.
    #[inline]
    pub fn complex_standard_normal(&mut self) -> Complex64 {
        let (re, im) = self.normal_pair();
        Complex64::new(re, im)
    }
}

/// Anything that can hand out budgeted bits, MSB-first.
///
/// The stream-backed reader implements this directly; materialized bit
/// windows (packed oracle outputs) implement it too, so the Gaussian sampler
/// is agnostic about where its bits come from.
pub trait BitSource {
    /// Reads `nb` bits (1 ≤ nb ≤ 64), MSB-first, as the low bits of a u64.
    fn read_bits(&mut self, nb: u32) -> Result<u64, GaussianError>;

    /// Fixed-point uniform on `bits` budgeted bits, consuming all of them.
    ///
    /// The returned double is determined by the top 53 bits (midpoint rule);
    /// lower-order bits are consumed to honor the budget but are below f64
    /// resolution.
    fn fixed_point_uniform(&mut self, bits: u32) -> Result<f64, GaussianError> {
        debug_assert!(bits >= 1);
        let head_bits = bits.min(64);
        let head = self.read_bits(head_bits)?;
        let mut rest = bits - head_bits;
        while rest > 0 {
            let take = rest.min(64);
            self.read_bits(take)?;
            rest -= take;
        }
        const SCALE53: f64 = 1.0 / 9007199254740992.0; // 2^-53
        if head_bits >= 53 {
            Ok(((head >> (head_bits - 53)) as f64 + 0.5) * SCALE53)
        } else {
            Ok((head as f64 + 0.5) * (-(head_bits as i32)).exp2_int())
        }
    }
}

impl BitSource for RandomBitstream {
    #[inline]
    fn read_bits(&mut self, nb: u32) -> Result<u64, GaussianError> {
        RandomBitstream::read_bits(self, nb)
    }
}

/// Integer power-of-two helper: 2^e for possibly-negative e.
trait Exp2Int {
    fn exp2_int(self) -> f64;
}
impl Exp2Int for i32 {
    #[inline]
    fn exp2_int(self) -> f64 {
        f64::from_bits(((1023 + self) as u64) << 52)
    }
}

// ---------------------------------------------------------------------------
// Rounding
// ---------------------------------------------------------------------------

/// Grid parameters: precision ε = 2^{−m} and tail cut B.
///
/// B is an integer, hence automatically a multiple of ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct RoundingParams {
    pub m: u32,
    pub b_cut: u32,
}

impl RoundingParams {
    pub fn new(m: u32, b_cut: u32) -> Result<Self, GaussianError> {
        if m == 0 || m > 64 || b_cut == 0 {
            return Err(GaussianError::BadRoundingParams { m, b_cut });
        }
        Ok(RoundingParams { m, b_cut })
    }

    /// ε = 2^{−m}, exact in f64 for every supported m.
    #[inline]
    pub fn eps(&self) -> f64 {
        (-(self.m as i32)).exp2_int()
    }

    /// Bits budgeted per real component: m + ⌈log₂ B⌉ + 64.
    #[inline]
    pub fn bits_per_part(&self) -> u32 {
        self.m + ceil_log2(self.b_cut) + 64
    }

    /// Bits budgeted per complex draw: r(ε, B) = 2·(m + ⌈log₂ B⌉ + 64).
    #[inline]
    pub fn r_bits(&self) -> u32 {
        2 * self.bits_per_part()
    }
}

#[inline]
fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x >= 1);
    if x == 1 {
        0
    } else {
        64 - (x as u64 - 1).leading_zeros()
    }
}

/// Rounds |x| up to the nearest multiple of ε (sign preserved), zeroing
/// anything beyond the tail cut: |x| > B ↦ 0.
///
/// Exact grid multiples map to themselves and 0 maps to 0, so the map is
/// idempotent and odd, and |output| ≥ |x| whenever |x| ≤ B.
#[inline]
pub fn round_scalar(x: f64, p: &RoundingParams) -> f64 {
    debug_assert!(x.is_finite());
    let b = p.b_cut as f64;
    if x == 0.0 || x.abs() > b {
        return 0.0;
    }
    let eps = p.eps();
    // |x|/ε is exact (ε is a power of two), so ceil introduces no error.
    let k = (x.abs() / eps).ceil();
    (k * eps).copysign(x)
}

/// Componentwise rounding of a complex value.
///
/// When |z| ≤ B both components survive the tail cut, so the output is
/// within √2·ε of z.
#[inline]
pub fn round_complex(z: Complex64, p: &RoundingParams) -> Complex64 {
    Complex64::new(round_scalar(z.re, p), round_scalar(z.im, p))
}

/// Standard normal CDF, from the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact pmf of the real rounded Gaussian at y.
///
/// Support is {0} ∪ {±kε : 1 ≤ kε ≤ B}: positive grid points kε carry
/// Φ(kε) − Φ((k−1)ε) (mirrored for negative y), and 0 absorbs both tails,
/// 2·(1 − Φ(B)). Everything else has mass 0.
pub fn rounded_pmf(y: f64, p: &RoundingParams) -> f64 {
    let eps = p.eps();
    let b = p.b_cut as f64;
    if y == 0.0 {
        return statrs::function::erf::erfc(b / std::f64::consts::SQRT_2);
    }
    let k = y.abs() / eps;
    if k.fract() != 0.0 || k < 1.0 || y.abs() > b {
        return 0.0;
    }
    // Φ(kε) − Φ((k−1)ε) for positive arguments, written as an erfc
    // difference to avoid cancellation near 1.
    let hi = y.abs() / std::f64::consts::SQRT_2;
    let lo = (y.abs() - eps) / std::f64::consts::SQRT_2;
    0.5 * (statrs::function::erf::erfc(lo) - statrs::function::erf::erfc(hi))
}

/// All support points of the rounded-Gaussian pmf, ascending.
pub fn pmf_support(p: &RoundingParams) -> Vec<f64> {
    let kmax = (p.b_cut as u64) << p.m;
    let eps = p.eps();
    let mut grid = Vec::with_capacity(2 * kmax as usize + 1);
    for k in (1..=kmax).rev() {
        grid.push(-(k as f64) * eps);
    }
    grid.push(0.0);
    for k in 1..=kmax {
        grid.push(k as f64 * eps);
    }
    grid
}

// ---------------------------------------------------------------------------
// Inverse normal CDF
// ---------------------------------------------------------------------------

/// Inverse standard normal CDF.
///
/// P. J. Acklam's rational approximation (abs error ≈ 1.15e-9, tail branch
/// valid into the far tail) polished by one Halley step against the erfc
/// oracle; the step's cubic convergence brings the bulk error below 1e-15.
/// Accuracy is pinned by a unit test against the independent statrs Φ.
pub fn inv_normal_cdf(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };

    // One Halley step: e = Φ(x) − u, x ← x − t/(1 + x·t/2) with
    // t = e·√(2π)·e^{x²/2}.
    let e = normal_cdf(x) - u;
    let t = e * (std::f64::consts::TAU).sqrt() * (0.5 * x * x).exp();
    x -= t / (1.0 + 0.5 * x * t);
    x
}

// ---------------------------------------------------------------------------
// GSample
// ---------------------------------------------------------------------------

/// Bit-budgeted rounded-Gaussian sampler.
///
/// Consumes exactly r(ε, B) = 2·(m + ⌈log₂ B⌉ + 64) bits — a fixed budget,
/// no rejection loop — and returns the componentwise rounding of an
/// inverse-CDF Gaussian draw. The marginal law is within statistical
/// distance 2^{−m} of the complex rounded Gaussian (the fixed-point uniform
/// discretization and the 64 guard bits dominate that target comfortably).
pub fn gsample<S: BitSource + ?Sized>(
    p: &RoundingParams,
    bits: &mut S,
) -> Result<Complex64, GaussianError> {
    let budget = p.bits_per_part();
    let u_re = bits.fixed_point_uniform(budget)?;
    let u_im = bits.fixed_point_uniform(budget)?;
    let z = Complex64::new(inv_normal_cdf(u_re), inv_normal_cdf(u_im));
    Ok(round_complex(z, p))
}

// ---------------------------------------------------------------------------
// Chi-square CDF (even dof)
// ---------------------------------------------------------------------------

const MAX_CHI2_DOF: u64 = 1 << 14;

/// Upper tail of the chi-square distribution with even dof:
/// e^{−x/2} Σ_{j<dof/2} (x/2)^j/j!, computed without the 1−· cancellation.
pub fn chi2_sf(dof: u64, x: f64) -> Result<f64, GaussianError> {
    if dof == 0 || !dof.is_multiple_of(2) || dof > MAX_CHI2_DOF {
        return Err(GaussianError::OddDof(dof));
    }
    debug_assert!(x >= 0.0);
    let k = dof / 2;
    let h = 0.5 * x;
    if h < 700.0 {
        let mut term = (-h).exp();
        let mut sum = 0.0;
        for j in 0..k {
            sum += term;
            term *= h / (j + 1) as f64;
        }
        Ok(sum.min(1.0))
    } else {
        // exp(−h) underflows; sum the terms in log space around the peak.
        let log_terms: Vec<f64> = (0..k)
            .map(|j| -h + (j as f64) * h.ln() - statrs::function::gamma::ln_gamma(j as f64 + 1.0))
            .collect();
        let peak = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let sum: f64 = log_terms.iter().map(|lt| (lt - peak).exp()).sum();
        Ok((peak + sum.ln()).exp().min(1.0))
    }
}

/// Chi-square CDF with even dof, computed as the regularized lower
/// incomplete gamma P(dof/2, x/2).
///
/// Not `1 − chi2_sf`: deep left-tail masses (down to ~1e-300) must come out
/// with full relative accuracy, and subtracting from 1 would bury anything
/// below ~1e-16 in roundoff.
pub fn chi2_cdf(dof: u64, x: f64) -> Result<f64, GaussianError> {
    if dof == 0 || !dof.is_multiple_of(2) || dof > MAX_CHI2_DOF {
        return Err(GaussianError::OddDof(dof));
    }
    debug_assert!(x >= 0.0);
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::gamma_lr(dof as f64 / 2.0, 0.5 * x).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SEED: Seed256 = [1, 2, 3, 4];

    #[test]
    fn mix_block_is_deterministic_and_counter_sensitive() {
        let a = mix_block(&SEED, 0);
        let b = mix_block(&SEED, 0);
        let c = mix_block(&SEED, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        // every word changes when any seed word changes
        let other = mix_block(&[1, 2, 3, 5], 0);
        for i in 0..4 {
            assert_ne!(a[i], other[i]);
        }
    }

    #[test]
    fn seed_hex_round_trips() {
        let s = seed_to_hex(&SEED);
        assert_eq!(s.len(), 64);
        assert_eq!(seed_from_hex(&s).unwrap(), SEED);
        assert!(seed_from_hex("abcd").is_err());
    }

    #[test]
    fn bitstream_reads_match_window_reads() {
        let mut full = RandomBitstream::new(SEED);
        let head: Vec<u64> = (0..10).map(|_| full.take_bits(37)).collect();
        // a window starting at bit 37 must replay the same underlying bits
        let mut win = RandomBitstream::window(SEED, 37, 37 * 9);
        for (i, expected) in head.iter().enumerate().skip(1) {
            assert_eq!(win.read_bits(37).unwrap(), *expected, "read {i}");
        }
        assert!(matches!(
            win.read_bits(1),
            Err(GaussianError::StreamExhausted { .. })
        ));
    }

    #[test]
    fn bitstream_counts_consumption() {
        let mut s = RandomBitstream::new(SEED);
        s.take_bits(64);
        s.take_bits(3);
        let _ = s.fixed_point_uniform(130).unwrap();
        assert_eq!(s.consumed_bits(), 64 + 3 + 130);
    }

    #[test]
    fn uniform_is_in_open_interval() {
        let mut s = RandomBitstream::new(SEED);
        for _ in 0..10_000 {
            let u = s.uniform_f64();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn round_scalar_matches_frozen_cases() {
        let p = RoundingParams::new(2, 4).unwrap();
        assert_eq!(round_scalar(5.0, &p), 0.0);
        assert_eq!(round_scalar(0.3, &p), 0.5);
        assert_eq!(round_scalar(-0.5, &p), -0.5);
        assert_eq!(round_scalar(0.0, &p), 0.0);
        assert_eq!(round_scalar(4.0, &p), 4.0);
        assert_eq!(round_scalar(4.0 + 1e-9, &p), 0.0);
    }

    #[test]
    fn round_complex_matches_frozen_cases() {
        let p = RoundingParams::new(2, 4).unwrap();
        assert_eq!(
            round_complex(Complex64::new(5.0, 5.0), &p),
            Complex64::new(0.0, 0.0)
        );
        assert_eq!(
            round_complex(Complex64::new(0.3, 0.3), &p),
            Complex64::new(0.5, 0.5)
        );
        assert_eq!(
            round_complex(Complex64::new(0.0, 0.0), &p),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn bit_budget_formula() {
        // r(ε,B) = 2(m + ⌈log₂B⌉ + 64)
        assert_eq!(
            RoundingParams::new(6, 5).unwrap().r_bits(),
            2 * (6 + 3 + 64)
        );
        assert_eq!(RoundingParams::new(1, 1).unwrap().r_bits(), 2 * (1 + 64));
        assert_eq!(
            RoundingParams::new(16, 8).unwrap().r_bits(),
            2 * (16 + 3 + 64)
        );
        assert_eq!(
            RoundingParams::new(3, 2).unwrap().r_bits(),
            2 * (3 + 1 + 64)
        );
    }

    proptest! {
        #[test]
        fn rounding_dominates_and_is_idempotent(x in -8.0f64..8.0, m in 1u32..8, b in 1u32..6) {
            let p = RoundingParams::new(m, b).unwrap();
            let y = round_scalar(x, &p);
            // codomain: 0 or a grid multiple with magnitude in [ε, B]
            if y != 0.0 {
                let k = y.abs() / p.eps();
                prop_assert_eq!(k.fract(), 0.0);
                prop_assert!(y.abs() >= p.eps() && y.abs() <= p.b_cut as f64);
            }
            if x.abs() <= p.b_cut as f64 {
                prop_assert!(y.abs() >= x.abs());
            }
            prop_assert_eq!(round_scalar(y, &p), y);
            // odd function
            prop_assert_eq!(round_scalar(-x, &p), -y);
        }

        #[test]
        fn rounding_is_sqrt2_eps_close_inside_the_cut(re in -3.0f64..3.0, im in -3.0f64..3.0, m in 1u32..10) {
            let p = RoundingParams::new(m, 4).unwrap();
            let z = Complex64::new(re, im);
            if z.norm() <= p.b_cut as f64 {
                let d = (z - round_complex(z, &p)).norm();
                prop_assert!(d <= std::f64::consts::SQRT_2 * p.eps() + 1e-15);
            }
        }
    }

    #[test]
    fn pmf_matches_erf_oracle() {
        let p = RoundingParams::new(1, 1).unwrap();
        // off-grid point
        assert_eq!(rounded_pmf(0.3, &p), 0.0);
        // Φ(0.5) − Φ(0); the erfc backend is accurate to ~1e-10, far below
        // every statistical tolerance in the suite
        assert_relative_eq!(rounded_pmf(0.5, &p), 0.19146246127401312, epsilon = 1e-9);
        // 2(1 − Φ(1))
        assert_relative_eq!(rounded_pmf(0.0, &p), 0.31731050786291415, epsilon = 1e-9);
        // mirror symmetry
        assert_eq!(rounded_pmf(-0.5, &p), rounded_pmf(0.5, &p));
        // beyond the cut
        assert_eq!(rounded_pmf(1.5, &p), 0.0);
    }

    #[test]
    fn pmf_sums_to_one() {
        for (m, b) in [(1u32, 1u32), (2, 2), (3, 4), (6, 4), (8, 1)] {
            let p = RoundingParams::new(m, b).unwrap();
            let total: f64 = pmf_support(&p).iter().map(|&y| rounded_pmf(y, &p)).sum();
            assert!(
                (total - 1.0).abs() < 1e-10,
                "pmf mass {total} at m={m}, B={b}"
            );
        }
    }

    #[test]
    fn inverse_normal_cdf_round_trips_through_phi() {
        // dense bulk grid plus tails; statrs Φ is the independent oracle
        let mut worst_bulk = 0.0f64;
        let mut worst_tail_rel = 0.0f64;
        let mut u = 1e-12;
        while u < 1.0 - 1e-12 {
            let x = inv_normal_cdf(u);
            let back = normal_cdf(x);
            let err = (back - u).abs();
            if u > 0.01 && u < 0.99 {
                worst_bulk = worst_bulk.max(err);
            } else {
                worst_tail_rel = worst_tail_rel.max(err / u.min(1.0 - u));
            }
            u += if u < 0.01 { u * 0.37 } else { 0.001 };
        }
        assert!(worst_bulk < 5e-15, "bulk u-space error {worst_bulk}");
        assert!(
            worst_tail_rel < 1e-11,
            "tail relative error {worst_tail_rel}"
        );
        // symmetry
        assert_relative_eq!(inv_normal_cdf(0.5), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            inv_normal_cdf(0.025),
            -inv_normal_cdf(0.975),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gsample_is_deterministic_and_on_grid() {
        let p = RoundingParams::new(6, 4).unwrap();
        let mut s1 = RandomBitstream::new(SEED);
        let mut s2 = RandomBitstream::new(SEED);
        for _ in 0..1000 {
            let a = gsample(&p, &mut s1).unwrap();
            let b = gsample(&p, &mut s2).unwrap();
            assert_eq!(a, b);
            for part in [a.re, a.im] {
                if part != 0.0 {
                    let k = part.abs() / p.eps();
                    assert_eq!(k.fract(), 0.0);
                    assert!(part.abs() >= p.eps() && part.abs() <= p.b_cut as f64);
                }
            }
        }
        assert_eq!(s1.consumed_bits(), 1000 * p.r_bits() as u64);
    }

    #[test]
    fn gsample_exhausts_finite_windows() {
        let p = RoundingParams::new(6, 4).unwrap();
        let mut win = RandomBitstream::window(SEED, 0, p.r_bits() as u64 - 1);
        assert!(matches!(
            gsample(&p, &mut win),
            Err(GaussianError::StreamExhausted { .. })
        ));
        let mut exact = RandomBitstream::window(SEED, 0, p.r_bits() as u64);
        assert!(gsample(&p, &mut exact).is_ok());
        assert!(matches!(
            exact.read_bits(1),
            Err(GaussianError::StreamExhausted { .. })
        ));
    }

    #[test]
    fn chi2_cdf_matches_frozen_cases() {
        assert_eq!(chi2_cdf(4, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            chi2_cdf(4, 0.5).unwrap(),
            0.026499021160743912,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            chi2_cdf(2, 25.0).unwrap(),
            1.0 - (-12.5f64).exp(),
            epsilon = 1e-12
        );
        assert!(chi2_cdf(3, 1.0).is_err());
        assert!(chi2_cdf(0, 1.0).is_err());
    }

    #[test]
    fn chi2_cdf_agrees_with_statrs() {
        use statrs::distribution::ContinuousCDF;
        for dof in [2u64, 4, 8, 32, 128, 2048] {
            let dist = statrs::distribution::ChiSquared::new(dof as f64).unwrap();
            for x in [0.1, 1.0, 7.5, 40.0, 300.0, 2500.0] {
                let ours = chi2_cdf(dof, x).unwrap();
                let theirs = dist.cdf(x);
                assert!(
                    (ours - theirs).abs() < 1e-10,
                    "dof={dof} x={x}: {ours} vs {theirs}"
                );
            }
        }
    }

    #[test]
    fn chi2_sf_survives_large_arguments() {
        // far past the exp underflow threshold: sf ≈ 1 − cdf must stay in [0,1]
        let sf = chi2_sf(2048, 4000.0).unwrap();
        assert!(sf > 0.0 && sf < 1.0);
        use statrs::distribution::ContinuousCDF;
        let dist = statrs::distribution::ChiSquared::new(2048.0).unwrap();
        assert_relative_eq!(
            sf,
            1.0 - dist.cdf(4000.0),
            epsilon = 1e-8,
            max_relative = 1e-6
        );
    }

    #[test]
    fn normal_pair_moments_are_sane() {
        let mut s = RandomBitstream::new(SEED);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (a, b) = s.normal_pair();
            sum += a + b;
            sumsq += a * a + b * b;
        }
        let count = (2 * n) as f64;
        // mean 0 ± 5σ, variance 1 ± 5σ
        assert!((sum / count).abs() < 5.0 / count.sqrt());
        assert!((sumsq / count - 1.0).abs() < 5.0 * (2.0f64).sqrt() / count.sqrt());
    }
}
