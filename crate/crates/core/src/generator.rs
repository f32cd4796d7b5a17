//! The scalable state generator: parameter derivation, oracle-driven vector
//! materialization, candidate selection, amplified rejection-sampling state
//! preparation, and the keyed wrappers (m-wise polynomial and toy PRF).

use crate::gaussian::{
    gsample, BitSource, GaussianError, RandomBitstream, RoundingParams, Seed256,
};
use crate::oracles::{
    mwise_eval, mwise_keygen, oracle_packet_stream, prf_window, MWiseKey, OracleError, OracleSpec,
    PrfKey,
};
use crate::quantum::{ComplexVector, QuantumError, StateVector};
use crate::rejection::{bvs_amplified, RejectionError};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Desk-scale cap on qubit count (vectors are materialized densely).
pub const MAX_QUBITS: u32 = 12;
/// Desk-scale cap on the security parameter.
pub const MAX_LAMBDA: u32 = 64;
/// Cap on the m-wise family size a design key may materialize.
pub const MAX_DESIGN_M: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("lambda = {0} is below the construction's minimum of 5")]
    LambdaTooSmall(u32),
    #[error(
        "parameters out of desk-scale range: need 1 ≤ n ≤ {MAX_QUBITS}, lambda ≤ {MAX_LAMBDA}, \
         n + lambda ≤ 64 (got n = {n}, lambda = {lambda})"
    )]
    OutOfRange { n: u32, lambda: u32 },
    #[error("oracle geometry (n={got_n}, packets={got_packets}, packet_bits={got_bits}) does not match generator parameters (n={want_n}, packets={want_packets}, packet_bits={want_bits})")]
    SpecMismatch {
        got_n: u32,
        got_packets: u32,
        got_bits: u32,
        want_n: u32,
        want_packets: u32,
        want_bits: u32,
    },
    #[error("design key family size m = {0} exceeds the materialization cap {MAX_DESIGN_M}")]
    DesignTooLarge(u64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    State(#[from] QuantumError),
    #[error(transparent)]
    Rejection(#[from] RejectionError),
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Derived generator parameters for (n, lambda).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenParams {
    pub n: u32,
    pub lambda: u32,
    /// Grid exponent m = n + lambda (eps = 2^{-m}) and tail cut B.
    pub rounding: RoundingParams,
    /// Per-entry magnitude bound handed to rejection sampling: √2·B.
    pub m_bound: f64,
    /// Amplification rounds: 8·lambda·B².
    pub k_rounds: u32,
}

impl GenParams {
    /// Vector dimension N = 2ⁿ.
    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    /// Grid step 2^{-(n+lambda)}.
    pub fn eps(&self) -> f64 {
        self.rounding.eps()
    }

    /// Tail cut B = ⌈2√(n+lambda)⌉.
    pub fn b_cut(&self) -> u32 {
        self.rounding.b_cut
    }

    /// Bits per packet, r(ε, B).
    pub fn packet_bits(&self) -> u32 {
        self.rounding.r_bits()
    }

    /// Number of packets per oracle output (= lambda).
    pub fn packets(&self) -> u32 {
        self.lambda
    }

    /// The norm threshold √N/2 for candidate selection.
    pub fn norm_threshold(&self) -> f64 {
        (self.dim() as f64).sqrt() / 2.0
    }

    /// An oracle specification with matching geometry.
    pub fn oracle_spec(&self, seed: Seed256) -> OracleSpec {
        OracleSpec::new(seed, self.n, self.packet_bits(), self.packets())
    }
}

/// Derives all generator parameters from (n, lambda).
pub fn gen_params(n: u32, lambda: u32) -> Result<GenParams, GenError> {
    if lambda < 5 {
        return Err(GenError::LambdaTooSmall(lambda));
    }
    if !(1..=MAX_QUBITS).contains(&n) || lambda > MAX_LAMBDA || n + lambda > 64 {
        return Err(GenError::OutOfRange { n, lambda });
    }
    let m = n + lambda;
    // smallest integer B with B² ≥ 4(n+lambda), i.e. B = ⌈2√(n+lambda)⌉,
    // derived in integer arithmetic to dodge float-ceiling edge cases
    let mut b = (4.0 * m as f64).sqrt().ceil() as u32;
    while b * b < 4 * m {
        b += 1;
    }
    while b > 1 && (b - 1) * (b - 1) >= 4 * m {
        b -= 1;
    }
    let rounding = RoundingParams::new(m, b)?;
    Ok(GenParams {
        n,
        lambda,
        rounding,
        m_bound: std::f64::consts::SQRT_2 * b as f64,
        k_rounds: 8 * lambda * b * b,
    })
}

// ---------------------------------------------------------------------------
// Oracle backends
// ---------------------------------------------------------------------------

/// The function the generator draws its packets from.
#[derive(Debug, Clone)]
pub enum GenOracle {
    /// Seeded stand-in for a truly random function.
    Random(OracleSpec),
    /// m-wise independent polynomial over GF(2⁶⁴), block-extended to the
    /// full packet output length.
    MWise(MWiseKey),
    /// Toy keyed PRF.
    Prf(PrfKey),
}

/// Block layout of the extended m-wise domain: the lambda·r output bits are
/// produced 64 at a time, one field evaluation per (input, block) pair.
pub fn block_geometry(params: &GenParams) -> (u32, u32) {
    let total_bits = params.packets() as u64 * params.packet_bits() as u64;
    let blocks = total_bits.div_ceil(64) as u32;
    let block_bits = if blocks <= 1 {
        0
    } else {
        32 - (blocks - 1).leading_zeros()
    };
    (blocks, block_bits)
}

fn validate_backend(oracle: &GenOracle, params: &GenParams) -> Result<(), GenError> {
    let mismatch = |got_n: u32, got_packets: u32, got_bits: u32| GenError::SpecMismatch {
        got_n,
        got_packets,
        got_bits,
        want_n: params.n,
        want_packets: params.packets(),
        want_bits: params.packet_bits(),
    };
    match oracle {
        GenOracle::Random(spec) => {
            if spec.n != params.n
                || spec.packets != params.packets()
                || spec.packet_bits != params.packet_bits()
            {
                return Err(mismatch(spec.n, spec.packets, spec.packet_bits));
            }
        }
        GenOracle::MWise(key) => {
            let (_, block_bits) = block_geometry(params);
            if key.input_bits != params.n + block_bits || key.output_bits != 64 {
                return Err(mismatch(key.input_bits, 0, key.output_bits));
            }
        }
        GenOracle::Prf(key) => {
            let want = params.packets() as u64 * params.packet_bits() as u64;
            if key.input_bits != params.n || key.output_bits != want {
                return Err(mismatch(key.input_bits, 0, key.output_bits as u32));
            }
        }
    }
    Ok(())
}

/// Materialized window of packet bits with exact-length accounting.
struct PackedBits {
    words: Vec<u64>,
    pos: u64,
    end: u64,
}

impl BitSource for PackedBits {
    fn read_bits(&mut self, nb: u32) -> Result<u64, GaussianError> {
        assert!((1..=64).contains(&nb));
        if self.pos + nb as u64 > self.end {
            return Err(GaussianError::StreamExhausted {
                needed: self.pos + nb as u64,
                limit: self.end,
            });
        }
        let mut acc = 0u64;
        for _ in 0..nb {
            let bit = (self.words[(self.pos / 64) as usize] >> (63 - (self.pos % 64))) & 1;
            acc = (acc << 1) | bit;
            self.pos += 1;
        }
        Ok(acc)
    }
}

enum PacketBits {
    Stream(RandomBitstream),
    Packed(PackedBits),
}

impl BitSource for PacketBits {
    fn read_bits(&mut self, nb: u32) -> Result<u64, GaussianError> {
        match self {
            PacketBits::Stream(s) => s.read_bits(nb),
            PacketBits::Packed(p) => p.read_bits(nb),
        }
    }
}

/// Bits of packet i on input x, generated by whichever backend.
fn packet_source(
    oracle: &GenOracle,
    params: &GenParams,
    x: u64,
    i: u32,
) -> Result<PacketBits, GenError> {
    let r = params.packet_bits() as u64;
    match oracle {
        GenOracle::Random(spec) => Ok(PacketBits::Stream(oracle_packet_stream(spec, x, i)?)),
        GenOracle::Prf(key) => Ok(PacketBits::Stream(prf_window(
            key,
            x,
            (i as u64 - 1) * r,
            r,
        )?)),
        GenOracle::MWise(key) => {
            let (_, block_bits) = block_geometry(params);
            let start = (i as u64 - 1) * r;
            let first_block = start / 64;
            let last_block = (start + r - 1) / 64;
            let mut words = Vec::with_capacity((last_block - first_block + 1) as usize);
            for j in first_block..=last_block {
                let extended = (x << block_bits) | j;
                words.push(mwise_eval(key, extended)?);
            }
            let pos = start - 64 * first_block;
            Ok(PacketBits::Packed(PackedBits {
                words,
                pos,
                end: pos + r,
            }))
        }
    }
}

/// The vector v^{f_i}: entry x is a Gaussian grid sample drawn from packet i
/// of the oracle output on x, inputs enumerated in lexicographic order.
pub fn vector_from_function(
    spec: &OracleSpec,
    packet: u32,
    params: &GenParams,
) -> Result<ComplexVector, GenError> {
    vector_from_oracle(&GenOracle::Random(spec.clone()), packet, params)
}

fn vector_from_oracle(
    oracle: &GenOracle,
    packet: u32,
    params: &GenParams,
) -> Result<ComplexVector, GenError> {
    let n_entries = params.dim() as u64;
    let mut entries: Vec<Complex64> = Vec::with_capacity(n_entries as usize);
    for x in 0..n_entries {
        let mut source = packet_source(oracle, params, x, packet)?;
        entries.push(gsample(&params.rounding, &mut source)?);
    }
    Ok(ComplexVector::new(entries)?)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Which candidate-selection case ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GenBranch {
    /// N > lambda: the first packet function is used unconditionally.
    LargeN,
    /// N ≤ lambda: packets are scanned for the first long-enough vector.
    SmallN,
}

/// Result of one full generator execution.
#[derive(Debug, Clone)]
pub struct GenOutcome {
    /// Output state; the all-zeros basis state whenever `failed`.
    pub state: StateVector,
    /// True iff the failure flag was raised (no candidate, or rejection
    /// sampling exhausted its rounds).
    pub failed: bool,
    pub branch: GenBranch,
    /// 1-based packet index of the selected candidate; None if no candidate
    /// passed the norm test.
    pub candidate_index: Option<u32>,
    /// Rejection-sampling rounds consumed (0 if no candidate was selected).
    pub bvs_rounds: u32,
}

/// Full generator run against the seeded random-function backend.
pub fn ars_generate(
    params: &GenParams,
    spec: &OracleSpec,
    rng: &mut RandomBitstream,
) -> Result<GenOutcome, GenError> {
    generate_with(params, &GenOracle::Random(spec.clone()), rng)
}

/// Full generator run against any backend. The oracle determines the target
/// vector; `rng` supplies only the rejection-sampling coins.
pub fn generate_with(
    params: &GenParams,
    oracle: &GenOracle,
    rng: &mut RandomBitstream,
) -> Result<GenOutcome, GenError> {
    validate_backend(oracle, params)?;
    let (v, branch, candidate) = if params.dim() as u64 > params.lambda as u64 {
        (vector_from_oracle(oracle, 1, params)?, GenBranch::LargeN, 1)
    } else {
        let mut found = None;
        for i in 1..=params.packets() {
            let v = vector_from_oracle(oracle, i, params)?;
            if v.norm() >= params.norm_threshold() {
                found = Some((v, i));
                break;
            }
        }
        match found {
            Some((v, i)) => (v, GenBranch::SmallN, i),
            None => {
                return Ok(GenOutcome {
                    state: StateVector::basis(params.n, 0),
                    failed: true,
                    branch: GenBranch::SmallN,
                    candidate_index: None,
                    bvs_rounds: 0,
                });
            }
        }
    };
    let out = bvs_amplified(&v, params.m_bound, params.k_rounds, rng)?;
    Ok(GenOutcome {
        failed: !out.success,
        state: out.state,
        branch,
        candidate_index: Some(candidate),
        bvs_rounds: out.rounds_used,
    })
}

// ---------------------------------------------------------------------------
// Keyed wrappers
// ---------------------------------------------------------------------------

/// Query-count bound of one generator run: lambda·2ⁿ (each candidate
/// materializes all N entries, at most lambda candidates).
pub fn query_bound(n: u32, lambda: u32) -> u64 {
    lambda as u64 * (1u64 << n)
}

/// Family size for a t-design key: m = 2·t·lambda·2ⁿ.
pub fn tdesign_m(n: u32, lambda: u32, t: u32) -> u64 {
    2 * t as u64 * query_bound(n, lambda)
}

/// Samples an m-wise key sized for t generator runs, over the block-extended
/// domain of n + block_bits input bits.
pub fn tdesign_keygen(
    n: u32,
    lambda: u32,
    t: u32,
    rng: &mut RandomBitstream,
) -> Result<MWiseKey, GenError> {
    let params = gen_params(n, lambda)?;
    let (_, block_bits) = block_geometry(&params);
    let m = tdesign_m(n, lambda, t);
    if m == 0 || m > MAX_DESIGN_M {
        return Err(GenError::DesignTooLarge(m));
    }
    Ok(mwise_keygen(n + block_bits, 64, m as u32, rng)?)
}

/// Generator run with the oracle replaced by the m-wise family.
pub fn tdesign_generate(
    key: &MWiseKey,
    params: &GenParams,
    rng: &mut RandomBitstream,
) -> Result<GenOutcome, GenError> {
    generate_with(params, &GenOracle::MWise(key.clone()), rng)
}

/// Samples a toy-PRF key with output geometry matching (n, lambda).
pub fn prs_keygen(n: u32, lambda: u32, rng: &mut RandomBitstream) -> Result<PrfKey, GenError> {
    let params = gen_params(n, lambda)?;
    let mut key = [0u64; 4];
    for word in &mut key {
        *word = rng.read_bits(64).map_err(GenError::from)?;
    }
    Ok(PrfKey {
        key,
        input_bits: n,
        output_bits: params.packets() as u64 * params.packet_bits() as u64,
    })
}

/// Generator run with the oracle replaced by the toy PRF.
pub fn prs_generate(
    key: &PrfKey,
    params: &GenParams,
    rng: &mut RandomBitstream,
) -> Result<GenOutcome, GenError> {
    generate_with(params, &GenOracle::Prf(key.clone()), rng)
}
