//! Quantum rejection sampling: prepares the normalized version of a target
//! amplitude vector with success probability ‖v‖²/(M²·N), amplified by
//! independent repetition.
//!
//! The simulator tracks the measured branch classically — a success yields
//! the exact normalized state, a failure yields the all-zeros basis state —
//! so the sampled outcome distribution matches the algorithm it models
//! without simulating the intermediate unitaries.

use crate::gaussian::RandomBitstream;
use crate::quantum::{normalize, ComplexVector, QuantumError, StateVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RejectionError {
    #[error("amplitude bound {bound} is not positive and finite")]
    BadBound { bound: f64 },
    #[error("entry magnitude {max_abs} exceeds the stated bound {bound}")]
    BoundViolated { max_abs: f64, bound: f64 },
    #[error("need at least one amplification round")]
    NoRounds,
    #[error(transparent)]
    State(#[from] QuantumError),
}

/// Outcome of one amplified rejection-sampling attempt.
#[derive(Debug, Clone)]
pub struct BvsOutcome {
    /// Whether any round accepted.
    pub success: bool,
    /// Normalized target on success; the all-zeros basis state on failure.
    pub state: StateVector,
    /// Rounds consumed (= k on failure, ≤ k on success).
    pub rounds_used: u32,
}

/// Exact acceptance probability of a single round: ‖v‖² / (M²·N).
pub fn qrs_success_prob(v: &ComplexVector, m_bound: f64) -> Result<f64, RejectionError> {
    if m_bound <= 0.0 || !m_bound.is_finite() {
        return Err(RejectionError::BadBound { bound: m_bound });
    }
    let max_abs = v.max_abs();
    if max_abs > m_bound {
        return Err(RejectionError::BoundViolated {
            max_abs,
            bound: m_bound,
        });
    }
    let n = v.dim() as f64;
    Ok(v.norm_sqr() / (m_bound * m_bound * n))
}

/// One rejection-sampling round: accept with probability ‖v‖²/(M²·N) and
/// return the normalized target, otherwise signal failure.
pub fn bvs(
    v: &ComplexVector,
    m_bound: f64,
    rng: &mut RandomBitstream,
) -> Result<BvsOutcome, RejectionError> {
    bvs_amplified(v, m_bound, 1, rng)
}

/// k independent rounds, stopping at the first acceptance. Failure of every
/// round (probability (1−p)^k) yields the all-zeros basis state.
pub fn bvs_amplified(
    v: &ComplexVector,
    m_bound: f64,
    k: u32,
    rng: &mut RandomBitstream,
) -> Result<BvsOutcome, RejectionError> {
    if k == 0 {
        return Err(RejectionError::NoRounds);
    }
    let p = qrs_success_prob(v, m_bound)?;
    for round in 1..=k {
        if rng.uniform_f64() < p {
            return Ok(BvsOutcome {
                success: true,
                state: normalize(v)?,
                rounds_used: round,
            });
        }
    }
    Ok(BvsOutcome {
        success: false,
        state: StateVector::basis(v.qubits(), 0),
        rounds_used: k,
    })
}
