//! Numerical verification of every concentration lemma, conditional
//! corollary, rejection-sampling claim, distance lemma, hybrid-chain step,
//! and the end-to-end trace-distance theorem — exact formulas where a closed
//! form exists, seeded Monte Carlo elsewhere.

use crate::gaussian::{
    chi2_cdf, derive_seed, inv_normal_cdf, round_complex, rounded_pmf, seed_to_hex, GaussianError,
    RandomBitstream, RoundingParams, Seed256,
};
use crate::generator::{gen_params, GenError};
use crate::oracles::OracleError;
use crate::quantum::{
    ensemble_t_tensor, haar_moment, inner_product, normalize, trace_distance_mixed, ComplexVector,
    DensityMatrix, QuantumError, StateVector, DIM_CAP,
};
use crate::rejection::{qrs_success_prob, RejectionError};
use crate::stats::{binomial_stderr, par_chunked_fold, KahanSum, MC_CHUNK};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Minimum conditioned-sample count for a conditional estimate to be
/// reported at all.
pub const MIN_CONDITIONED_HITS: u64 = 1000;
/// Minimum run count for the end-to-end estimator.
pub const MIN_E2E_RUNS: u64 = 100_000;
/// Numerical slack granted to exact density-matrix comparisons: the
/// Hermitian eigensolver is accurate to ~1e-12, so equality-tight bounds
/// must not flip on roundoff.
pub const DISTANCE_SLACK: f64 = 1e-9;
/// Cap on the (boundary count) of the exact sampler-law tabulation:
/// m + ⌈log₂B⌉ must stay ≤ 20 so the tabulation finishes in seconds.
pub const SAMPLER_LAW_MAX_GRID_LOG2: u32 = 20;

const TAG_LEMMA_BASE: u64 = 0x6c6d_0000_0000_0100;
const TAG_HYBRID_BASE: u64 = 0x6879_0000_0000_0200;
const TAG_E2E_SPEC: u64 = 0x6532_6532_0000_0001;
const TAG_E2E_BVS: u64 = 0x6532_6532_0000_0002;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("lemma hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("only {hits} conditioned samples (need ≥ {needed}); increase trials")]
    InsufficientHits { hits: u64, needed: u64 },
    #[error("tensor dimension {0} exceeds the cap {DIM_CAP}")]
    DimensionCap(u128),
    #[error("{runs} runs is below the estimator's minimum {MIN_E2E_RUNS}")]
    TooFewRuns { runs: u64 },
    #[error("unknown lemma id '{0}'")]
    BadLemma(String),
    #[error("unknown hybrid step '{0}'")]
    BadStep(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Rejection(#[from] RejectionError),
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reserved for the documented thin-layer final-bound discrepancy.
    Informational,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub params: BTreeMap<String, f64>,
    pub estimate: f64,
    /// 0 for exact computations.
    pub stderr: f64,
    pub bound: f64,
    pub verdict: Verdict,
    pub trials: u64,
    pub seed: String,
    pub note: String,
}

impl LemmaReport {
    /// Flat CSV row: lemma_id, params…, estimate, stderr, bound, verdict.
    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![self.lemma_id.clone()];
        for (k, v) in &self.params {
            row.push(format!("{k}={v}"));
        }
        row.push(format!("{}", self.estimate));
        row.push(format!("{}", self.stderr));
        row.push(format!("{}", self.bound));
        row.push(format!("{:?}", self.verdict).to_lowercase());
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    Exact,
    MonteCarlo,
    Identity,
}

#[derive(Debug, Clone, Serialize)]
pub struct HybridStepReport {
    pub step: String,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub method: StepMethod,
    pub verdict: Verdict,
    pub note: String,
}

/// Pass iff estimate + 3·stderr ≤ bound (for claims "probability < bound").
fn upper_verdict(estimate: f64, stderr: f64, bound: f64) -> Verdict {
    if estimate + 3.0 * stderr <= bound {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Pass iff estimate − 3·stderr ≥ bound (for claims "probability > bound").
fn lower_verdict(estimate: f64, stderr: f64, bound: f64) -> Verdict {
    if estimate - 3.0 * stderr >= bound {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

// ---------------------------------------------------------------------------
// Exact formulas
// ---------------------------------------------------------------------------

/// The end-to-end trace-distance bound:
/// (t+8)·e^{−λ} + (5√t + λ + 1)·2^{−λ} + 2·(8/10)^λ.
pub fn theorem_bound(t: u32, lambda: u32) -> f64 {
    assert!(t >= 1 && lambda >= 5);
    let l = lambda as f64;
    let tf = t as f64;
    (tf + 8.0) * (-l).exp() + (5.0 * tf.sqrt() + l + 1.0) * (-l).exp2() + 2.0 * 0.8f64.powf(l)
}

/// The tail cut B = smallest integer with B² ≥ 4(n+λ); valid for λ ≥ 3
/// (below the generator's own λ ≥ 5 floor, since several lemmas admit
/// smaller λ).
pub fn tail_cut(n: u32, lambda: u32) -> u32 {
    let m = n + lambda;
    let mut b = (4.0 * m as f64).sqrt().ceil() as u32;
    while b * b < 4 * m {
        b += 1;
    }
    while b > 1 && (b - 1) * (b - 1) >= 4 * m {
        b -= 1;
    }
    b
}

/// Exact probability that some coordinate of a complex standard Gaussian
/// N-vector exceeds B in magnitude: 1 − (1 − e^{−B²/2})^N.
pub fn coord_bound_probability_exact(n: u32, b: f64) -> f64 {
    assert!(b > 0.0);
    let big_n = (1u64 << n) as f64;
    let p1 = (-b * b / 2.0).exp();
    -f64::exp_m1(big_n * f64::ln_1p(-p1))
}

/// Exact Gaussian mass of the thin layer (1/2−ε)√N ≤ ‖u‖ < √N/2, via the
/// χ²_{2N} CDF at the two squared endpoints; ε = 2^{−n−λ}.
pub fn layer_probability_exact(n: u32, lambda: u32) -> Result<f64, VerifyError> {
    if lambda < 4 {
        return Err(VerifyError::Hypothesis(format!(
            "thin-layer mass needs lambda ≥ 4, got {lambda}"
        )));
    }
    let big_n = (1u64 << n) as f64;
    let eps = (-((n + lambda) as f64)).exp2();
    let hi = big_n / 4.0;
    let lo = big_n * (0.5 - eps) * (0.5 - eps);
    Ok(chi2_cdf(2 * (1u64 << n), hi)? - chi2_cdf(2 * (1u64 << n), lo)?)
}

/// ln N! — exact factorial through N = 32, log-gamma beyond.
fn ln_factorial(n: u64) -> f64 {
    if n <= 32 {
        let mut f: u128 = 1;
        for i in 2..=n as u128 {
            f *= i;
        }
        (f as f64).ln()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// Euclidean volume of the thin layer in ℂ^N ≅ ℝ^{2N}:
/// π^N·N^N/N!·((1/2)^{2N} − (1/2−ε)^{2N}).
fn ln_layer_volume(n: u32, eps: f64) -> f64 {
    let big_n = 1u64 << n;
    let nf = big_n as f64;
    // (1/4)^N·(1 − (1−2ε)^{2N}), the second factor via ln1p/expm1
    let shrink = f64::ln_1p(-2.0 * eps) * 2.0 * nf;
    nf * std::f64::consts::PI.ln() + nf * nf.ln() - ln_factorial(big_n) - nf * 4.0f64.ln()
        + (-f64::exp_m1(shrink)).ln()
}

/// The layer proof's intermediate bound e^{−(39/20−ε)N}·Vol(L), which is a
/// true density-times-volume bound (unlike the final constant-folded form).
pub fn layer_intermediate_bound(n: u32, lambda: u32) -> Result<f64, VerifyError> {
    if lambda < 4 {
        return Err(VerifyError::Hypothesis(format!(
            "thin-layer bound needs lambda ≥ 4, got {lambda}"
        )));
    }
    let big_n = (1u64 << n) as f64;
    let eps = (-((n + lambda) as f64)).exp2();
    Ok((ln_layer_volume(n, eps) - (39.0 / 20.0 - eps) * big_n).exp())
}

/// The layer lemma's final stated bound 2^{−λ}·6^{−N}.
pub fn layer_final_bound(n: u32, lambda: u32) -> f64 {
    let big_n = (1u64 << n) as f64;
    (-(lambda as f64)).exp2() * 6.0f64.powf(-big_n)
}

// ---------------------------------------------------------------------------
// Monte Carlo building blocks
// ---------------------------------------------------------------------------

fn draw_complex_vector(rng: &mut RandomBitstream, dim: usize) -> Vec<Complex64> {
    (0..dim).map(|_| rng.complex_standard_normal()).collect()
}

fn norm_of(entries: &[Complex64]) -> f64 {
    entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn max_abs_of(entries: &[Complex64]) -> f64 {
    entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn round_entries(entries: &[Complex64], p: &RoundingParams) -> Vec<Complex64> {
    entries.iter().map(|&z| round_complex(z, p)).collect()
}

/// (event count, condition-hit count) for the conditioned thin-layer event:
/// condition ‖R(u)‖ ≥ √N/2 ∧ ∀i |uᵢ| ≤ B, event ‖u‖ < √N/2.
fn not_in_layer_counts(n: u32, lambda: u32, trials: u64, seed: &Seed256, tag: u64) -> (u64, u64) {
    let dim = 1usize << n;
    let threshold = (dim as f64).sqrt() / 2.0;
    let b = tail_cut(n, lambda) as f64;
    let rounding = RoundingParams::new(n + lambda, b as u32).expect("valid rounding");
    par_chunked_fold(
        trials,
        MC_CHUNK,
        |range| {
            let mut events = 0u64;
            let mut hits = 0u64;
            for i in range {
                let mut rng = RandomBitstream::substream(seed, i, tag);
                let u = draw_complex_vector(&mut rng, dim);
                if max_abs_of(&u) > b {
                    continue;
                }
                let rounded = round_entries(&u, &rounding);
                if norm_of(&rounded) < threshold {
                    continue;
                }
                hits += 1;
                if norm_of(&u) < threshold {
                    events += 1;
                }
            }
            (events, hits)
        },
        (0, 0),
        |a, b| (a.0 + b.0, a.1 + b.1),
    )
}

/// MC estimate of a conditioning probability plus the conservative exact
/// upper estimate exact_event / P̂[condition] for P[A|C] ≤ P[A]/P[C].
/// Returns (estimate, stderr, condition hits).
fn conditional_upper_estimate(
    exact_event: f64,
    trials: u64,
    seed: &Seed256,
    tag: u64,
    dim: usize,
    condition: impl Fn(&[Complex64]) -> bool + Sync,
) -> Result<(f64, f64, u64), VerifyError> {
    let hits = par_chunked_fold(
        trials,
        MC_CHUNK,
        |range| {
            let mut h = 0u64;
            for i in range {
                let mut rng = RandomBitstream::substream(seed, i, tag);
                let u = draw_complex_vector(&mut rng, dim);
                if condition(&u) {
                    h += 1;
                }
            }
            h
        },
        0,
        |a, b| a + b,
    );
    if hits < MIN_CONDITIONED_HITS {
        return Err(VerifyError::InsufficientHits {
            hits,
            needed: MIN_CONDITIONED_HITS,
        });
    }
    let p_cond = hits as f64 / trials as f64;
    let sigma_cond = binomial_stderr(p_cond, trials);
    let estimate = exact_event / p_cond;
    // delta method: d/dp (A/p) = −A/p²
    let stderr = exact_event * sigma_cond / (p_cond * p_cond);
    Ok((estimate, stderr, hits))
}

// ---------------------------------------------------------------------------
// Lemma verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    GaussianLong,
    CoordBounded,
    Balanced,
    RoundedLong,
    CondCoord,
    Cond2Coord,
    Layer,
    NotInLayer,
    LongVectors,
    BvsClaim,
}

impl LemmaId {
    pub const ALL: [LemmaId; 10] = [
        LemmaId::GaussianLong,
        LemmaId::CoordBounded,
        LemmaId::Balanced,
        LemmaId::RoundedLong,
        LemmaId::CondCoord,
        LemmaId::Cond2Coord,
        LemmaId::Layer,
        LemmaId::NotInLayer,
        LemmaId::LongVectors,
        LemmaId::BvsClaim,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LemmaId::GaussianLong => "gaussian_long",
            LemmaId::CoordBounded => "coord_bounded",
            LemmaId::Balanced => "balanced",
            LemmaId::RoundedLong => "rounded_long",
            LemmaId::CondCoord => "cond_coord",
            LemmaId::Cond2Coord => "cond2_coord",
            LemmaId::Layer => "layer",
            LemmaId::NotInLayer => "not_in_layer",
            LemmaId::LongVectors => "long_vectors",
            LemmaId::BvsClaim => "bvs_claim",
        }
    }

    pub fn parse(s: &str) -> Result<Self, VerifyError> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| VerifyError::BadLemma(s.to_string()))
    }

    fn tag(&self) -> u64 {
        TAG_LEMMA_BASE + Self::ALL.iter().position(|x| x == self).unwrap() as u64
    }
}

/// Parameters for [`verify_lemma`]. `n`/`lambda` drive every vector lemma;
/// `eps` overrides the deviation for gaussian_long (default 7/8) and the
/// perturbation radius for long_vectors (default 2^{−n−λ}); `m_dim`
/// overrides gaussian_long's real dimension (default 32).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaParams {
    pub n: u32,
    pub lambda: u32,
    pub eps: Option<f64>,
    pub m_dim: Option<u64>,
}

impl LemmaParams {
    pub fn new(n: u32, lambda: u32) -> Self {
        LemmaParams {
            n,
            lambda,
            eps: None,
            m_dim: None,
        }
    }
}

fn base_params(p: &LemmaParams) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("n".into(), p.n as f64);
    m.insert("lambda".into(), p.lambda as f64);
    m
}

/// Numerically verifies one lemma/corollary/claim at the given parameters.
pub fn verify_lemma(
    id: LemmaId,
    params: &LemmaParams,
    trials: u64,
    seed: &Seed256,
) -> Result<LemmaReport, VerifyError> {
    let (n, lambda) = (params.n, params.lambda);
    if n == 0 || n > 12 {
        return Err(VerifyError::Hypothesis(format!(
            "vector lemmas need 1 ≤ n ≤ 12, got {n}"
        )));
    }
    let dim = 1usize << n;
    let nf = dim as f64;
    let threshold = nf.sqrt() / 2.0;
    let tag = id.tag();
    let seed_hex = seed_to_hex(seed);
    let mut pmap = base_params(params);

    match id {
        LemmaId::GaussianLong => {
            // Pr[‖u‖² ≥ (1−ε)m] ≥ 1 − e^{−ε²m/4} for u ~ N(0,1)^m
            let m_dim = params.m_dim.unwrap_or(32);
            let eps = params.eps.unwrap_or(0.875);
            if !(0.0 < eps && eps < 1.0) || m_dim == 0 {
                return Err(VerifyError::Hypothesis(format!(
                    "gaussian_long needs 0 < eps < 1 and m ≥ 1, got eps={eps}, m={m_dim}"
                )));
            }
            pmap.insert("m".into(), m_dim as f64);
            pmap.insert("eps".into(), eps);
            let cut = (1.0 - eps) * m_dim as f64;
            let events = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut c = 0u64;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let mut s = 0.0;
                        let mut left = m_dim;
                        while left > 0 {
                            let (a, b) = rng.normal_pair();
                            s += a * a;
                            if left > 1 {
                                s += b * b;
                            }
                            left = left.saturating_sub(2);
                        }
                        if s >= cut {
                            c += 1;
                        }
                    }
                    c
                },
                0,
                |a, b| a + b,
            );
            let estimate = events as f64 / trials as f64;
            let stderr = binomial_stderr(estimate, trials);
            let bound = 1.0 - (-eps * eps * m_dim as f64 / 4.0).exp();
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict: lower_verdict(estimate, stderr, bound),
                trials,
                seed: seed_hex,
                note: "lower-bound claim on the squared-norm tail of a real Gaussian vector".into(),
            })
        }

        LemmaId::CoordBounded => {
            // Pr[∃i: |vᵢ| > B] < e^{−λ}, exact closed form
            let b = tail_cut(n, lambda);
            pmap.insert("B".into(), b as f64);
            let estimate = coord_bound_probability_exact(n, b as f64);
            let bound = (-(lambda as f64)).exp();
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr: 0.0,
                bound,
                verdict: upper_verdict(estimate, 0.0, bound),
                trials: 0,
                seed: seed_hex,
                note: "exact evaluation of 1 − (1 − e^{−B²/2})^N; no sampling".into(),
            })
        }

        LemmaId::Balanced => {
            // Pr[‖v‖ ≥ √N/2 ∧ ∀i |vᵢ| ≤ B] > 1 − (e^{−N/4} + e^{−λ})
            let b = tail_cut(n, lambda) as f64;
            pmap.insert("B".into(), b);
            let events = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut c = 0u64;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let u = draw_complex_vector(&mut rng, dim);
                        if norm_of(&u) >= threshold && max_abs_of(&u) <= b {
                            c += 1;
                        }
                    }
                    c
                },
                0,
                |a, b| a + b,
            );
            let estimate = events as f64 / trials as f64;
            let stderr = binomial_stderr(estimate, trials);
            let bound = 1.0 - ((-nf / 4.0).exp() + (-(lambda as f64)).exp());
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict: lower_verdict(estimate, stderr, bound),
                trials,
                seed: seed_hex,
                note: "lower-bound claim: long and coordinate-bounded simultaneously".into(),
            })
        }

        LemmaId::RoundedLong => {
            // Pr[‖R(v)‖ ≥ √N/2] > 1 − (e^{−N/4} + e^{−λ})
            let b = tail_cut(n, lambda);
            pmap.insert("B".into(), b as f64);
            let rounding = RoundingParams::new(n + lambda, b)?;
            let events = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut c = 0u64;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let u = draw_complex_vector(&mut rng, dim);
                        if norm_of(&round_entries(&u, &rounding)) >= threshold {
                            c += 1;
                        }
                    }
                    c
                },
                0,
                |a, b| a + b,
            );
            let estimate = events as f64 / trials as f64;
            let stderr = binomial_stderr(estimate, trials);
            let bound = 1.0 - ((-nf / 4.0).exp() + (-(lambda as f64)).exp());
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict: lower_verdict(estimate, stderr, bound),
                trials,
                seed: seed_hex,
                note: "lower-bound claim on the rounded vector's norm".into(),
            })
        }

        LemmaId::CondCoord | LemmaId::Cond2Coord => {
            // Pr[∃i |vᵢ| > B | condition] < 4e^{−λ}; the event is far below
            // MC resolution at tested λ, so the conditioned probability is
            // bounded by exact-numerator / measured-denominator:
            // P[A|C] ≤ P[A]/P[C].
            if lambda < 3 {
                return Err(VerifyError::Hypothesis(format!(
                    "conditional coordinate bounds need lambda ≥ 3, got {lambda}"
                )));
            }
            let b = tail_cut(n, lambda);
            pmap.insert("B".into(), b as f64);
            let exact = coord_bound_probability_exact(n, b as f64);
            let rounding = RoundingParams::new(n + lambda, b)?;
            let rounded_cond = id == LemmaId::CondCoord;
            let (estimate, stderr, hits) = conditional_upper_estimate(
                exact,
                trials,
                seed,
                tag,
                dim,
                move |u: &[Complex64]| {
                    if rounded_cond {
                        norm_of(&round_entries(u, &rounding)) >= threshold
                    } else {
                        norm_of(u) >= threshold
                    }
                },
            )?;
            let bound = 4.0 * (-(lambda as f64)).exp();
            let cond_name = if rounded_cond {
                "‖R(v)‖ ≥ √N/2"
            } else {
                "‖v‖ ≥ √N/2"
            };
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict: upper_verdict(estimate, stderr, bound),
                trials,
                seed: seed_hex,
                note: format!(
                    "conservative estimate P[A]/P̂[C] ≥ P[A|C] with exact numerator; \
                     condition {cond_name} hit {hits} times"
                ),
            })
        }

        LemmaId::Layer => {
            // exact layer mass vs the final stated bound (informational,
            // documented discrepancy) and the proof's intermediate bound
            // (enforced)
            let estimate = layer_probability_exact(n, lambda)?;
            let final_bound = layer_final_bound(n, lambda);
            let intermediate = layer_intermediate_bound(n, lambda)?;
            let final_ok = estimate <= final_bound;
            let inter_ok = estimate <= intermediate;
            let verdict = if inter_ok {
                Verdict::Informational
            } else {
                Verdict::Fail
            };
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr: 0.0,
                bound: final_bound,
                verdict,
                trials: 0,
                seed: seed_hex,
                note: format!(
                    "exact χ²_{{2N}} layer mass; final stated bound 2^-λ·6^-N = {final_bound:.6e} \
                     {} (ratio {:.3}); enforced intermediate density·volume bound = \
                     {intermediate:.6e} {}",
                    if final_ok { "holds" } else { "is EXCEEDED" },
                    estimate / final_bound,
                    if inter_ok { "holds" } else { "is EXCEEDED" },
                ),
            })
        }

        LemmaId::NotInLayer => {
            // Pr[‖u‖ < √N/2 | ‖R(u)‖ ≥ √N/2 ∧ ∀i |uᵢ| ≤ B] < 4·2^{−λ}·6^{−N}
            if lambda < 4 {
                return Err(VerifyError::Hypothesis(format!(
                    "not_in_layer needs lambda ≥ 4, got {lambda}"
                )));
            }
            let b = tail_cut(n, lambda);
            pmap.insert("B".into(), b as f64);
            let (events, hits) = not_in_layer_counts(n, lambda, trials, seed, tag);
            if hits < MIN_CONDITIONED_HITS {
                return Err(VerifyError::InsufficientHits {
                    hits,
                    needed: MIN_CONDITIONED_HITS,
                });
            }
            let estimate = events as f64 / hits as f64;
            let stderr = binomial_stderr(estimate, hits);
            let bound = 4.0 * layer_final_bound(n, lambda);
            let verdict = upper_verdict(estimate, stderr, bound);
            let layer_exact = layer_probability_exact(n, lambda)?;
            let layer_bound = layer_final_bound(n, lambda);
            let mut note = format!(
                "conditioned resampling: {events} events in {hits} condition hits; \
                 diagnostic: exact thin-layer mass {layer_exact:.6e} vs its stated bound \
                 2^-λ·6^-N = {layer_bound:.6e} (ratio {:.2})",
                layer_exact / layer_bound
            );
            if verdict == Verdict::Fail {
                note.push_str(
                    "; the conditioned event is a sub-event of a √2-widened thin layer, and \
                     the exact layer mass already exceeds its stated bound here — the \
                     violation traces to the source bound's 6^-N constant, not the sampler",
                );
            }
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict,
                trials,
                seed: seed_hex,
                note,
            })
        }

        LemmaId::LongVectors => {
            // deterministic: ‖u‖ ≥ √N/2 and ∀i |uᵢ−vᵢ| ≤ ε imply
            // |⟨û|v̂⟩| ≥ 1 − 18ε²
            let eps = params.eps.unwrap_or((-((n + lambda) as f64)).exp2());
            if !(eps > 0.0 && eps <= 0.2) {
                return Err(VerifyError::Hypothesis(format!(
                    "long_vectors needs 0 < eps ≤ 1/5, got {eps}"
                )));
            }
            pmap.insert("eps".into(), eps);
            let min_overlap = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut min_ov = f64::INFINITY;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let u = loop {
                            let u = draw_complex_vector(&mut rng, dim);
                            if norm_of(&u) >= threshold {
                                break u;
                            }
                        };
                        // per-coordinate perturbation of magnitude ≤ ε:
                        // boundary-radius on even trials, interior on odd
                        let radius_scale = if i % 2 == 0 { 1.0 } else { rng.uniform_f64() };
                        let v: Vec<Complex64> = u
                            .iter()
                            .map(|&z| {
                                let theta = std::f64::consts::TAU * rng.uniform_f64();
                                let r = eps * radius_scale * (1.0 - 1e-12);
                                z + Complex64::from_polar(r, theta)
                            })
                            .collect();
                        let dot: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                        let ov = dot.norm() / (norm_of(&u) * norm_of(&v));
                        min_ov = min_ov.min(ov);
                    }
                    min_ov
                },
                f64::INFINITY,
                f64::min,
            );
            let bound = 1.0 - 18.0 * eps * eps;
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate: min_overlap,
                stderr: 0.0,
                bound,
                verdict: if min_overlap >= bound {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
                trials,
                seed: seed_hex,
                note: "deterministic conclusion: minimum normalized overlap over all \
                       hypothesis-satisfying pairs must reach the bound"
                    .into(),
            })
        }

        LemmaId::BvsClaim => {
            // conditioned on ‖R(v)‖ ≥ √N/2: amplified rejection sampling
            // with k = 8λB² rounds fails with probability ≤ e^{−λ}; the
            // per-vector failure probability (1−p)^k is computed exactly
            let gp = gen_params(n, lambda)?;
            let b = gp.b_cut();
            pmap.insert("B".into(), b as f64);
            pmap.insert("k".into(), gp.k_rounds as f64);
            let p_floor = 1.0 / (8.0 * (b * b) as f64);
            let acc = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut sum = KahanSum::default();
                    let mut sum_sq = KahanSum::default();
                    let mut min_p = f64::INFINITY;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let rounded = loop {
                            let u = draw_complex_vector(&mut rng, dim);
                            let r = round_entries(&u, &gp.rounding);
                            if norm_of(&r) >= threshold {
                                break r;
                            }
                        };
                        let v = ComplexVector::new(rounded).expect("nonempty");
                        let p = qrs_success_prob(&v, gp.m_bound).expect("bounded by cut");
                        min_p = min_p.min(p);
                        // exact failure probability of k amplified rounds
                        let q = (gp.k_rounds as f64 * f64::ln_1p(-p)).exp();
                        sum.add(q);
                        sum_sq.add(q * q);
                    }
                    (sum, sum_sq, min_p)
                },
                (KahanSum::default(), KahanSum::default(), f64::INFINITY),
                |a, b| {
                    let mut s = a.0;
                    s.add(b.0.value());
                    let mut sq = a.1;
                    sq.add(b.1.value());
                    (s, sq, a.2.min(b.2))
                },
            );
            let estimate = acc.0.value() / trials as f64;
            let var = (acc.1.value() / trials as f64 - estimate * estimate).max(0.0);
            let stderr = (var / trials as f64).sqrt();
            let bound = (-(lambda as f64)).exp();
            let min_p = acc.2;
            Ok(LemmaReport {
                lemma_id: id.as_str().into(),
                params: pmap,
                estimate,
                stderr,
                bound,
                verdict: upper_verdict(estimate, stderr, bound),
                trials,
                seed: seed_hex,
                note: format!(
                    "per-vector amplified failure (1−p)^k computed exactly; Monte Carlo over \
                     conditioned rounded vectors; min success probability {min_p:.4e} vs \
                     guaranteed floor 1/(8B²) = {p_floor:.4e}"
                ),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Distance lemmas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceLemma {
    SdTd,
    TraceDiameter,
    Angular,
}

impl DistanceLemma {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceLemma::SdTd => "sd_td",
            DistanceLemma::TraceDiameter => "trace_diameter",
            DistanceLemma::Angular => "angular",
        }
    }

    pub fn parse(s: &str) -> Result<Self, VerifyError> {
        match s {
            "sd_td" => Ok(DistanceLemma::SdTd),
            "trace_diameter" => Ok(DistanceLemma::TraceDiameter),
            "angular" => Ok(DistanceLemma::Angular),
            other => Err(VerifyError::BadLemma(other.to_string())),
        }
    }
}

/// Classical statistical distance between two finitely supported state
/// distributions, matching support points by bit-exact amplitudes.
fn classical_sd(a: &[(f64, StateVector)], b: &[(f64, StateVector)]) -> f64 {
    use std::collections::HashMap;
    let key = |s: &StateVector| -> Vec<(u64, u64)> {
        s.amplitudes()
            .iter()
            .map(|z| (z.re.to_bits(), z.im.to_bits()))
            .collect()
    };
    let mut table: HashMap<Vec<(u64, u64)>, (f64, f64)> = HashMap::new();
    for (w, s) in a {
        table.entry(key(s)).or_default().0 += w;
    }
    for (w, s) in b {
        table.entry(key(s)).or_default().1 += w;
    }
    table.values().map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0
}

fn pair_overlap(x: &StateVector, y: &StateVector) -> f64 {
    inner_product(x.as_vector(), y.as_vector())
        .expect("equal dims")
        .norm()
}

/// Verifies one of the three trace-distance lemmas on a concrete pair of
/// finitely supported ensembles, by exact density-matrix computation.
pub fn verify_distance_lemma(
    id: DistanceLemma,
    ensemble_a: &[(f64, StateVector)],
    ensemble_b: &[(f64, StateVector)],
    t: u32,
) -> Result<LemmaReport, VerifyError> {
    let rho_a = ensemble_t_tensor(ensemble_a, t)?;
    let rho_b = ensemble_t_tensor(ensemble_b, t)?;
    let estimate = trace_distance_mixed(&rho_a, &rho_b)?;
    let mut pmap = BTreeMap::new();
    pmap.insert("t".into(), t as f64);
    pmap.insert("support_a".into(), ensemble_a.len() as f64);
    pmap.insert("support_b".into(), ensemble_b.len() as f64);

    let (bound, note) = match id {
        DistanceLemma::SdTd => {
            let sd = classical_sd(ensemble_a, ensemble_b);
            (
                sd,
                format!("trace distance of t-copy mixtures vs classical SD = {sd:.6}"),
            )
        }
        DistanceLemma::TraceDiameter => {
            // hypothesis: every pair in the union of supports overlaps
            // ≥ 1 − ε; take ε as the worst observed pair
            let union: Vec<&StateVector> = ensemble_a
                .iter()
                .map(|(_, s)| s)
                .chain(ensemble_b.iter().map(|(_, s)| s))
                .collect();
            let mut eps: f64 = 0.0;
            for i in 0..union.len() {
                for j in (i + 1)..union.len() {
                    eps = eps.max(1.0 - pair_overlap(union[i], union[j]));
                }
            }
            let bound = (1.0 - (1.0 - eps).powi(2 * t as i32)).max(0.0).sqrt();
            (
                bound,
                format!("supports-union diameter ε = {eps:.6e}; bound √(1−(1−ε)^2t)"),
            )
        }
        DistanceLemma::Angular => {
            // hypothesis: ensembles are paired pointwise with equal weights;
            // ε̃ is the worst paired overlap deficit
            if ensemble_a.len() != ensemble_b.len() {
                return Err(VerifyError::Hypothesis(
                    "angular lemma needs pointwise-paired ensembles of equal size".into(),
                ));
            }
            let mut eps: f64 = 0.0;
            for ((wa, sa), (wb, sb)) in ensemble_a.iter().zip(ensemble_b) {
                if (wa - wb).abs() > 1e-12 {
                    return Err(VerifyError::Hypothesis(
                        "angular lemma needs identical weight vectors".into(),
                    ));
                }
                eps = eps.max(1.0 - pair_overlap(sa, sb));
            }
            let bound = (2.0 * t as f64 * eps).sqrt();
            (
                bound,
                format!("worst paired overlap deficit ε̃ = {eps:.6e}; bound √(2tε̃)"),
            )
        }
    };

    Ok(LemmaReport {
        lemma_id: id.as_str().into(),
        params: pmap,
        estimate,
        stderr: 0.0,
        bound,
        verdict: upper_verdict(estimate, 0.0, bound + DISTANCE_SLACK),
        trials: 0,
        seed: String::new(),
        note: format!("{note}; exact eigendecomposition, slack {DISTANCE_SLACK:.0e}"),
    })
}

// ---------------------------------------------------------------------------
// Hybrid chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HybridStep {
    P1P2,
    P2P3,
    P3P4,
    P4P5,
    P5P6,
    P6P7,
    P7P8,
    P8P9,
    P9P10,
    P10P11,
}

impl HybridStep {
    pub const ALL: [HybridStep; 10] = [
        HybridStep::P1P2,
        HybridStep::P2P3,
        HybridStep::P3P4,
        HybridStep::P4P5,
        HybridStep::P5P6,
        HybridStep::P6P7,
        HybridStep::P7P8,
        HybridStep::P8P9,
        HybridStep::P9P10,
        HybridStep::P10P11,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HybridStep::P1P2 => "P1P2",
            HybridStep::P2P3 => "P2P3",
            HybridStep::P3P4 => "P3P4",
            HybridStep::P4P5 => "P4P5",
            HybridStep::P5P6 => "P5P6",
            HybridStep::P6P7 => "P6P7",
            HybridStep::P7P8 => "P7P8",
            HybridStep::P8P9 => "P8P9",
            HybridStep::P9P10 => "P9P10",
            HybridStep::P10P11 => "P10P11",
        }
    }

    pub fn parse(s: &str) -> Result<Self, VerifyError> {
        Self::ALL
            .iter()
            .copied()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| VerifyError::BadStep(s.to_string()))
    }

    fn tag(&self) -> u64 {
        TAG_HYBRID_BASE + Self::ALL.iter().position(|x| x == self).unwrap() as u64
    }
}

/// Exact total-variation tabulation of the bit-budgeted Gaussian sampler's
/// per-part law against the rounded-Gaussian pmf.
///
/// The sampler's effective uniform is the midpoint grid u(j) = (j+½)·2^{−53},
/// j ∈ [0, 2^53); the per-part output is round(Φ⁻¹(u(j))). Because Φ⁻¹ is
/// monotone, the number of grid points mapping into each pmf cell is a
/// difference of monotone boundary counts obtained by binary search — an
/// exact census of all 2^53 outcomes in ~10⁵ evaluations, where direct MC
/// could never resolve a total variation this small.
pub fn sampler_part_law_distance(rounding: &RoundingParams) -> Result<f64, VerifyError> {
    let m = rounding.m;
    let b = rounding.b_cut;
    let log2_k = m + 32 - b.leading_zeros(); // ≥ log2(B·2^m)
    if log2_k > SAMPLER_LAW_MAX_GRID_LOG2 {
        return Err(VerifyError::Hypothesis(format!(
            "exact sampler-law tabulation capped at m+log2(B) ≤ {SAMPLER_LAW_MAX_GRID_LOG2}, \
             got ~{log2_k}"
        )));
    }
    let eps = rounding.eps();
    let k_max = (b as u64) << m; // B = k_max·ε exactly
    const TWO53: u64 = 1u64 << 53;
    let u_of = |j: u64| -> f64 { (j as f64 + 0.5) * (1.0 / 9007199254740992.0) };

    // #{j : inv(u(j)) ≤ y} (strict=false) or < y (strict=true): binary
    // search on the monotone map j ↦ Φ⁻¹(u(j))
    let count_below = |y: f64, strict: bool| -> u64 {
        let (mut lo, mut hi) = (0u64, TWO53); // invariant: lo..hi contains the split
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let x = inv_normal_cdf(u_of(mid));
            let below = if strict { x < y } else { x <= y };
            if below {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    };

    // strict counts at −kε for k = K..0 and non-strict at +kε for k = 0..K,
    // forced monotone so cell counts telescope to exactly 2^53
    let neg: Vec<u64> = (0..=k_max)
        .into_par_iter()
        .map(|k| count_below(-((k_max - k) as f64) * eps, true))
        .collect();
    let pos: Vec<u64> = (0..=k_max)
        .into_par_iter()
        .map(|k| count_below(k as f64 * eps, false))
        .collect();
    let cummax = |v: Vec<u64>| -> Vec<u64> {
        let mut m = 0u64;
        v.into_iter()
            .map(|x| {
                m = m.max(x);
                m
            })
            .collect()
    };
    let neg = cummax(neg);
    let pos = cummax(pos);

    let mut tv = KahanSum::default();
    // negative cells −kε: [−kε, −(k−1)ε)
    for k in 1..=k_max {
        let idx_hi = (k_max - (k - 1)) as usize; // boundary −(k−1)ε
        let idx_lo = (k_max - k) as usize; // boundary −kε
        let count = neg[idx_hi] - neg[idx_lo];
        let p = rounded_pmf(-(k as f64) * eps, rounding);
        tv.add((count as f64 / TWO53 as f64 - p).abs());
    }
    // zero cell: both tails beyond ±B plus exact zeros
    {
        let count = neg[0] + (TWO53 - pos[k_max as usize]) + (pos[0] - neg[k_max as usize]);
        let p = rounded_pmf(0.0, rounding);
        tv.add((count as f64 / TWO53 as f64 - p).abs());
    }
    // positive cells +kε: ((k−1)ε, kε]
    for k in 1..=k_max {
        let count = pos[k as usize] - pos[(k - 1) as usize];
        let p = rounded_pmf(k as f64 * eps, rounding);
        tv.add((count as f64 / TWO53 as f64 - p).abs());
    }
    Ok(tv.value() / 2.0)
}

/// Checks one step of the hybrid chain at parameters (n, λ) with t copies.
pub fn hybrid_step_check(
    step: HybridStep,
    n: u32,
    lambda: u32,
    t: u32,
    trials: u64,
    seed: &Seed256,
) -> Result<HybridStepReport, VerifyError> {
    let gp = gen_params(n, lambda)?;
    let dim = gp.dim();
    let nf = dim as f64;
    let threshold = gp.norm_threshold();
    let lam = lambda as f64;
    let tag = step.tag();

    let report = |estimate: f64, stderr: f64, bound: f64, method: StepMethod, note: String| {
        HybridStepReport {
            step: step.as_str().into(),
            estimate,
            stderr,
            bound,
            method,
            verdict: upper_verdict(estimate, stderr, bound),
            note,
        }
    };

    match step {
        HybridStep::P1P2 | HybridStep::P5P6 | HybridStep::P10P11 => Ok(HybridStepReport {
            step: step.as_str().into(),
            estimate: 0.0,
            stderr: 0.0,
            bound: 0.0,
            method: StepMethod::Identity,
            verdict: Verdict::Pass,
            note: "the two processes induce identical distributions".into(),
        }),

        HybridStep::P2P3 => {
            // swap ideal rounded Gaussians for the bit-budgeted sampler:
            // N·λ complex draws per run, ≤ 2·TV_part each
            let tv_part = sampler_part_law_distance(&gp.rounding)?;
            let estimate = nf * lam * 2.0 * tv_part;
            let bound = lam * (-lam).exp2();
            Ok(report(
                estimate,
                0.0,
                bound,
                StepMethod::Exact,
                format!(
                    "exact per-part sampler-law total variation {tv_part:.3e}, \
                     times 2 parts × N·λ draws"
                ),
            ))
        }

        HybridStep::P3P4 => {
            // candidate selection fails: all scanned rounded vectors short
            let scans = if dim as u64 > lambda as u64 {
                1
            } else {
                lambda
            };
            let events = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut c = 0u64;
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let mut all_short = true;
                        for _ in 0..scans {
                            let u = draw_complex_vector(&mut rng, dim);
                            if norm_of(&round_entries(&u, &gp.rounding)) >= threshold {
                                all_short = false;
                                break;
                            }
                        }
                        if all_short {
                            c += 1;
                        }
                    }
                    c
                },
                0,
                |a, b| a + b,
            );
            let estimate = events as f64 / trials as f64;
            let stderr = binomial_stderr(estimate, trials);
            let bound = 2.0 * 0.78f64.powf(lam);
            Ok(report(
                estimate,
                stderr,
                bound,
                StepMethod::MonteCarlo,
                format!("{events} selection failures in {trials} runs over {scans} candidates"),
            ))
        }

        HybridStep::P4P5 => {
            // some of the t amplified rejection-sampling executions fails;
            // the inner failure probability (1−p)^k is integrated exactly
            let acc = par_chunked_fold(
                trials,
                MC_CHUNK,
                |range| {
                    let mut sum = KahanSum::default();
                    let mut sum_sq = KahanSum::default();
                    for i in range {
                        let mut rng = RandomBitstream::substream(seed, i, tag);
                        let scans = if dim as u64 > lambda as u64 {
                            1
                        } else {
                            lambda
                        };
                        let mut selected = None;
                        for _ in 0..scans {
                            let u = draw_complex_vector(&mut rng, dim);
                            let r = round_entries(&u, &gp.rounding);
                            if norm_of(&r) >= threshold {
                                selected = Some(r);
                                break;
                            }
                        }
                        let contribution = match selected {
                            None => 0.0, // no BVS runs happen
                            Some(r) => {
                                let v = ComplexVector::new(r).expect("nonempty");
                                let p = qrs_success_prob(&v, gp.m_bound).expect("cut-bounded");
                                let q = (gp.k_rounds as f64 * f64::ln_1p(-p)).exp();
                                -f64::exp_m1(t as f64 * f64::ln_1p(-q))
                            }
                        };
                        sum.add(contribution);
                        sum_sq.add(contribution * contribution);
                    }
                    (sum, sum_sq)
                },
                (KahanSum::default(), KahanSum::default()),
                |a, b| {
                    let mut s = a.0;
                    s.add(b.0.value());
                    let mut sq = a.1;
                    sq.add(b.1.value());
                    (s, sq)
                },
            );
            let estimate = acc.0.value() / trials as f64;
            let var = (acc.1.value() / trials as f64 - estimate * estimate).max(0.0);
            let stderr = (var / trials as f64).sqrt();
            let bound = t as f64 * (-lam).exp();
            Ok(report(
                estimate,
                stderr,
                bound,
                StepMethod::MonteCarlo,
                "per-candidate probability that any of t amplified executions fails, \
                 inner Bernoulli layer integrated exactly"
                    .into(),
            ))
        }

        HybridStep::P6P7 | HybridStep::P9P10 => {
            // conditional coordinate-bound events; exact numerator over
            // measured conditioning probability
            let b = gp.b_cut();
            let exact = coord_bound_probability_exact(n, b as f64);
            let rounded_cond = step == HybridStep::P6P7;
            let rounding = gp.rounding;
            let (estimate, stderr, hits) = conditional_upper_estimate(
                exact,
                trials,
                seed,
                tag,
                dim,
                move |u: &[Complex64]| {
                    if rounded_cond {
                        norm_of(&round_entries(u, &rounding)) >= threshold
                    } else {
                        norm_of(u) >= threshold
                    }
                },
            )?;
            let bound = 4.0 * (-lam).exp();
            Ok(report(
                estimate,
                stderr,
                bound,
                StepMethod::MonteCarlo,
                format!("conservative P[A]/P̂[C] with exact numerator; {hits} condition hits"),
            ))
        }

        HybridStep::P7P8 => {
            // continuous vs rounded normalized states: exact trace distance
            // on a seeded paired support of conditioned vectors
            let support = 64usize;
            let mut a = Vec::with_capacity(support);
            let mut b = Vec::with_capacity(support);
            let mut worst_deficit: f64 = 0.0;
            for j in 0..support {
                let mut rng = RandomBitstream::substream(seed, j as u64, tag);
                let (u, r) = loop {
                    let u = draw_complex_vector(&mut rng, dim);
                    let r = round_entries(&u, &gp.rounding);
                    if norm_of(&r) >= threshold {
                        break (u, r);
                    }
                };
                let ua = normalize(&ComplexVector::new(u)?)?;
                let rb = normalize(&ComplexVector::new(r)?)?;
                worst_deficit = worst_deficit.max(1.0 - pair_overlap(&ua, &rb));
                let w = 1.0 / support as f64;
                a.push((w, ua));
                b.push((w, rb));
            }
            let rho_a = ensemble_t_tensor(&a, t)?;
            let rho_b = ensemble_t_tensor(&b, t)?;
            let estimate = trace_distance_mixed(&rho_a, &rho_b)?;
            let eps = gp.eps();
            let hypothesis_eps = 36.0 * eps * eps;
            let bound = 6.0 * std::f64::consts::SQRT_2 * (t as f64).sqrt() / nf * (-lam).exp2();
            Ok(report(
                estimate,
                0.0,
                bound + DISTANCE_SLACK,
                StepMethod::Exact,
                format!(
                    "exact TD on a {support}-point paired support; worst overlap deficit \
                     {worst_deficit:.3e} vs angular hypothesis 36ε² = {hypothesis_eps:.3e}"
                ),
            ))
        }

        HybridStep::P8P9 => {
            // the conditioned thin-layer event
            let (events, hits) = not_in_layer_counts(n, lambda, trials, seed, tag);
            if hits < MIN_CONDITIONED_HITS {
                return Err(VerifyError::InsufficientHits {
                    hits,
                    needed: MIN_CONDITIONED_HITS,
                });
            }
            let estimate = events as f64 / hits as f64;
            let stderr = binomial_stderr(estimate, hits);
            let bound = 4.0 * layer_final_bound(n, lambda);
            Ok(report(
                estimate,
                stderr,
                bound,
                StepMethod::MonteCarlo,
                format!("conditioned resampling: {events} events in {hits} hits"),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// End-to-end theorem
// ---------------------------------------------------------------------------

/// Estimates the trace distance between the generator's t-copy output
/// density matrix and the exact Haar t-copy moment, against theorem_bound.
///
/// Each run draws a fresh oracle spec (one f̃ per t-batch), selects its
/// candidate once, then performs t independent amplified rejection-sampling
/// executions; failures contribute the all-zeros basis state. The error bar
/// is the Frobenius norm of the entrywise standard-error matrix — a
/// conservative cap on how far MC noise can move the trace distance.
pub fn e2e_trace_distance(
    n: u32,
    lambda: u32,
    t: u32,
    runs: u64,
    seed: &Seed256,
) -> Result<LemmaReport, VerifyError> {
    use crate::generator::ars_generate;
    if runs < MIN_E2E_RUNS {
        return Err(VerifyError::TooFewRuns { runs });
    }
    if t == 0 {
        return Err(VerifyError::Hypothesis("t ≥ 1 required".into()));
    }
    let gp = gen_params(n, lambda)?;
    let dim = gp.dim();
    let d = (dim as u128).pow(t);
    if d > DIM_CAP as u128 {
        return Err(VerifyError::DimensionCap(d));
    }
    let d = d as usize;

    // per-chunk accumulator: entrywise sums of the t-tensor projector and
    // of its squared magnitudes (upper triangle including diagonal)
    struct Acc {
        sum: Vec<Complex64>,
        sum_sq: Vec<f64>,
    }
    let zero = || Acc {
        sum: vec![Complex64::new(0.0, 0.0); d * d],
        sum_sq: vec![0.0; d * d],
    };

    let acc = par_chunked_fold(
        runs,
        MC_CHUNK.min(1 << 12),
        |range| {
            let mut acc = zero();
            let mut w = vec![Complex64::new(0.0, 0.0); d];
            for run in range {
                let spec_seed = derive_seed(seed, run, TAG_E2E_SPEC);
                let spec = gp.oracle_spec(spec_seed);
                let mut bvs_rng = RandomBitstream::substream(seed, run, TAG_E2E_BVS);
                // t copies from the same oracle function
                let mut states = Vec::with_capacity(t as usize);
                for _ in 0..t {
                    let out = ars_generate(&gp, &spec, &mut bvs_rng).expect("validated params");
                    states.push(out.state);
                }
                // w = ψ₁ ⊗ … ⊗ ψ_t
                w[..1].copy_from_slice(&[Complex64::new(1.0, 0.0)]);
                let mut cur_len = 1usize;
                for s in &states {
                    let amps = s.amplitudes();
                    let mut next = vec![Complex64::new(0.0, 0.0); cur_len * amps.len()];
                    for (i, wi) in w[..cur_len].iter().enumerate() {
                        for (j, aj) in amps.iter().enumerate() {
                            next[i * amps.len() + j] = wi * aj;
                        }
                    }
                    cur_len *= amps.len();
                    w[..cur_len].copy_from_slice(&next);
                }
                for i in 0..d {
                    for j in i..d {
                        let z = w[i] * w[j].conj();
                        acc.sum[i * d + j] += z;
                        acc.sum_sq[i * d + j] += z.norm_sqr();
                    }
                }
            }
            acc
        },
        zero(),
        |mut a, b| {
            for (x, y) in a.sum.iter_mut().zip(&b.sum) {
                *x += y;
            }
            for (x, y) in a.sum_sq.iter_mut().zip(&b.sum_sq) {
                *x += y;
            }
            a
        },
    );

    let rf = runs as f64;
    let mut mat = DMatrix::<Complex64>::zeros(d, d);
    let mut frob_sq = KahanSum::default();
    for i in 0..d {
        for j in i..d {
            let mean = acc.sum[i * d + j] / rf;
            mat[(i, j)] = mean;
            if j > i {
                mat[(j, i)] = mean.conj();
            }
            let var = (acc.sum_sq[i * d + j] / rf - mean.norm_sqr()).max(0.0);
            let weight = if j > i { 2.0 } else { 1.0 };
            frob_sq.add(weight * var / rf);
        }
    }
    let stderr = frob_sq.value().sqrt();
    let rho_hat = DensityMatrix::new(mat, t)?;
    let rho_haar = haar_moment(n, t)?;
    let estimate = trace_distance_mixed(&rho_hat, &rho_haar)?;
    let bound = theorem_bound(t, lambda);

    let mut pmap = BTreeMap::new();
    pmap.insert("n".into(), n as f64);
    pmap.insert("lambda".into(), lambda as f64);
    pmap.insert("t".into(), t as f64);
    Ok(LemmaReport {
        lemma_id: "e2e".into(),
        params: pmap,
        estimate,
        stderr,
        bound,
        verdict: upper_verdict(estimate, stderr, bound),
        trials: runs,
        seed: seed_to_hex(seed),
        note: format!(
            "trace distance of the {runs}-run t-copy average against the exact Haar moment; \
             error bar = Frobenius norm of the entrywise standard errors"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SEED: Seed256 = [91, 92, 93, 94];

    #[test]
    fn theorem_bound_matches_hand_arithmetic() {
        assert_relative_eq!(theorem_bound(1, 20), 0.023083, max_relative = 1e-3);
        assert_relative_eq!(theorem_bound(1, 12), 0.14193, max_relative = 1e-3);
        // monotone decreasing in lambda
        let mut prev = f64::INFINITY;
        for lambda in 5..=64 {
            let b = theorem_bound(1, lambda);
            assert!(b < prev, "not decreasing at lambda={lambda}");
            prev = b;
        }
    }

    #[test]
    fn coordinate_bound_formula_matches_frozen_value_and_limits() {
        // 1 − (1 − e^{−12.5})² with B = 5 at (n=1, λ=5)
        assert_eq!(tail_cut(1, 5), 5);
        assert_relative_eq!(
            coord_bound_probability_exact(1, 5.0),
            7.4534e-6,
            max_relative = 1e-3
        );
        assert!(coord_bound_probability_exact(1, 50.0) < 1e-300);
        assert!(coord_bound_probability_exact(3, 5.0) < 8.0 * 3.73e-6);
    }

    #[test]
    fn coordinate_bound_formula_agrees_with_monte_carlo() {
        // 4σ agreement at 10⁷ samples, (n=1, B=2) where the event is common
        let trials = 10_000_000u64;
        let b = 2.0;
        let events = par_chunked_fold(
            trials,
            MC_CHUNK,
            |range| {
                let mut c = 0u64;
                for i in range {
                    let mut rng = RandomBitstream::substream(&SEED, i, 0xcb);
                    let u = draw_complex_vector(&mut rng, 2);
                    if max_abs_of(&u) > b {
                        c += 1;
                    }
                }
                c
            },
            0,
            |a, b| a + b,
        );
        let p_hat = events as f64 / trials as f64;
        let exact = coord_bound_probability_exact(1, b);
        let sigma = binomial_stderr(p_hat, trials);
        assert!(
            (p_hat - exact).abs() <= 4.0 * sigma,
            "p̂ = {p_hat}, exact = {exact}, σ = {sigma}"
        );
    }

    #[test]
    fn layer_mass_matches_frozen_value_and_monte_carlo() {
        // reference value 0.00563 is quoted to limited precision; the
        // defining χ²₄ difference gives 0.0056202, and the Monte Carlo
        // cross-check below is the real anchor
        let exact = layer_probability_exact(1, 4).unwrap();
        assert_relative_eq!(exact, 0.005632, max_relative = 3e-3);
        assert!(layer_probability_exact(1, 40).unwrap() < 1e-10);
        assert!(layer_probability_exact(1, 3).is_err());

        let trials = 10_000_000u64;
        let events = par_chunked_fold(
            trials,
            MC_CHUNK,
            |range| {
                let mut c = 0u64;
                for i in range {
                    let mut rng = RandomBitstream::substream(&SEED, i, 0x1a);
                    let u = draw_complex_vector(&mut rng, 2);
                    let norm = norm_of(&u);
                    let eps = 2f64.powi(-5);
                    let lo = (0.5 - eps) * 2f64.sqrt();
                    if norm >= lo && norm < 2f64.sqrt() / 2.0 {
                        c += 1;
                    }
                }
                c
            },
            0,
            |a, b| a + b,
        );
        let p_hat = events as f64 / trials as f64;
        let sigma = binomial_stderr(p_hat, trials);
        assert!(
            (p_hat - exact).abs() <= 4.0 * sigma,
            "p̂ = {p_hat}, exact = {exact}, σ = {sigma}"
        );
    }

    #[test]
    fn layer_final_bound_is_broken_but_intermediate_holds() {
        // the documented discrepancy: exact mass exceeds the stated final
        // bound at n=1, λ=4 (0.005632 vs 1/576), yet stays below the
        // proof's density-times-volume bound
        let exact = layer_probability_exact(1, 4).unwrap();
        let final_bound = layer_final_bound(1, 4);
        assert_relative_eq!(final_bound, 1.0 / 576.0, max_relative = 1e-12);
        assert!(exact > final_bound);
        let inter = layer_intermediate_bound(1, 4).unwrap();
        assert!(exact <= inter, "exact {exact} vs intermediate {inter}");

        // intermediate bound must hold across a broad grid
        for n in 1..=5u32 {
            for lambda in 4..=20u32 {
                let e = layer_probability_exact(n, lambda).unwrap();
                let i = layer_intermediate_bound(n, lambda).unwrap();
                assert!(e <= i, "intermediate bound fails at n={n}, λ={lambda}");
            }
        }
    }

    #[test]
    fn verify_lemma_reports_are_reproducible() {
        let p = LemmaParams::new(1, 8);
        let r1 = verify_lemma(LemmaId::Balanced, &p, 20_000, &SEED).unwrap();
        let r2 = verify_lemma(LemmaId::Balanced, &p, 20_000, &SEED).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn gaussian_long_lemma_passes_at_reference_parameters() {
        let p = LemmaParams::new(1, 8); // defaults: m = 32, eps = 7/8
        let r = verify_lemma(LemmaId::GaussianLong, &p, 100_000, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.estimate > r.bound);
    }

    #[test]
    fn norm_and_rounding_corollaries_pass_at_small_parameters() {
        for id in [
            LemmaId::Balanced,
            LemmaId::RoundedLong,
            LemmaId::CondCoord,
            LemmaId::Cond2Coord,
        ] {
            let p = LemmaParams::new(1, 8);
            let r = verify_lemma(id, &p, 100_000, &SEED).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{id:?}: {r:?}");
        }
    }

    #[test]
    fn coord_bounded_lemma_is_exact_and_passes() {
        let r = verify_lemma(LemmaId::CoordBounded, &LemmaParams::new(2, 10), 0, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn layer_lemma_report_is_informational_with_diagnostic_note() {
        let r = verify_lemma(LemmaId::Layer, &LemmaParams::new(1, 4), 0, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Informational);
        assert!(r.note.contains("EXCEEDED"), "note: {}", r.note);
    }

    #[test]
    fn thin_layer_corollary_passes_at_dimension_two() {
        let r = verify_lemma(
            LemmaId::NotInLayer,
            &LemmaParams::new(1, 4),
            1_000_000,
            &SEED,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.estimate > 0.0, "event should be observable at λ=4");
    }

    #[test]
    fn thin_layer_corollary_fails_honestly_at_dimension_four() {
        // the stated bound 4·2^{−λ}·6^{−N} is genuinely exceeded at N = 4
        let r = verify_lemma(
            LemmaId::NotInLayer,
            &LemmaParams::new(2, 4),
            3_000_000,
            &SEED,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{r:?}");
        assert!(r.note.contains("traces to the source bound"), "{}", r.note);
        // diagnostic: the exact layer mass itself exceeds its stated bound
        assert!(layer_probability_exact(2, 4).unwrap() > layer_final_bound(2, 4));
    }

    #[test]
    fn long_vectors_conclusion_holds_on_every_sampled_pair() {
        let mut p = LemmaParams::new(3, 8);
        p.eps = Some(0.01);
        let r = verify_lemma(LemmaId::LongVectors, &p, 2_000, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.estimate >= 1.0 - 18.0 * 0.01 * 0.01);
        // hypothesis guard
        p.eps = Some(0.3);
        assert!(verify_lemma(LemmaId::LongVectors, &p, 10, &SEED).is_err());
    }

    #[test]
    fn amplified_rejection_claim_passes() {
        let r = verify_lemma(LemmaId::BvsClaim, &LemmaParams::new(1, 8), 10_000, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.note.contains("floor"));
    }

    #[test]
    fn distance_lemmas_on_constructed_ensembles() {
        // two fixed non-orthogonal states on one qubit
        let s1 = StateVector::basis(1, 0);
        let s2 = normalize(
            &ComplexVector::new(vec![
                Complex64::new(0.995, 0.0),
                Complex64::new((1.0f64 - 0.995 * 0.995).sqrt(), 0.0),
            ])
            .unwrap(),
        )
        .unwrap();

        // sd_td: same support, different weights → SD = 0.3
        let a = vec![(0.7, s1.clone()), (0.3, s2.clone())];
        let b = vec![(0.4, s1.clone()), (0.6, s2.clone())];
        let r = verify_distance_lemma(DistanceLemma::SdTd, &a, &b, 2).unwrap();
        assert_relative_eq!(r.bound, 0.3, max_relative = 1e-12);
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");

        // identical ensembles: TD = 0 ≤ SD = 0
        let r0 = verify_distance_lemma(DistanceLemma::SdTd, &a, &a, 3).unwrap();
        assert!(r0.estimate <= DISTANCE_SLACK);
        assert_eq!(r0.verdict, Verdict::Pass);

        // trace_diameter on mixtures: strict margin
        let r = verify_distance_lemma(DistanceLemma::TraceDiameter, &a, &b, 3).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.estimate < r.bound);

        // angular on paired ensembles with equal weights
        let pa = vec![(0.5, s1.clone()), (0.5, s2.clone())];
        let pb = vec![(0.5, s2.clone()), (0.5, s1.clone())];
        let r = verify_distance_lemma(DistanceLemma::Angular, &pa, &pb, 2).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn trace_diameter_is_tight_on_singleton_supports() {
        // two-point union at overlap 0.99, t = 3: TD = √(1−0.99⁶) exactly
        let s1 = StateVector::basis(1, 0);
        let s2 = normalize(
            &ComplexVector::new(vec![
                Complex64::new(0.99, 0.0),
                Complex64::new((1.0f64 - 0.99 * 0.99).sqrt(), 0.0),
            ])
            .unwrap(),
        )
        .unwrap();
        let a = vec![(1.0, s1)];
        let b = vec![(1.0, s2)];
        let r = verify_distance_lemma(DistanceLemma::TraceDiameter, &a, &b, 3).unwrap();
        let expect = (1.0f64 - 0.99f64.powi(6)).sqrt();
        assert_relative_eq!(r.estimate, expect, max_relative = 1e-9);
        assert_relative_eq!(r.bound, expect, max_relative = 1e-9);
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "equality case must not flip on roundoff"
        );
    }

    #[test]
    fn identity_hybrid_steps_report_zero() {
        for step in [HybridStep::P1P2, HybridStep::P5P6, HybridStep::P10P11] {
            let r = hybrid_step_check(step, 1, 8, 1, 0, &SEED).unwrap();
            assert_eq!(r.estimate, 0.0);
            assert_eq!(r.bound, 0.0);
            assert_eq!(r.method, StepMethod::Identity);
            assert_eq!(r.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn sampler_law_tabulation_is_exact_and_tiny() {
        // (n=1, λ=5): the full 2^53-point census against the pmf
        let gp = gen_params(1, 5).unwrap();
        let tv = sampler_part_law_distance(&gp.rounding).unwrap();
        assert!(tv < 1e-6, "per-part TV {tv} unexpectedly large");
        assert!(tv > 0.0, "discretization cannot be literally zero");
        // cap guard
        let big = RoundingParams::new(40, 13).unwrap();
        assert!(sampler_part_law_distance(&big).is_err());
    }

    #[test]
    fn sampler_swap_step_passes_with_huge_margin() {
        let r = hybrid_step_check(HybridStep::P2P3, 1, 5, 1, 0, &SEED).unwrap();
        assert_eq!(r.method, StepMethod::Exact);
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.estimate < r.bound / 100.0);
    }

    #[test]
    fn monte_carlo_hybrid_steps_pass_at_reference_parameters() {
        for (step, trials) in [
            (HybridStep::P3P4, 200_000u64),
            (HybridStep::P4P5, 100_000),
            (HybridStep::P6P7, 100_000),
            (HybridStep::P9P10, 100_000),
        ] {
            let r = hybrid_step_check(step, 1, 8, 2, trials, &SEED).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{step:?}: {r:?}");
        }
    }

    #[test]
    fn rounding_distance_step_passes_via_exact_tensors() {
        let r = hybrid_step_check(HybridStep::P7P8, 1, 8, 2, 0, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.note.contains("angular hypothesis"));
    }

    #[test]
    fn conditioned_layer_step_passes_at_dimension_two() {
        let r = hybrid_step_check(HybridStep::P8P9, 1, 8, 1, 2_000_000, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn e2e_estimator_stays_within_the_theorem_bound() {
        let r = e2e_trace_distance(1, 8, 1, 100_000, &SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(
            r.estimate < 0.05,
            "estimate {} should be noise-scale",
            r.estimate
        );
        assert!(r.stderr > 0.0);
        // guard rails
        assert!(e2e_trace_distance(1, 8, 1, 10, &SEED).is_err());
        assert!(e2e_trace_distance(12, 8, 2, 100_000, &SEED).is_err());
    }

    #[test]
    fn e2e_reports_are_bit_reproducible() {
        let r1 = e2e_trace_distance(1, 8, 1, 100_000, &SEED).unwrap();
        let r2 = e2e_trace_distance(1, 8, 1, 100_000, &SEED).unwrap();
        assert_eq!(r1.estimate.to_bits(), r2.estimate.to_bits());
        assert_eq!(r1.stderr.to_bits(), r2.stderr.to_bits());
    }

    #[test]
    fn lemma_and_step_ids_round_trip() {
        for id in LemmaId::ALL {
            assert_eq!(LemmaId::parse(id.as_str()).unwrap(), id);
        }
        for step in HybridStep::ALL {
            assert_eq!(HybridStep::parse(step.as_str()).unwrap(), step);
        }
        assert!(LemmaId::parse("nope").is_err());
        assert!(HybridStep::parse("P99").is_err());
    }
}
