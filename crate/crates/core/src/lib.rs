//! Classical simulator and numerical verifier for a scalable random-state
//! generator built from rounded-Gaussian oracle sampling and rejection
//! sampling.
//!
//! The library is organized around the generation pipeline and the checks
//! that sit on top of it:
//!
//! - [`gaussian`] — deterministic counter-based bitstreams, the rounding
//!   function on the `(ε, B)` grid, the exact rounded-Gaussian pmf, the
//!   bit-budgeted sampler `gsample`, and chi-square CDF utilities.
//! - [`quantum`] — complex vectors, state vectors, density matrices, trace
//!   distance, tensor-power ensembles, Haar sampling and the exact Haar
//!   t-copy moment.
//! - [`oracles`] — the seeded random-function emulation with its packet
//!   decomposition, m-wise independent polynomial families over binary
//!   fields, and a toy keyed PRF.
//! - [`rejection`] — the rejection-sampling state generator (success
//!   probability `‖v‖²/(M²N)`) and its amplified variant.
//! - [`generator`] — the full `Gen` pipeline with its two branches, plus the
//!   t-design and PRF-keyed wrappers.
//! - [`verify`] — exact formulas and Monte Carlo estimators for every
//!   concentration lemma, distance lemma, hybrid step, and the end-to-end
//!   trace-distance bound.
//! - [`stats`] — goodness-of-fit and two-sample tests, and a deterministic
//!   chunked parallel reducer (results independent of thread count).
//!
//! Everything is a pure function of explicit seeds; re-running any estimator
//! with the same seed reproduces its output bit-for-bit.

pub mod gaussian;
pub mod generator;
pub mod oracles;
pub mod quantum;
pub mod rejection;
pub mod stats;
pub mod verify;
