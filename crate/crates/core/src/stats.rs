//! Statistical test utilities for the verification suites: chi-square
//! goodness-of-fit, two-sample Kolmogorov–Smirnov, binomial error bars, and
//! a deterministic chunked parallel reducer whose result is independent of
//! the worker count.

use rayon::prelude::*;

/// Standard error of a binomial frequency estimate.
pub fn binomial_stderr(p_hat: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p_hat * (1.0 - p_hat) / trials as f64).sqrt()
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    /// Cells actually used after merging low-expectation cells.
    pub cells: usize,
}

/// Pearson chi-square test of observed counts against expected cell
/// probabilities.
///
/// Adjacent cells are merged until each carries an expected count of at
/// least `min_expected` (the usual ≥ 5 rule); any tail remainder folds into
/// the last cell. The p-value is the upper tail of the chi-square
/// distribution with (cells − 1) degrees of freedom.
pub fn chi_square_gof(
    observed: &[u64],
    expected_probs: &[f64],
    total: u64,
    min_expected: f64,
) -> GofResult {
    assert_eq!(observed.len(), expected_probs.len());
    let total_f = total as f64;
    let mut merged: Vec<(f64, f64)> = Vec::new(); // (observed, expected) counts
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        acc_obs += o as f64;
        acc_exp += p * total_f;
        if acc_exp >= min_expected {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            merged.push((acc_obs, acc_exp));
        }
    }
    if merged.len() < 2 {
        return GofResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            cells: merged.len(),
        };
    }
    let statistic: f64 = merged
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    let dof = (merged.len() - 1) as u64;
    let p_value = if statistic > 0.0 {
        statrs::function::gamma::gamma_ur(dof as f64 / 2.0, statistic / 2.0)
    } else {
        1.0
    };
    GofResult {
        statistic,
        dof,
        p_value,
        cells: merged.len(),
    }
}

/// Survival function of the Kolmogorov distribution:
/// Q(x) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2 j² x²}.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..200 {
        let term = (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-14 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test. Sorts both samples in place and
/// returns (D, asymptotic p-value). Tied values are advanced on both sides
/// before the gap is measured, so heavily discrete samples are handled
/// conservatively.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(gap);
    }
    let ne = (n as f64 * m as f64 / (n + m) as f64).sqrt();
    let p = kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d);
    (d, p)
}

/// Compensated (Kahan) accumulator for long scalar sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Deterministic parallel fold over trial indices `0..trials`.
///
/// The index range is split into fixed-size chunks; chunks are mapped in
/// parallel, collected in chunk order, and folded sequentially. Because the
/// chunk boundaries depend only on `chunk` (never on the worker count), the
/// result is bit-identical for every thread-pool size, including 1.
pub fn par_chunked_fold<A, F, C>(trials: u64, chunk: u64, per_chunk: F, zero: A, combine: C) -> A
where
    A: Send,
    F: Fn(std::ops::Range<u64>) -> A + Sync,
    C: Fn(A, A) -> A,
{
    assert!(chunk > 0);
    let n_chunks = trials.div_ceil(chunk);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(trials);
            per_chunk(lo..hi)
        })
        .collect();
    partials.into_iter().fold(zero, combine)
}

/// Default chunk size for Monte Carlo loops. Fixed so that estimates are
/// reproducible across thread counts by construction.
pub const MC_CHUNK: u64 = 1 << 14;
