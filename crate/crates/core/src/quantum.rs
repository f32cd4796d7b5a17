//! Complex-vector and density-matrix arithmetic: normalization, inner
//! products, trace distance (pure and mixed), tensor-power ensembles, Haar
//! sampling, and the exact Haar t-copy moment via the symmetric-subspace
//! projector.

use crate::gaussian::RandomBitstream;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Hard cap on density-matrix dimension N^t (so n·t ≤ 12 qubits total).
pub const DIM_CAP: usize = 4096;

/// Unit-norm tolerance for state vectors.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Entrywise Hermitian-symmetry tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Trace-one tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-9;
/// Eigenvalue nonnegativity tolerance for density matrices.
pub const EIGENVALUE_TOL: f64 = 1e-9;
/// Weight-sum tolerance for ensembles.
pub const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("entries must be finite")]
    NonFinite,
    #[error("dimension {0} is not a power of two ≥ 2")]
    BadDimension(usize),
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("vector norm {0} is not 1 within tolerance")]
    NotUnit(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not Hermitian within tolerance (worst deviation {0})")]
    NotHermitian(f64),
    #[error("trace {0} is not 1 within tolerance")]
    BadTrace(f64),
    #[error("matrix has eigenvalue {0} below the PSD tolerance")]
    NotPositive(f64),
    #[error("ensemble weights must be nonnegative and sum to 1 (sum {0})")]
    BadWeights(f64),
    #[error("dimension N^t = {0} exceeds the cap {DIM_CAP}")]
    DimensionCap(u128),
    #[error("eigenvalue computation did not converge")]
    EigenFailure,
    #[error("copy count must be ≥ 1")]
    BadCopies,
}

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

/// A (not necessarily normalized) vector of N = 2ⁿ complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    entries: Vec<Complex64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self, QuantumError> {
        let dim = entries.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(QuantumError::BadDimension(dim));
        }
        if entries
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(QuantumError::NonFinite);
        }
        Ok(ComplexVector { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn qubits(&self) -> u32 {
        self.entries.len().trailing_zeros()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// A unit vector (norm 1 within [`UNIT_NORM_TOL`]).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    v: ComplexVector,
}

impl StateVector {
    pub fn new(v: ComplexVector) -> Result<Self, QuantumError> {
        let norm = v.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(QuantumError::NotUnit(norm));
        }
        Ok(StateVector { v })
    }

    /// Computational basis state |index⟩ on `qubits` qubits.
    pub fn basis(qubits: u32, index: usize) -> Self {
        let dim = 1usize << qubits;
        assert!(index < dim);
        let mut entries = vec![Complex64::new(0.0, 0.0); dim];
        entries[index] = Complex64::new(1.0, 0.0);
        StateVector {
            v: ComplexVector { entries },
        }
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.v.entries()
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.v
    }
}

/// ⟨u|v⟩ = Σₓ conj(uₓ)·vₓ.
pub fn inner_product(u: &ComplexVector, v: &ComplexVector) -> Result<Complex64, QuantumError> {
    if u.dim() != v.dim() {
        return Err(QuantumError::DimensionMismatch(u.dim(), v.dim()));
    }
    Ok(u.entries
        .iter()
        .zip(&v.entries)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// v̂ := v/‖v‖.
pub fn normalize(v: &ComplexVector) -> Result<StateVector, QuantumError> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(QuantumError::ZeroVector);
    }
    let entries = v.entries.iter().map(|z| z / norm).collect();
    Ok(StateVector {
        v: ComplexVector { entries },
    })
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

/// Hermitian, PSD, trace-1 matrix over (ℂ^N)^{⊗t}; all three properties are
/// checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<Complex64>,
    copies: u32,
}

impl DensityMatrix {
    pub fn new(mat: DMatrix<Complex64>, copies: u32) -> Result<Self, QuantumError> {
        if copies == 0 {
            return Err(QuantumError::BadCopies);
        }
        let d = mat.nrows();
        if d != mat.ncols() || d == 0 || d > DIM_CAP {
            return Err(QuantumError::DimensionCap(d as u128));
        }
        // NaN would slip through the tolerance comparisons below
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let dev = (mat[(i, j)] - mat[(j, i)].conj()).norm();
                worst = worst.max(dev);
            }
        }
        if worst > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(worst));
        }
        let trace: Complex64 = (0..d).map(|i| mat[(i, i)]).sum();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(QuantumError::BadTrace(trace.re));
        }
        let min_eig = hermitian_eigenvalues(&mat)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -EIGENVALUE_TOL {
            return Err(QuantumError::NotPositive(min_eig));
        }
        Ok(DensityMatrix { mat, copies })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn copies(&self) -> u32 {
        self.copies
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }
}

/// Real eigenvalues of a Hermitian matrix, via the dense symmetric
/// eigensolver (the Hermitian part is what the decomposition acts on).
fn hermitian_eigenvalues(mat: &DMatrix<Complex64>) -> Vec<f64> {
    // Fast path: the complex Hermitian eigensolver. It can fail to converge
    // on some structured inputs, in which case it yields NaN entries.
    let eigs: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(mat.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    if eigs.iter().all(|e| e.is_finite()) {
        return eigs;
    }
    // Fallback: cyclic Jacobi, which converges unconditionally on Hermitian
    // input (the QR-based solver can diverge on heavily rank-deficient
    // structured matrices). Only reached when the fast path yields NaN.
    jacobi_hermitian_eigenvalues(mat)
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations: each sweep
/// zeroes every off-diagonal pair through a phase twist plus a real Givens
/// rotation, and the off-diagonal mass decreases monotonically until it is
/// negligible against the Frobenius norm.
fn jacobi_hermitian_eigenvalues(mat: &DMatrix<Complex64>) -> Vec<f64> {
    let d = mat.nrows();
    let mut a = mat.clone();
    let frob: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; d];
    }
    let tol = 1e-15 * frob;
    let off = |a: &DMatrix<Complex64>| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                s += a[(i, j)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };
    for _sweep in 0..60 {
        if off(&a) <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let gamma = a[(p, q)];
                let g = gamma.norm();
                if g <= 1e-300 {
                    continue;
                }
                // phase twist making the (p,q) entry real, then the classic
                // symmetric Schur rotation that zeroes it
                let phase = gamma / Complex64::new(g, 0.0);
                let alpha = a[(p, p)].re;
                let beta = a[(q, q)].re;
                let tau = (beta - alpha) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // column p of the combined unitary is (c·phase, −s)ᵀ on the
                // (p,q) block; column q is (s·phase, c)ᵀ
                let up = phase * c;
                let uq = phase * s;
                for k in 0..d {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = akp * up - akq * s;
                    let new_kq = akp * uq + akq * c;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp.conj();
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq.conj();
                }
                let app = c * c * alpha - 2.0 * s * c * g + s * s * beta;
                let aqq = s * s * alpha + 2.0 * s * c * g + c * c * beta;
                a[(p, p)] = Complex64::new(app, 0.0);
                a[(q, q)] = Complex64::new(aqq, 0.0);
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    debug_assert!(off(&a) <= 1e-10 * frob, "Jacobi sweep failed to converge");
    (0..d).map(|i| a[(i, i)].re).collect()
}

/// Trace distance of pure states: √(1 − |⟨ψ|φ⟩|²).
pub fn trace_distance_pure(psi: &StateVector, phi: &StateVector) -> Result<f64, QuantumError> {
    let overlap = inner_product(psi.as_vector(), phi.as_vector())?.norm();
    Ok((1.0 - (overlap * overlap).min(1.0)).max(0.0).sqrt())
}

/// Trace distance of density matrices: ½ Σ |eigenvalues of ρ₀ − ρ₁|.
pub fn trace_distance_mixed(
    rho0: &DensityMatrix,
    rho1: &DensityMatrix,
) -> Result<f64, QuantumError> {
    if rho0.dim() != rho1.dim() {
        return Err(QuantumError::DimensionMismatch(rho0.dim(), rho1.dim()));
    }
    let diff = &rho0.mat - &rho1.mat;
    let eigs = hermitian_eigenvalues(&diff);
    if eigs.iter().any(|e| !e.is_finite()) {
        return Err(QuantumError::EigenFailure);
    }
    let half_l1: f64 = eigs.iter().map(|&e| e.abs()).sum::<f64>() / 2.0;
    Ok(half_l1.min(1.0))
}

/// t-fold tensor power of a state vector, as a dense column.
fn tensor_power(state: &StateVector, t: u32) -> DVector<Complex64> {
    let base = DVector::from_column_slice(state.amplitudes());
    let mut out = base.clone();
    for _ in 1..t {
        out = out.kronecker(&base);
    }
    out
}

fn checked_power_dim(dim: usize, t: u32) -> Result<usize, QuantumError> {
    let d = (dim as u128)
        .checked_pow(t)
        .ok_or(QuantumError::DimensionCap(u128::MAX))?;
    if d > DIM_CAP as u128 {
        return Err(QuantumError::DimensionCap(d));
    }
    Ok(d as usize)
}

/// Σᵢ wᵢ (|ψᵢ⟩⟨ψᵢ|)^{⊗t} for a weighted ensemble of states.
pub fn ensemble_t_tensor(
    samples: &[(f64, StateVector)],
    t: u32,
) -> Result<DensityMatrix, QuantumError> {
    if t == 0 {
        return Err(QuantumError::BadCopies);
    }
    if samples.is_empty() {
        return Err(QuantumError::BadWeights(0.0));
    }
    let dim = samples[0].1.dim();
    let weight_sum: f64 = samples.iter().map(|(w, _)| *w).sum();
    if samples.iter().any(|(w, _)| *w < 0.0) || (weight_sum - 1.0).abs() > WEIGHT_TOL {
        return Err(QuantumError::BadWeights(weight_sum));
    }
    let d = checked_power_dim(dim, t)?;
    let mut mat = DMatrix::<Complex64>::zeros(d, d);
    for (w, state) in samples {
        if state.dim() != dim {
            return Err(QuantumError::DimensionMismatch(dim, state.dim()));
        }
        let v = tensor_power(state, t);
        let scaled = &v * Complex64::new(*w, 0.0);
        mat += scaled * v.adjoint();
    }
    DensityMatrix::new(mat, t)
}

// ---------------------------------------------------------------------------
// Haar measure
// ---------------------------------------------------------------------------

/// Uniform (Haar) random unit vector in ℂ^{2ⁿ}: a normalized vector of
/// i.i.d. complex standard Gaussians.
pub fn haar_sample(n: u32, rng: &mut RandomBitstream) -> StateVector {
    assert!(n >= 1);
    let dim = 1usize << n;
    loop {
        let entries: Vec<Complex64> = (0..dim).map(|_| rng.complex_standard_normal()).collect();
        let v = ComplexVector { entries };
        if v.norm() > 0.0 {
            return normalize(&v).expect("nonzero norm");
        }
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact Haar t-copy moment: P_sym / C(N+t−1, t), with P_sym the projector
/// onto the symmetric subspace of (ℂ^N)^{⊗t}.
///
/// P_sym is assembled from the orthonormal symmetrized multiset basis: for
/// each size-t multiset S of basis indices, the normalized uniform
/// superposition over the distinct arrangements of S contributes one rank-1
/// term. The closed form is validated against a Monte Carlo Haar average in
/// the test suite before anything downstream relies on it.
pub fn haar_moment(n: u32, t: u32) -> Result<DensityMatrix, QuantumError> {
    if t == 0 {
        return Err(QuantumError::BadCopies);
    }
    let dim = 1usize << n;
    let d = checked_power_dim(dim, t)?;
    let mut mat = DMatrix::<Complex64>::zeros(d, d);

    // Enumerate nondecreasing index tuples (multisets) of length t over [dim].
    let mut multiset = vec![0usize; t as usize];
    enumerate_multisets(dim, t as usize, 0, 0, &mut multiset, &mut |ms| {
        let positions = arrangement_indices(ms, dim);
        let w = 1.0 / positions.len() as f64;
        for &a in &positions {
            for &b in &positions {
                mat[(a, b)] += Complex64::new(w, 0.0);
            }
        }
    });

    let sym_dim = binomial((dim + t as usize - 1) as u64, t as u64) as f64;
    mat /= Complex64::new(sym_dim, 0.0);
    DensityMatrix::new(mat, t)
}

fn enumerate_multisets(
    dim: usize,
    t: usize,
    slot: usize,
    min: usize,
    cur: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if slot == t {
        f(cur);
        return;
    }
    for v in min..dim {
        cur[slot] = v;
        enumerate_multisets(dim, t, slot + 1, v, cur, f);
    }
}

/// Tensor-basis indices of all distinct arrangements of a multiset.
fn arrangement_indices(multiset: &[usize], dim: usize) -> Vec<usize> {
    // distinct values with multiplicities (t is tiny, a flat scan is fine)
    let mut values: Vec<(usize, u32)> = Vec::new();
    for &v in multiset {
        match values.iter_mut().find(|(x, _)| *x == v) {
            Some((_, c)) => *c += 1,
            None => values.push((v, 1)),
        }
    }
    let mut out = Vec::new();
    fn rec(
        values: &mut Vec<(usize, u32)>,
        dim: usize,
        left: usize,
        acc: usize,
        out: &mut Vec<usize>,
    ) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in 0..values.len() {
            if values[i].1 == 0 {
                continue;
            }
            values[i].1 -= 1;
            let v = values[i].0;
            rec(values, dim, left - 1, acc * dim + v, out);
            values[i].1 += 1;
        }
    }
    rec(&mut values, dim, multiset.len(), 0, &mut out);
    out
}
