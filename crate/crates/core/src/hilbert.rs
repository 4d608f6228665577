//! Dense complex linear algebra and quantum-object construction.
//!
//! Everything downstream works with three value types: [`Operator`] (square
//! complex matrices: observables, unitaries, density operators, projectors),
//! [`OrthonormalBasis`] (ordered lists of orthonormal vectors defining
//! projective measurements) and [`Povm`] (positive operator-valued measures).
//! All values are immutable after construction and safe to share across
//! threads. Storage is dense; the supported dimension is capped at 2^10,
//! which covers spin chains up to 10 qubits.
//!
//! Convention: ħ = 1 throughout, so times and energies are dimensionless and
//! evolution under a Hamiltonian `H` for time `t` is `exp(-i H t)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KdError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest supported Hilbert-space dimension (dense storage only).
pub const MAX_DIM: usize = 1 << 10;

const HERM_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-10;
const POVM_TOL: f64 = 1e-10;

/// Sum a slice by pairwise (cascade) summation.
///
/// Deterministic for a fixed input order and substantially more accurate than
/// naive left-to-right accumulation on long sums; used for every distribution
/// normalization check in the crate.
pub fn pairwise_sum(values: &[C64]) -> C64 {
    match values.len() {
        0 => C64::new(0.0, 0.0),
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Pairwise sum of real values.
pub fn pairwise_sum_real(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum_real(lo) + pairwise_sum_real(hi)
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(KdError::InvalidDimension("dimension must be at least 1".into()));
    }
    if d > MAX_DIM {
        return Err(KdError::Capacity(format!(
            "dimension {d} exceeds the dense-storage cap {MAX_DIM}"
        )));
    }
    Ok(())
}

/// A dense complex square matrix on a finite-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: CMatrix,
}

impl Operator {
    /// Wrap a square matrix.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(KdError::InvalidDimension(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        check_dim(mat.nrows())?;
        Ok(Self { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMatrix::zeros(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { mat: CMatrix::from_fn(dim, dim, f) })
    }

    /// Rank-1 outer product |u⟩⟨v|.
    pub fn outer(u: &CVector, v: &CVector) -> Self {
        Self { mat: u * v.adjoint() }
    }

    /// Projector |u⟩⟨u| (u need not be normalized; it is normalized first).
    pub fn projector(u: &CVector) -> Self {
        let n = u.norm();
        let un = u / C64::new(n, 0.0);
        Self::outer(&un, &un)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn mul(&self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat }
    }

    pub fn add(&self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }

    pub fn sub(&self, rhs: &Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator { mat: &self.mat * c }
    }

    /// Apply to a vector: A|v⟩.
    pub fn apply(&self, v: &CVector) -> CVector {
        &self.mat * v
    }

    /// ⟨u|A|v⟩.
    pub fn sandwich(&self, u: &CVector, v: &CVector) -> C64 {
        u.dotc(&(&self.mat * v))
    }

    /// ⟨v|A|v⟩ (real part not taken; caller decides).
    pub fn expectation(&self, v: &CVector) -> C64 {
        self.sandwich(v, v)
    }

    /// Tr(A ρ) for a density operator ρ.
    pub fn expectation_in(&self, rho: &Operator) -> C64 {
        (&self.mat * &rho.mat).trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn frobenius_distance(&self, other: &Operator) -> f64 {
        (&self.mat - &other.mat).norm()
    }

    /// Deviation from Hermiticity, ‖A − A†‖_F.
    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Deviation from unitarity, ‖A†A − I‖_F.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        (self.mat.adjoint() * &self.mat - CMatrix::identity(d, d)).norm()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Error unless self is Hermitian within `tol`.
    pub fn require_hermitian(&self, tol: f64) -> Result<()> {
        let dev = self.hermiticity_deviation();
        if dev > tol {
            return Err(KdError::NotHermitian { deviation: dev, tol });
        }
        Ok(())
    }

    /// Error unless self is unitary within `tol`.
    pub fn require_unitary(&self, tol: f64) -> Result<()> {
        let dev = self.unitarity_deviation();
        if dev > tol {
            return Err(KdError::NotUnitary { deviation: dev, tol });
        }
        Ok(())
    }

    /// Error unless self is a density operator: Hermitian within 1e-12,
    /// unit trace within 1e-12, eigenvalues ≥ -1e-10.
    pub fn require_density(&self) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > 1e-12 {
            return Err(KdError::NotDensity(format!(
                "Hermiticity deviation {herm:.3e} exceeds 1e-12"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(KdError::NotDensity(format!("trace {tr} is not 1 within 1e-12")));
        }
        let eigs = hermitian_eigenvalues(self)?;
        if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
            if min < -1e-10 {
                return Err(KdError::NotDensity(format!(
                    "smallest eigenvalue {min:.3e} is below -1e-10"
                )));
            }
        }
        Ok(())
    }
}

/// An ordered list of `dim` orthonormal vectors; defines a rank-1 projective
/// measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: Vec<CVector>,
}

impl OrthonormalBasis {
    /// Validate pairwise inner products against δ_ij at 1e-10.
    pub fn new(vectors: Vec<CVector>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(KdError::InvalidDimension("basis must contain at least one vector".into()));
        }
        let d = vectors[0].len();
        check_dim(d)?;
        if vectors.len() != d {
            return Err(KdError::InvalidDimension(format!(
                "a basis of C^{d} needs {d} vectors, got {}",
                vectors.len()
            )));
        }
        for v in &vectors {
            if v.len() != d {
                return Err(KdError::DimensionMismatch(
                    "all basis vectors must share one dimension".into(),
                ));
            }
        }
        for i in 0..d {
            for j in i..d {
                let ip = vectors[i].dotc(&vectors[j]);
                let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                if (ip - target).norm() > ORTHO_TOL {
                    return Err(KdError::NotOrthonormal(format!(
                        "<v_{i}|v_{j}> = {ip} deviates from {} beyond 1e-10",
                        if i == j { "1" } else { "0" }
                    )));
                }
            }
        }
        Ok(Self { vectors })
    }

    /// The computational (standard) basis of C^d.
    pub fn computational(d: usize) -> Result<Self> {
        check_dim(d)?;
        let vectors = (0..d)
            .map(|i| CVector::from_fn(d, |r, _| if r == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }))
            .collect();
        Ok(Self { vectors })
    }

    /// Basis made of the columns of a unitary matrix.
    pub fn from_unitary_columns(u: &Operator) -> Result<Self> {
        u.require_unitary(UNITARY_TOL)?;
        let d = u.dim();
        let vectors = (0..d).map(|j| u.matrix().column(j).into_owned()).collect();
        Self::new(vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vector(&self, i: usize) -> &CVector {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    /// Rank-1 projector |v_i⟩⟨v_i|.
    pub fn projector(&self, i: usize) -> Operator {
        Operator::outer(&self.vectors[i], &self.vectors[i])
    }

    /// All rank-1 projectors, in basis order, as a POVM.
    pub fn to_povm(&self) -> Povm {
        let elements = (0..self.dim()).map(|i| self.projector(i)).collect();
        Povm { elements }
    }

    /// Coefficients ⟨v_i|ψ⟩ of a state in this basis.
    pub fn coefficients(&self, psi: &CVector) -> Vec<C64> {
        self.vectors.iter().map(|v| v.dotc(psi)).collect()
    }
}

/// A positive operator-valued measure: PSD elements summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    elements: Vec<Operator>,
}

impl Povm {
    /// Validate positivity (min eigenvalue ≥ -1e-10 per element) and
    /// completeness (sum = identity within 1e-10 Frobenius).
    pub fn new(elements: Vec<Operator>) -> Result<Self> {
        if elements.is_empty() {
            return Err(KdError::NotPovm("a POVM needs at least one element".into()));
        }
        let d = elements[0].dim();
        let mut sum = CMatrix::zeros(d, d);
        for (k, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return Err(KdError::DimensionMismatch(
                    "all POVM elements must share one dimension".into(),
                ));
            }
            e.require_hermitian(HERM_TOL)
                .map_err(|_| KdError::NotPovm(format!("element {k} is not Hermitian")))?;
            let eigs = hermitian_eigenvalues(e)?;
            if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
                if min < -1e-10 {
                    return Err(KdError::NotPovm(format!(
                        "element {k} has eigenvalue {min:.3e} below -1e-10"
                    )));
                }
            }
            sum += e.matrix();
        }
        let dev = (sum - CMatrix::identity(d, d)).norm();
        if dev > POVM_TOL {
            return Err(KdError::NotPovm(format!(
                "elements sum to identity only within {dev:.3e} (tolerance 1e-10)"
            )));
        }
        Ok(Self { elements })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, k: usize) -> &Operator {
        &self.elements[k]
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }
}

/// Discrete-Fourier-transform basis: vector j has components
/// exp(2πi n j / d)/√d relative to the computational basis.
///
/// For every d the DFT basis is mutually unbiased with respect to the
/// computational basis (all overlap moduli are 1/√d).
pub fn make_dft_basis(d: usize) -> Result<OrthonormalBasis> {
    check_dim(d)?;
    let norm = 1.0 / (d as f64).sqrt();
    let vectors = (0..d)
        .map(|j| {
            CVector::from_fn(d, |n, _| {
                let phase = 2.0 * std::f64::consts::PI * (n as f64) * (j as f64) / (d as f64);
                C64::from_polar(norm, phase)
            })
        })
        .collect();
    OrthonormalBasis::new(vectors)
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; u1 kept away from 0 so the log is finite.
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > 1e-300 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Haar-distributed random unitary, deterministic for a fixed seed.
///
/// QR decomposition of a complex Ginibre matrix with the R diagonal's phases
/// divided out, which makes the distribution exactly Haar.
pub fn haar_random_unitary(d: usize, seed: u64) -> Result<Operator> {
    check_dim(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(standard_normal(&mut rng), standard_normal(&mut rng)));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        // divide column j of Q by the phase of R_jj
        for i in 0..d {
            q[(i, j)] /= phase;
        }
    }
    Operator::new(q)
}

/// Haar-random pure state of dimension d, deterministic for a fixed seed.
pub fn haar_random_state(d: usize, seed: u64) -> Result<CVector> {
    check_dim(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = CVector::from_fn(d, |_, _| C64::new(standard_normal(&mut rng), standard_normal(&mut rng)));
    let n = v.norm();
    v /= C64::new(n, 0.0);
    Ok(v)
}

/// Transition matrix with entries ⟨a_i|b_j⟩; unitary whenever A and B are
/// orthonormal bases of the same space.
pub fn transition_matrix(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(KdError::DimensionMismatch(format!(
            "bases have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    Operator::from_fn(d, |i, j| a.vector(i).dotc(b.vector(j)))
}

/// Smallest overlap modulus min_ij |⟨a_i|b_j⟩| between two bases.
pub fn min_overlap(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    let t = transition_matrix(a, b)?;
    Ok(t.matrix().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min))
}

/// Eigenvalues of a Hermitian operator, ascending.
/// Symmetrized copy of `h` as a faer matrix, so tiny anti-Hermitian noise
/// cannot leak into the decomposition.
///
/// faer's self-adjoint solver is used for all Hermitian eigenproblems: it
/// stays accurate for heavily degenerate spectra (e.g. Pauli strings in the
/// Heisenberg picture), where QR-iteration implementations can return
/// eigenvectors with O(1) residuals.
fn to_faer_symmetrized(h: &Operator) -> faer::Mat<C64> {
    let d = h.dim();
    let m = h.matrix();
    faer::Mat::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub fn hermitian_eigenvalues(h: &Operator) -> Result<Vec<f64>> {
    to_faer_symmetrized(h)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| KdError::InvalidArgument(format!("eigenvalue solve failed: {e:?}")))
}

/// Full eigendecomposition of a Hermitian operator without degeneracy
/// merging: eigenvalues (ascending) paired with an orthonormal eigenbasis.
pub fn hermitian_eigensystem(h: &Operator) -> Result<(Vec<f64>, OrthonormalBasis)> {
    h.require_hermitian(HERM_TOL)?;
    let d = h.dim();
    let evd = to_faer_symmetrized(h)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| KdError::InvalidArgument(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues: Vec<f64> = (0..d).map(|k| s[k].re).collect();
    let u = evd.U();
    let vectors: Vec<CVector> = (0..d).map(|k| CVector::from_fn(d, |i, _| u[(i, k)])).collect();
    Ok((eigenvalues, OrthonormalBasis::new(vectors)?))
}

/// Spectral decomposition of a Hermitian operator into distinct eigenvalues
/// and their (possibly degenerate) orthogonal projectors.
///
/// Eigenvalues within `1e-9 × spectral range` of each other are merged into a
/// single projector, so exactly degenerate spectra computed in floating point
/// (e.g. Pauli strings) come out with the right ranks.
pub fn spectral_decompose(h: &Operator) -> Result<Vec<(f64, Operator)>> {
    let (eigenvalues, basis) = hermitian_eigensystem(h)?;
    let d = h.dim();
    let range = eigenvalues[d - 1] - eigenvalues[0];
    let tol = 1e-9 * range.max(1.0);
    let mut out: Vec<(f64, Operator)> = Vec::new();
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && eigenvalues[end] - eigenvalues[end - 1] <= tol {
            end += 1;
        }
        let mut proj = CMatrix::zeros(d, d);
        let mut lam = 0.0;
        for k in start..end {
            let v = basis.vector(k);
            proj += v * v.adjoint();
            lam += eigenvalues[k];
        }
        lam /= (end - start) as f64;
        out.push((lam, Operator::new(proj)?));
        start = end;
    }
    Ok(out)
}

/// exp(-i H t) for Hermitian H, via the spectral decomposition (ħ = 1).
pub fn matrix_exp_unitary(h: &Operator, t: f64) -> Result<Operator> {
    let (eigenvalues, basis) = hermitian_eigensystem(h)?;
    let d = h.dim();
    let mut u = CMatrix::zeros(d, d);
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let v = basis.vector(k);
        u += (v * v.adjoint()) * C64::from_polar(1.0, -lam * t);
    }
    Operator::new(u)
}

/// Hermitian function application f(H) via the spectral decomposition.
pub fn hermitian_function(h: &Operator, f: impl Fn(f64) -> f64) -> Result<Operator> {
    let (eigenvalues, basis) = hermitian_eigensystem(h)?;
    let d = h.dim();
    let mut m = CMatrix::zeros(d, d);
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let v = basis.vector(k);
        m += (v * v.adjoint()) * C64::new(f(lam), 0.0);
    }
    Operator::new(m)
}

/// Gibbs state exp(-βH)/Z.
pub fn thermal_state(h: &Operator, beta: f64) -> Result<Operator> {
    let (eigenvalues, _) = hermitian_eigensystem(h)?;
    // subtract the ground energy before exponentiating to avoid overflow
    let e0 = eigenvalues[0];
    let unnorm = hermitian_function(h, |lam| (-beta * (lam - e0)).exp())?;
    let z = unnorm.trace().re;
    Ok(unnorm.scale(C64::new(1.0 / z, 0.0)))
}

/// Kronecker product of a list of operators, left factor most significant.
pub fn tensor_product(ops: &[&Operator]) -> Result<Operator> {
    if ops.is_empty() {
        return Err(KdError::InvalidArgument("tensor product of an empty list".into()));
    }
    let mut acc = ops[0].matrix().clone();
    for op in &ops[1..] {
        acc = acc.kronecker(op.matrix());
    }
    Operator::new(acc)
}

/// Kronecker product of state vectors, left factor most significant.
pub fn tensor_product_states(states: &[&CVector]) -> Result<CVector> {
    if states.is_empty() {
        return Err(KdError::InvalidArgument("tensor product of an empty list".into()));
    }
    let mut acc = states[0].clone();
    for s in &states[1..] {
        acc = acc.kronecker(s);
    }
    Ok(acc)
}

/// Partial trace over the subsystems *not* listed in `keep`.
///
/// `dims` are the tensor factors of the full space, left factor most
/// significant (matching [`tensor_product`]); `keep` lists the factor indices
/// to retain, in ascending order.
pub fn partial_trace(op: &Operator, dims: &[usize], keep: &[usize]) -> Result<Operator> {
    let total: usize = dims.iter().product();
    if total != op.dim() {
        return Err(KdError::DimensionMismatch(format!(
            "factor dimensions multiply to {total} but the operator has dimension {}",
            op.dim()
        )));
    }
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != keep.len() || keep.iter().any(|&k| k >= dims.len()) {
        return Err(KdError::InvalidArgument(
            "keep indices must be distinct factor positions".into(),
        ));
    }
    let keep = sorted;
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let traced_dim: usize = traced.iter().map(|&k| dims[k]).product();

    // strides of each factor in the row-major composite index
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for i in (0..n - 1).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let decode = |mut idx: usize, factors: &[usize]| -> usize {
        // map a multi-index over `factors` (given as an enumeration index)
        // to a full composite index contribution
        let mut full = 0usize;
        for &f in factors.iter().rev() {
            let digit = idx % dims[f];
            idx /= dims[f];
            full += digit * strides[f];
        }
        full
    };

    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for r in 0..kept_dim {
        let r_full = decode(r, &keep);
        for c in 0..kept_dim {
            let c_full = decode(c, &keep);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..traced_dim {
                let t_full = decode(t, &traced);
                acc += op.matrix()[(r_full + t_full, c_full + t_full)];
            }
            out[(r, c)] = acc;
        }
    }
    Operator::new(out)
}
