//! Non-positivity measures, positivity tests, geometry and incompatibility
//! witnesses for KD distributions.
//!
//! The total non-positivity N(Q) = Σ|Q| equals 1 exactly when Q is a
//! classical joint probability distribution and exceeds 1 otherwise, which
//! makes it a faithful witness of KD non-positivity. The other routines in
//! this module trade information for convenience: support uncertainties only
//! need the state's expansion coefficients, polytope membership only needs a
//! nonnegative least-squares solve, and complete incompatibility is a
//! property of the basis pair alone.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KdError, Result};
use crate::hilbert::{
    matrix_exp_unitary, pairwise_sum_real, C64, CMatrix, CVector, Operator, OrthonormalBasis,
};
use crate::kd::{extended_kd, standard_kd, KdDistribution};
use crate::optim::nelder_mead;

/// Outcome of a KD-positivity test.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityVerdict {
    /// True iff every entry has |Im| ≤ tol and Re ≥ -tol.
    pub is_positive: bool,
    /// Index tuple and value of the most-violating entry.
    pub worst_entry: (Vec<usize>, C64),
    /// Tolerance the verdict was computed at.
    pub tolerance: f64,
}

/// Support counts of a pure state in two bases, tagged with KD positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyPoint {
    pub n_a: usize,
    pub n_b: usize,
    pub kd_positive: bool,
    /// True when some amplitude modulus fell within 10x of the support
    /// threshold, i.e. the counts are numerically delicate.
    pub near_threshold: bool,
    /// Donoho-Stark product bound n_A·n_B ≥ 1/M² (with slack 1e-9).
    pub donoho_stark_ok: bool,
    /// Caller-supplied tag for CSV output.
    pub label: String,
}

impl UncertaintyPoint {
    /// Additive support uncertainty n_A + n_B.
    pub fn n_ab(&self) -> usize {
        self.n_a + self.n_b
    }
}

/// Total non-positivity N(Q) = Σ |Q| ≥ 1.
pub fn total_nonpositivity(q: &KdDistribution) -> f64 {
    let mods: Vec<f64> = q.values().iter().map(|v| v.norm()).collect();
    pairwise_sum_real(&mods)
}

/// Entrywise positivity test at absolute tolerance `tol` (default 1e-10 in
/// callers). The worst entry maximizes max(|Im|, -Re).
pub fn is_kd_positive(q: &KdDistribution, tol: f64) -> PositivityVerdict {
    let mut worst_idx = vec![0; q.rank()];
    let mut worst_val = C64::new(0.0, 0.0);
    let mut worst_score = f64::NEG_INFINITY;
    for (idx, v) in q.iter() {
        let score = v.im.abs().max(-v.re);
        if score > worst_score {
            worst_score = score;
            worst_idx = idx;
            worst_val = v;
        }
    }
    PositivityVerdict {
        is_positive: worst_score <= tol,
        worst_entry: (worst_idx, worst_val),
        tolerance: tol,
    }
}

/// Build an orthonormal basis from a real parameter vector of length d² by
/// forming a Hermitian matrix H(x) and taking the columns of exp(iH).
fn basis_from_params(d: usize, x: &[f64]) -> Result<OrthonormalBasis> {
    debug_assert_eq!(x.len(), d * d);
    let mut h = CMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        h[(i, i)] = C64::new(x[k], 0.0);
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = C64::new(x[k], x[k + 1]);
            k += 2;
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    let hop = Operator::new(h)?;
    // exp(-iH·(-1)) = exp(iH)
    let u = matrix_exp_unitary(&hop, -1.0)?;
    OrthonormalBasis::from_unitary_columns(&u)
}

/// KD coherence C_KD(ρ; A) = max over bases B of Σ_{ij} |Im Q_{ij}(ρ)|.
///
/// The maximization over B has no closed form; it is performed by seeded
/// random-restart Nelder-Mead over the d² parameters of a unitary. The
/// result is monotone nondecreasing in `n_restarts` for a fixed seed, and is
/// 0 (within 1e-8) exactly when ρ is diagonal in A.
pub fn kd_coherence(rho: &Operator, a: &OrthonormalBasis, n_restarts: usize, seed: u64) -> Result<f64> {
    rho.require_density()?;
    if rho.dim() != a.dim() {
        return Err(KdError::DimensionMismatch("state and basis dims differ".into()));
    }
    let d = rho.dim();
    let objective = |x: &[f64]| -> f64 {
        let b = match basis_from_params(d, x) {
            Ok(b) => b,
            Err(_) => return 0.0,
        };
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let bja = b.vector(j).dotc(a.vector(i));
                let arb = rho.sandwich(a.vector(i), b.vector(j));
                acc += (bja * arb).im.abs();
            }
        }
        -acc
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for _ in 0..n_restarts.max(1) {
        let x0: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let (_, fmin) = nelder_mead(&objective, &x0, 0.4, 400, 1e-12);
        best = best.max(-fmin);
    }
    Ok(best)
}

/// ℓ1 coherence of ρ with respect to basis A: Σ_{i≠j} |⟨a_i|ρ|a_j⟩|.
pub fn l1_coherence(rho: &Operator, a: &OrthonormalBasis) -> Result<f64> {
    rho.require_density()?;
    if rho.dim() != a.dim() {
        return Err(KdError::DimensionMismatch("state and basis dims differ".into()));
    }
    let d = rho.dim();
    let mut terms = Vec::with_capacity(d * d - d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                terms.push(rho.sandwich(a.vector(i), a.vector(j)).norm());
            }
        }
    }
    Ok(pairwise_sum_real(&terms))
}

/// Require B mutually unbiased with respect to A within `tol` on each
/// overlap modulus.
pub fn require_mub(a: &OrthonormalBasis, b: &OrthonormalBasis, tol: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(KdError::DimensionMismatch("bases differ in dimension".into()));
    }
    let d = a.dim();
    let target = 1.0 / (d as f64).sqrt();
    for i in 0..d {
        for j in 0..d {
            let m = a.vector(i).dotc(b.vector(j)).norm();
            if (m - target).abs() > tol {
                return Err(KdError::NotMutuallyUnbiased(format!(
                    "|<a_{i}|b_{j}>| = {m:.6} deviates from 1/sqrt(d) = {target:.6}"
                )));
            }
        }
    }
    Ok(())
}

/// Residual of the identity N(Q*) - 1 = C_ℓ1(ρ; A), where Q* is the 3-basis
/// chain (A, B_mub, A) and B_mub is mutually unbiased to A.
pub fn mub_coherence_identity_check(
    rho: &Operator,
    a: &OrthonormalBasis,
    b_mub: &OrthonormalBasis,
) -> Result<f64> {
    require_mub(a, b_mub, 1e-10)?;
    let q_star = extended_kd(rho, &[a, b_mub, a])?;
    let n = total_nonpositivity(&q_star);
    let c = l1_coherence(rho, a)?;
    Ok((n - 1.0 - c).abs())
}

/// Support uncertainties of a pure state in two bases.
///
/// Counts the expansion coefficients with modulus above `support_tol`
/// (1e-10 is the standard choice) and tags the point with the KD-positivity
/// verdict of |ψ⟩⟨ψ| at tolerance 1e-10.
pub fn support_uncertainty(
    psi: &CVector,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    support_tol: f64,
    label: &str,
) -> Result<UncertaintyPoint> {
    if (psi.norm() - 1.0).abs() > 1e-10 {
        return Err(KdError::InvalidArgument("state must be normalized".into()));
    }
    let mut near = false;
    let mut count = |basis: &OrthonormalBasis| -> usize {
        basis
            .coefficients(psi)
            .iter()
            .filter(|z| {
                let m = z.norm();
                if m > support_tol * 0.1 && m < support_tol * 10.0 {
                    near = true;
                }
                m > support_tol
            })
            .count()
    };
    let n_a = count(a);
    let n_b = count(b);
    let rho = Operator::projector(psi);
    let q = standard_kd(&rho, a, b)?;
    let verdict = is_kd_positive(&q, 1e-10);
    let m_max = transition_max_overlap(a, b)?;
    let donoho_stark_ok = (n_a * n_b) as f64 >= 1.0 / (m_max * m_max) - 1e-9;
    Ok(UncertaintyPoint {
        n_a,
        n_b,
        kd_positive: verdict.is_positive,
        near_threshold: near,
        donoho_stark_ok,
        label: label.to_string(),
    })
}

fn transition_max_overlap(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    let d = a.dim();
    let mut m = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            m = m.max(a.vector(i).dotc(b.vector(j)).norm());
        }
    }
    Ok(m)
}

/// Nonnegative least squares min ||Ax - y||₂ subject to x ≥ 0
/// (Lawson-Hanson active set).
fn nnls(a: &DMatrix<f64>, y: &DVector<f64>, max_iter: usize) -> DVector<f64> {
    let n = a.ncols();
    let mut passive = vec![false; n];
    let mut x = DVector::zeros(n);
    let tol = 1e-12 * a.norm().max(1.0);

    for _ in 0..max_iter {
        let resid = y - a * &x;
        let w = a.transpose() * &resid;
        // most positive gradient among active (zero) coordinates
        let mut t: Option<usize> = None;
        let mut wmax = tol;
        for j in 0..n {
            if !passive[j] && w[j] > wmax {
                wmax = w[j];
                t = Some(j);
            }
        }
        let Some(t) = t else { break };
        passive[t] = true;

        loop {
            // least squares on the passive set
            let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(cols.iter());
            let sol = sub
                .svd(true, true)
                .solve(y, 1e-12)
                .expect("svd solve");
            if sol.iter().all(|&v| v > 0.0) {
                x = DVector::zeros(n);
                for (k, &j) in cols.iter().enumerate() {
                    x[j] = sol[k];
                }
                break;
            }
            // step toward sol until a coordinate hits zero
            let mut alpha = f64::INFINITY;
            for (k, &j) in cols.iter().enumerate() {
                if sol[k] <= 0.0 {
                    let denom = x[j] - sol[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            let mut xs = DVector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                xs[j] = x[j] + alpha * (sol[k] - x[j]);
            }
            x = xs;
            for &j in &cols {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

/// Membership report for the convex hull of the two bases' projectors.
#[derive(Debug, Clone)]
pub struct PolytopeMembership {
    pub is_member: bool,
    /// Residual ‖ρ - Σ p_i Π_{a_i} - Σ q_j Π_{b_j}‖ (real-vectorized 2-norm).
    pub residual: f64,
    /// Weights on the A projectors (when member).
    pub p: Vec<f64>,
    /// Weights on the B projectors (when member).
    pub q: Vec<f64>,
}

/// Decide whether ρ lies in conv{|a_i⟩⟨a_i|} ∪ {|b_j⟩⟨b_j|} by nonnegative
/// least squares on the real-vectorized operator equation.
///
/// The unit-sum constraint needs no separate row: each projector has unit
/// trace and ρ does too, so the trace components of the vectorized equation
/// already force Σp + Σq = 1 at any small-residual solution.
pub fn positivity_polytope_membership(
    rho: &Operator,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    tol: f64,
) -> Result<PolytopeMembership> {
    rho.require_density()?;
    let d = rho.dim();
    if a.dim() != d || b.dim() != d {
        return Err(KdError::DimensionMismatch("state and bases must share a dimension".into()));
    }
    // real vectorization: Re and Im of each matrix entry stacked
    let rows = 2 * d * d;
    let vectorize = |m: &CMatrix| -> DVector<f64> {
        let mut v = DVector::zeros(rows);
        for (k, z) in m.iter().enumerate() {
            v[2 * k] = z.re;
            v[2 * k + 1] = z.im;
        }
        v
    };
    let mut mat = DMatrix::zeros(rows, 2 * d);
    for i in 0..d {
        let p = a.projector(i);
        mat.set_column(i, &vectorize(p.matrix()));
    }
    for j in 0..d {
        let p = b.projector(j);
        mat.set_column(d + j, &vectorize(p.matrix()));
    }
    let y = vectorize(rho.matrix());
    let x = nnls(&mat, &y, 50 * d);
    let residual = (&mat * &x - &y).norm();
    let is_member = residual <= tol;
    Ok(PolytopeMembership {
        is_member,
        residual,
        p: (0..d).map(|i| x[i]).collect(),
        q: (0..d).map(|j| x[d + j]).collect(),
    })
}

/// Verdict of the complete-incompatibility scan.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompatibilityVerdict {
    pub completely_incompatible: bool,
    /// A pair of index subsets (S over A, T over B) whose spanned subspaces
    /// intersect nontrivially, when one exists; minimal in #S+#T.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
}

/// Exhaustively test complete incompatibility of two bases (d ≤ 12).
///
/// The bases are completely incompatible iff for every pair of index subsets
/// S, T with #S + #T ≤ d the stacked columns {a_i : i∈S} ∪ {b_j : j∈T} have
/// full column rank (smallest singular value > 1e-9 × largest), equivalently
/// the spanned subspaces intersect only in 0. Subset pairs are scanned in
/// increasing #S+#T so any witness returned is size-minimal.
pub fn complete_incompatibility(
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
) -> Result<IncompatibilityVerdict> {
    if a.dim() != b.dim() {
        return Err(KdError::DimensionMismatch("bases differ in dimension".into()));
    }
    let d = a.dim();
    if d > 12 {
        return Err(KdError::Capacity(format!(
            "complete_incompatibility is exhaustive and capped at d = 12, got {d}"
        )));
    }
    let subsets_of_size = |k: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        if k == 0 || k > d {
            return out;
        }
        loop {
            out.push(idx.clone());
            // next combination
            let mut i = k;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if idx[i] != i + d - k {
                    break;
                }
                if i == 0 {
                    return out;
                }
            }
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    };

    for total in 2..=d {
        for s_size in 1..total {
            let t_size = total - s_size;
            for s in subsets_of_size(s_size) {
                for t in subsets_of_size(t_size) {
                    let mut cols = CMatrix::zeros(d, s.len() + t.len());
                    for (k, &i) in s.iter().enumerate() {
                        cols.set_column(k, a.vector(i));
                    }
                    for (k, &j) in t.iter().enumerate() {
                        cols.set_column(s.len() + k, b.vector(j));
                    }
                    let sv = cols.svd(false, false).singular_values;
                    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
                    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
                    if smin <= 1e-9 * smax {
                        return Ok(IncompatibilityVerdict {
                            completely_incompatible: false,
                            witness: Some((s, t)),
                        });
                    }
                }
            }
        }
    }
    Ok(IncompatibilityVerdict { completely_incompatible: true, witness: None })
}

/// State samplers for [`uncertainty_diagram`].
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSpec {
    /// All elements of A and of B.
    BasisStates,
    /// n Haar-random pure states.
    Haar(usize),
    /// Equal-weight superpositions (|a_i⟩ + |a_j⟩)/√2 over all pairs i < j.
    BasisPairSuperpositions,
}

/// Sample states and record their support-uncertainty points against the
/// basis pair (A, B).
pub fn uncertainty_diagram(
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    sampler: &SamplerSpec,
    seed: u64,
) -> Result<Vec<UncertaintyPoint>> {
    let d = a.dim();
    let mut points = Vec::new();
    match sampler {
        SamplerSpec::BasisStates => {
            for i in 0..d {
                points.push(support_uncertainty(a.vector(i), a, b, 1e-10, &format!("a{i}"))?);
            }
            for j in 0..d {
                points.push(support_uncertainty(b.vector(j), a, b, 1e-10, &format!("b{j}"))?);
            }
        }
        SamplerSpec::Haar(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..*n {
                let sub_seed: u64 = rng.gen();
                let psi = crate::hilbert::haar_random_state(d, sub_seed)?;
                points.push(support_uncertainty(&psi, a, b, 1e-10, &format!("haar{k}"))?);
            }
        }
        SamplerSpec::BasisPairSuperpositions => {
            let s = C64::new(1.0 / 2.0_f64.sqrt(), 0.0);
            for i in 0..d {
                for j in i + 1..d {
                    let psi = (a.vector(i) + a.vector(j)) * s;
                    points.push(support_uncertainty(&psi, a, b, 1e-10, &format!("a{i}+a{j}"))?);
                }
            }
        }
    }
    Ok(points)
}

/// Maximize the total non-positivity N over pure states for a fixed basis
/// chain, by seeded random-restart Nelder-Mead over state parameters.
/// Returns (best N, maximizing state).
pub fn maximize_total_nonpositivity(
    bases: &[&OrthonormalBasis],
    n_restarts: usize,
    seed: u64,
) -> Result<(f64, CVector)> {
    if bases.len() < 2 {
        return Err(KdError::InvalidArgument("need at least two bases".into()));
    }
    let d = bases[0].dim();
    let state_from = |x: &[f64]| -> Option<CVector> {
        let mut v = CVector::from_fn(d, |n, _| C64::new(x[2 * n], x[2 * n + 1]));
        let norm = v.norm();
        if norm < 1e-8 {
            return None;
        }
        v /= C64::new(norm, 0.0);
        Some(v)
    };
    let objective = |x: &[f64]| -> f64 {
        let Some(psi) = state_from(x) else { return 0.0 };
        let rho = Operator::projector(&psi);
        match extended_kd(&rho, bases) {
            Ok(q) => -total_nonpositivity(&q),
            Err(_) => 0.0,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let mut best_x = vec![0.0; 2 * d];
    for _ in 0..n_restarts.max(1) {
        let x0: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, fmin) = nelder_mead(&objective, &x0, 0.3, 800, 1e-13);
        if -fmin > best {
            best = -fmin;
            best_x = x;
        }
    }
    let psi = state_from(&best_x)
        .ok_or_else(|| KdError::InvalidArgument("optimizer collapsed to the zero vector".into()))?;
    Ok((best, psi))
}
