//! Foundations applications of the KD distribution: Leggett-Garg correlators
//! in the weak-measurement limit, the consistent-histories calculus, and the
//! KCBS (Klyachko-Can-Binicioğlu-Shumovsky) contextuality scenario.
//!
//! Three constructions, one theme: each classicality test here has a sharp KD
//! reformulation, and breaking the classical bound forces the relevant KD
//! quasi-probability to leave the probability simplex.
//!
//! - Leggett-Garg: the three-time correlator `L = K12 + K23 - K13` of ±1
//!   observables, classically bounded by 1, equals an eigenvalue-weighted sum
//!   of KD entries; `L > 1` requires a negative real part, equivalently an
//!   anomalous weak value.
//! - Consistent histories: the interference between two histories is a KD
//!   quasi-probability; a family is consistent exactly when the off-diagonal
//!   entries vanish, in which case the diagonal is a probability distribution.
//! - KCBS: the pentagram correlator `S`, classically `≥ -3`, is an
//!   eigenvalue-weighted average of a 5-extended KD distribution; the qutrit
//!   state aligned with the pentagram axis reaches `5 - 4√5 ≈ -3.944`.

use crate::error::{KdError, Result};
use crate::hilbert::{pairwise_sum, C64, CMatrix, CVector, Operator, OrthonormalBasis};
use crate::kd::{extended_kd, KdDistribution};

const IDEMPOTENT_TOL: f64 = 1e-10;
const NORMALIZER_TOL: f64 = 1e-12;
const COMPAT_TOL: f64 = 1e-10;

/// Eigenvalue convention for two-outcome ±1 observables and for the KCBS
/// observables: basis vector 0 carries +1, all later vectors carry -1.
fn dichotomic_eigenvalue(index: usize) -> f64 {
    if index == 0 {
        1.0
    } else {
        -1.0
    }
}

fn require_qubit_basis(name: &str, basis: &OrthonormalBasis) -> Result<()> {
    if basis.dim() != 2 {
        return Err(KdError::InvalidDimension(format!(
            "Leggett-Garg observables must be qubit (dim 2) bases; {name} has dim {}",
            basis.dim()
        )));
    }
    Ok(())
}

/// ±1 observable associated with a qubit eigenbasis: |v_0⟩⟨v_0| - |v_1⟩⟨v_1|.
fn dichotomic_observable(basis: &OrthonormalBasis) -> Operator {
    let plus = basis.projector(0);
    let minus = basis.projector(1);
    plus.sub(&minus)
}

/// Three-time Leggett-Garg correlator `L = K12 + K23 - K13` in the
/// weak-intermediate-measurement limit, starting from the eigenstate
/// `|a_{a_index}⟩` of the first observable.
///
/// Computed in KD form: with `Q_{j,k} = ⟨a_i|c_k⟩⟨c_k|b_j⟩⟨b_j|a_i⟩`,
///
/// `L = Σ_{j,k} Re(Q_{j,k}) (a_i b_j + b_j c_k - a_i c_k)`,
///
/// which coincides with `Re⟨a_i| ÂB̂ + B̂Ĉ - ÂĈ |a_i⟩`. Classically `L ≤ 1`;
/// any `L > 1` forces some `Re Q_{j,k} < 0`.
pub fn lg_correlator(
    a_index: usize,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    c: &OrthonormalBasis,
) -> Result<f64> {
    require_qubit_basis("A", a)?;
    require_qubit_basis("B", b)?;
    require_qubit_basis("C", c)?;
    if a_index >= 2 {
        return Err(KdError::InvalidArgument(format!(
            "a_index must be 0 or 1, got {a_index}"
        )));
    }
    let q = lg_kd_distribution(a_index, a, b, c);
    let ai = dichotomic_eigenvalue(a_index);
    let mut terms = Vec::with_capacity(4);
    for j in 0..2 {
        let bj = dichotomic_eigenvalue(j);
        for k in 0..2 {
            let ck = dichotomic_eigenvalue(k);
            terms.push(q[j][k].re * (ai * bj + bj * ck - ai * ck));
        }
    }
    Ok(terms.iter().sum())
}

/// Joint KD entries `Q_{j,k}(|a_i⟩⟨a_i|) = ⟨a_i|c_k⟩⟨c_k|b_j⟩⟨b_j|a_i⟩`
/// underlying the Leggett-Garg correlator, indexed `[j][k]`.
pub fn lg_kd_distribution(
    a_index: usize,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    c: &OrthonormalBasis,
) -> [[C64; 2]; 2] {
    let ai = a.vector(a_index);
    let mut q = [[C64::new(0.0, 0.0); 2]; 2];
    for (j, row) in q.iter_mut().enumerate() {
        let bj = b.vector(j);
        for (k, entry) in row.iter_mut().enumerate() {
            let ck = c.vector(k);
            // ⟨a_i|c_k⟩ ⟨c_k|b_j⟩ ⟨b_j|a_i⟩
            *entry = ck.dotc(ai).conj() * bj.dotc(ck).conj() * ai.dotc(bj).conj();
        }
    }
    q
}

/// One post-selected branch of the weak-value form of the Leggett-Garg
/// correlator.
#[derive(Debug, Clone, PartialEq)]
pub struct LgWeakTerm {
    /// Final-measurement outcome index `k`.
    pub c_index: usize,
    /// Post-selection probability `P(c_k | a_i) = |⟨c_k|a_i⟩|²`.
    pub probability: f64,
    /// Weak value `B_w(a_i, c_k) = ⟨c_k|B̂|a_i⟩ / ⟨c_k|a_i⟩`.
    pub weak_value: C64,
    /// True when `|Re B_w| > 1`, i.e. the weak value escapes the spectrum.
    pub anomalous: bool,
}

/// Leggett-Garg correlator in weak-value form.
#[derive(Debug, Clone, PartialEq)]
pub struct LgWeakValueReport {
    /// `L = Σ_k P(c_k|a_i) [(a_i + c_k) Re B_w(a_i,c_k) - a_i c_k]`.
    pub l: f64,
    /// Per-outcome terms; outcomes with vanishing probability are omitted.
    pub terms: Vec<LgWeakTerm>,
}

/// Weak-value form of the Leggett-Garg correlator.
///
/// Expresses `L` as a convex combination over the final outcome `c_k` of
/// `(a_i + c_k) Re B_w - a_i c_k`; agrees with [`lg_correlator`] exactly.
/// Since the combination is convex, `L > 1` requires some bracket to exceed
/// 1, which in turn requires `|Re B_w| > 1` — an anomalous weak value.
/// Outcomes with `P(c_k|a_i) = 0` contribute nothing and are omitted (their
/// weak value is undefined).
pub fn lg_weak_value_form(
    a_index: usize,
    a: &OrthonormalBasis,
    b: &OrthonormalBasis,
    c: &OrthonormalBasis,
) -> Result<LgWeakValueReport> {
    require_qubit_basis("A", a)?;
    require_qubit_basis("B", b)?;
    require_qubit_basis("C", c)?;
    if a_index >= 2 {
        return Err(KdError::InvalidArgument(format!(
            "a_index must be 0 or 1, got {a_index}"
        )));
    }
    let ai_vec = a.vector(a_index);
    let ai = dichotomic_eigenvalue(a_index);
    let b_op = dichotomic_observable(b);
    let mut l = 0.0;
    let mut terms = Vec::with_capacity(2);
    for k in 0..2 {
        let ck_vec = c.vector(k);
        let ck = dichotomic_eigenvalue(k);
        let overlap = ai_vec.dotc(ck_vec).conj(); // ⟨c_k|a_i⟩
        let p = overlap.norm_sqr();
        if p <= 1e-14 {
            continue;
        }
        let weak_value = b_op.sandwich(ck_vec, ai_vec) / overlap;
        l += p * ((ai + ck) * weak_value.re - ai * ck);
        terms.push(LgWeakTerm {
            c_index: k,
            probability: p,
            weak_value,
            anomalous: weak_value.re.abs() > 1.0,
        });
    }
    Ok(LgWeakValueReport { l, terms })
}

/// A quantum history: an initial state, a time-ordered chain of properties
/// (projectors), and a final rank-1 event, with the unitary evolution between
/// consecutive times supplied explicitly.
///
/// `evolutions[0]` maps the initial time to the first chain time,
/// `evolutions[l]` the l-th chain time to the next, and the last entry maps
/// the final chain time to the final time, so there are `chain.len() + 1`
/// segment unitaries. Projectors and the final event are given in the
/// Schrödinger picture at their own times; the constructor converts them to
/// the Heisenberg picture relative to the initial time.
#[derive(Debug, Clone)]
pub struct History {
    initial: Operator,
    times: Vec<f64>,
    projectors: Vec<Operator>,
    final_event: Operator,
    evolutions: Vec<Operator>,
    /// Heisenberg-picture chain projectors Π^{(l)}(t_l) = U† Π U.
    evolved_projectors: Vec<Operator>,
    /// Heisenberg-picture final event ρ_f(t_f).
    evolved_final: Operator,
}

impl History {
    /// Build and validate a history.
    ///
    /// `chain` lists `(time, projector)` pairs with strictly increasing
    /// times; each projector must be Hermitian and idempotent within 1e-10.
    /// `final_event` must be a rank-1 projector. `evolutions` must hold
    /// `chain.len() + 1` unitaries.
    pub fn new(
        initial: Operator,
        chain: Vec<(f64, Operator)>,
        final_event: Operator,
        evolutions: Vec<Operator>,
    ) -> Result<Self> {
        initial.require_density()?;
        let d = initial.dim();
        if evolutions.len() != chain.len() + 1 {
            return Err(KdError::InvalidArgument(format!(
                "need {} segment unitaries for a chain of length {}, got {}",
                chain.len() + 1,
                chain.len(),
                evolutions.len()
            )));
        }
        let mut times = Vec::with_capacity(chain.len());
        let mut projectors = Vec::with_capacity(chain.len());
        for (l, (t, p)) in chain.into_iter().enumerate() {
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(KdError::InvalidArgument(format!(
                        "chain times must be strictly increasing; slot {l} has t = {t} after {prev}"
                    )));
                }
            }
            require_projector(&p, d, &format!("chain slot {l}"))?;
            times.push(t);
            projectors.push(p);
        }
        require_projector(&final_event, d, "final event")?;
        let final_trace = final_event.trace();
        if (final_trace.re - 1.0).abs() > IDEMPOTENT_TOL || final_trace.im.abs() > IDEMPOTENT_TOL {
            return Err(KdError::InvalidArgument(format!(
                "final event must be rank-1 (trace 1), got trace {final_trace}"
            )));
        }
        for (l, u) in evolutions.iter().enumerate() {
            if u.dim() != d {
                return Err(KdError::DimensionMismatch(format!(
                    "evolution {l} has dim {} but the state has dim {d}",
                    u.dim()
                )));
            }
            u.require_unitary(1e-10)?;
        }

        // Accumulate U(t_0 → t_l) and conjugate each projector into the
        // Heisenberg picture.
        let mut cumulative = Operator::identity(d);
        let mut evolved_projectors = Vec::with_capacity(projectors.len());
        for (l, p) in projectors.iter().enumerate() {
            cumulative = evolutions[l].mul(&cumulative);
            evolved_projectors.push(cumulative.dagger().mul(p).mul(&cumulative));
        }
        cumulative = evolutions[projectors.len()].mul(&cumulative);
        let evolved_final = cumulative.dagger().mul(&final_event).mul(&cumulative);

        Ok(History {
            initial,
            times,
            projectors,
            final_event,
            evolutions,
            evolved_projectors,
            evolved_final,
        })
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    /// Number of chain slots (intermediate properties).
    pub fn chain_len(&self) -> usize {
        self.projectors.len()
    }

    /// Chain times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Schrödinger-picture chain projectors.
    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    /// Initial state.
    pub fn initial(&self) -> &Operator {
        &self.initial
    }

    /// Schrödinger-picture final event.
    pub fn final_event(&self) -> &Operator {
        &self.final_event
    }

    /// Heisenberg-picture chain projectors.
    pub fn evolved_projectors(&self) -> &[Operator] {
        &self.evolved_projectors
    }

    /// Heisenberg-picture final event.
    pub fn evolved_final(&self) -> &Operator {
        &self.evolved_final
    }

    /// Replace the chain slot `l` by the complementary property `I - Π`.
    fn with_complement(&self, slot: usize) -> Result<History> {
        let identity = Operator::identity(self.dim());
        let mut chain: Vec<(f64, Operator)> = self
            .times
            .iter()
            .copied()
            .zip(self.projectors.iter().cloned())
            .collect();
        chain[slot].1 = identity.sub(&chain[slot].1);
        History::new(
            self.initial.clone(),
            chain,
            self.final_event.clone(),
            self.evolutions.clone(),
        )
    }

    fn compatible_with(&self, other: &History) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(KdError::DimensionMismatch(format!(
                "histories live in dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if self.chain_len() != other.chain_len() {
            return Err(KdError::InvalidArgument(format!(
                "histories have chain lengths {} and {}",
                self.chain_len(),
                other.chain_len()
            )));
        }
        for (l, (t1, t2)) in self.times.iter().zip(other.times.iter()).enumerate() {
            if (t1 - t2).abs() > COMPAT_TOL {
                return Err(KdError::InvalidArgument(format!(
                    "histories disagree on time of slot {l}: {t1} vs {t2}"
                )));
            }
        }
        for (l, (u1, u2)) in self.evolutions.iter().zip(other.evolutions.iter()).enumerate() {
            if u1.frobenius_distance(u2) > COMPAT_TOL {
                return Err(KdError::InvalidArgument(format!(
                    "histories disagree on the segment-{l} evolution"
                )));
            }
        }
        if self.initial.frobenius_distance(&other.initial) > COMPAT_TOL {
            return Err(KdError::InvalidArgument(
                "histories have different initial states".into(),
            ));
        }
        if self.final_event.frobenius_distance(&other.final_event) > COMPAT_TOL {
            return Err(KdError::InvalidArgument(
                "histories have different final events".into(),
            ));
        }
        Ok(())
    }
}

fn require_projector(p: &Operator, dim: usize, what: &str) -> Result<()> {
    if p.dim() != dim {
        return Err(KdError::DimensionMismatch(format!(
            "{what} has dim {} but the state has dim {dim}",
            p.dim()
        )));
    }
    p.require_hermitian(IDEMPOTENT_TOL)?;
    let dev = p.mul(p).frobenius_distance(p);
    if dev > IDEMPOTENT_TOL {
        return Err(KdError::InvalidArgument(format!(
            "{what} is not idempotent (‖Π² - Π‖ = {dev:.3e})"
        )));
    }
    Ok(())
}

/// Interference quasi-probability `Q̃(H, H*)` between two histories over the
/// same initial state, final event, times, and evolutions:
///
/// `Q̃ = Tr(ρ_f Π_k ⋯ Π_1 ρ_i Π*_1 ⋯ Π*_k ρ_f) / Tr(ρ_f ρ_i)`
///
/// with everything in the Heisenberg picture. The two histories are mutually
/// consistent exactly when this vanishes. `Q̃(H, H)` is real and
/// nonnegative. Fails if the normalizer `Tr(ρ_f(t_f) ρ_i)` is below 1e-12.
pub fn histories_overlap(h: &History, h_star: &History) -> Result<C64> {
    h.compatible_with(h_star)?;
    let normalizer = h.evolved_final.mul(&h.initial).trace();
    if normalizer.norm() <= NORMALIZER_TOL {
        return Err(KdError::ZeroProbability(normalizer.norm()));
    }
    // Π_k ⋯ Π_1 ρ_i Π*_1 ⋯ Π*_k, built outward from ρ_i.
    let mut acc: CMatrix = h.initial.matrix().clone();
    for (p, p_star) in h.evolved_projectors.iter().zip(h_star.evolved_projectors.iter()) {
        acc = p.matrix() * acc * p_star.matrix();
    }
    let acc = h.evolved_final.matrix() * acc * h.evolved_final.matrix();
    Ok(acc.trace() / normalizer)
}

/// Verdict of a family-consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConsistency {
    /// True iff every off-diagonal `Q̃(H_i, H_j)` vanishes within tolerance.
    pub consistent: bool,
    /// First pair `(i, j)` with non-vanishing interference, if any.
    pub offending_pair: Option<(usize, usize)>,
    /// Diagonal values `Re Q̃(H_i, H_i)`. For a consistent family over a
    /// complete set of alternatives these form a probability distribution.
    pub diagonal: Vec<f64>,
    /// Tolerance used for the off-diagonal test.
    pub tolerance: f64,
}

/// Check whether a family of histories is consistent: all pairwise
/// interference terms `Q̃(H_i, H_j)`, `i ≠ j`, must vanish within `tol`.
///
/// Returns the diagonal quasi-probabilities alongside the verdict; when the
/// family is consistent and complete they are nonnegative and sum to 1, and
/// each may be read as the probability that its history happened.
pub fn family_consistent(family: &[History], tol: f64) -> Result<FamilyConsistency> {
    if family.len() < 2 {
        return Err(KdError::InvalidArgument(
            "a family needs at least two histories".into(),
        ));
    }
    let mut offending_pair = None;
    for i in 0..family.len() {
        for j in 0..family.len() {
            if i == j {
                continue;
            }
            let q = histories_overlap(&family[i], &family[j])?;
            if q.norm() > tol && offending_pair.is_none() {
                offending_pair = Some((i, j));
            }
        }
    }
    let mut diagonal = Vec::with_capacity(family.len());
    for h in family {
        diagonal.push(histories_overlap(h, h)?.re);
    }
    Ok(FamilyConsistency {
        consistent: offending_pair.is_none(),
        offending_pair,
        diagonal,
        tolerance: tol,
    })
}

/// The minimal family containing `h`: all `2^k` histories obtained by
/// replacing each chain property by itself or its complement `I - Π`.
///
/// Bit `l` of the history's position selects the complement in slot `l`;
/// position 0 is `h` itself. When this family is consistent, the question
/// "did `h` occur?" is meaningful.
pub fn minimal_family(h: &History) -> Result<Vec<History>> {
    let k = h.chain_len();
    if k == 0 {
        return Err(KdError::InvalidArgument(
            "history has no chain slots; the minimal family is trivial".into(),
        ));
    }
    if k > 20 {
        return Err(KdError::Capacity(format!(
            "minimal family of a chain of length {k} has 2^{k} members"
        )));
    }
    let mut family = Vec::with_capacity(1 << k);
    for mask in 0..(1usize << k) {
        let mut member = h.clone();
        for slot in 0..k {
            if (mask >> slot) & 1 == 1 {
                member = member.with_complement(slot)?;
            }
        }
        family.push(member);
    }
    Ok(family)
}

/// The KCBS pentagram: five real qutrit unit vectors with adjacent pairs
/// orthogonal, and the ±1 observables `Â^{(j)} = 2|v_j⟩⟨v_j| - I` built from
/// them. Each observable has spectrum {+1, -1, -1}.
#[derive(Debug, Clone)]
pub struct KcbsScenario {
    vectors: Vec<CVector>,
    observables: Vec<Operator>,
}

impl KcbsScenario {
    /// The pentagram vector `|v_j⟩`.
    pub fn vector(&self, j: usize) -> &CVector {
        &self.vectors[j]
    }

    /// The observable `Â^{(j)} = 2|v_j⟩⟨v_j| - I`.
    pub fn observable(&self, j: usize) -> &Operator {
        &self.observables[j]
    }

    /// Eigenbasis of `Â^{(j)}`: `|v_j⟩` (eigenvalue +1) followed by the two
    /// supplied completion vectors of the degenerate -1 eigenspace.
    ///
    /// The completion must be orthonormal and orthogonal to `|v_j⟩` within
    /// 1e-10.
    pub fn eigenbasis(&self, j: usize, completion: &[CVector]) -> Result<OrthonormalBasis> {
        if completion.len() != 2 {
            return Err(KdError::InvalidArgument(format!(
                "the -1 eigenspace of observable {j} is two-dimensional; got {} completion vectors",
                completion.len()
            )));
        }
        let v = &self.vectors[j];
        for (m, w) in completion.iter().enumerate() {
            if w.len() != 3 {
                return Err(KdError::DimensionMismatch(format!(
                    "completion vector {m} for observable {j} has dim {}",
                    w.len()
                )));
            }
            if w.dotc(v).norm() > 1e-10 {
                return Err(KdError::NotOrthonormal(format!(
                    "completion vector {m} for observable {j} is not orthogonal to |v_{j}⟩"
                )));
            }
        }
        // OrthonormalBasis::new validates mutual orthonormality of the trio.
        OrthonormalBasis::new(vec![v.clone(), completion[0].clone(), completion[1].clone()])
    }

    /// Deterministic default completion of each -1 eigenspace:
    /// Gram-Schmidt of the computational axes against `|v_j⟩`, keeping the
    /// first two that survive.
    pub fn default_completions(&self) -> Vec<Vec<CVector>> {
        self.vectors
            .iter()
            .map(|v| {
                let mut kept: Vec<CVector> = Vec::with_capacity(2);
                for axis in 0..3 {
                    if kept.len() == 2 {
                        break;
                    }
                    let mut w = CVector::zeros(3);
                    w[axis] = C64::new(1.0, 0.0);
                    w -= v * v.dotc(&w);
                    for k in &kept {
                        let overlap = k.dotc(&w);
                        w -= k * overlap;
                    }
                    let norm = w.norm();
                    if norm > 1e-6 {
                        kept.push(w.unscale(norm));
                    }
                }
                kept
            })
            .collect()
    }
}

/// Build the KCBS pentagram.
///
/// `|v_j⟩ = (sinθ sinφ_j, sinθ cosφ_j, cosθ)ᵀ` with `cosθ = 5^{-1/4}` and
/// `φ_j = ((2j + 1) mod 5)·(2π/5)`. The angle is exactly the one making
/// adjacent vectors orthogonal: `cos(4π/5) sin²θ + cos²θ = 0` at
/// `cos²θ = 1/√5`.
pub fn kcbs_scenario() -> KcbsScenario {
    let cos_theta = 1.0 / 5.0_f64.powf(0.25);
    let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
    let mut vectors = Vec::with_capacity(5);
    let mut observables = Vec::with_capacity(5);
    for j in 0..5 {
        let phi = (((2 * j + 1) % 5) as f64) * std::f64::consts::TAU / 5.0;
        let v = CVector::from_iterator(
            3,
            [
                sin_theta * phi.sin(),
                sin_theta * phi.cos(),
                cos_theta,
            ]
            .into_iter()
            .map(|x| C64::new(x, 0.0)),
        );
        let projector = Operator::projector(&v);
        observables.push(projector.scale(C64::new(2.0, 0.0)).sub(&Operator::identity(3)));
        vectors.push(v);
    }
    KcbsScenario { vectors, observables }
}

/// KCBS correlator `S = Σ_j ⟨Â^{(j)} Â^{(j+1 mod 5)}⟩_ρ` computed directly
/// from operator traces. Non-contextual deterministic hidden-variable models
/// obey `S ≥ -3`.
pub fn kcbs_s(rho: &Operator) -> Result<f64> {
    rho.require_density()?;
    if rho.dim() != 3 {
        return Err(KdError::InvalidDimension(format!(
            "KCBS is a qutrit scenario; got dim {}",
            rho.dim()
        )));
    }
    let scenario = kcbs_scenario();
    let mut s = 0.0;
    for j in 0..5 {
        let pair = scenario.observable(j).mul(scenario.observable((j + 1) % 5));
        s += pair.expectation_in(rho).re;
    }
    Ok(s)
}

/// The 5-extended KD distribution over the KCBS eigenbases,
///
/// `Q_{i_0,…,i_4} = ⟨a^{(4)}|a^{(3)}⟩⟨a^{(3)}|a^{(2)}⟩⋯⟨a^{(1)}|a^{(0)}⟩⟨a^{(0)}|ρ|a^{(4)}⟩`,
///
/// where axis `j` indexes the eigenbasis of `Â^{(j)}` (vector 0 ↦ +1, vectors
/// 1–2 ↦ -1). `completions` optionally supplies, per observable, the two
/// orthonormal vectors completing the degenerate -1 eigenspace; the
/// deterministic default is used when absent.
pub fn kcbs_extended_kd(
    rho: &Operator,
    completions: Option<&[Vec<CVector>]>,
) -> Result<KdDistribution> {
    rho.require_density()?;
    if rho.dim() != 3 {
        return Err(KdError::InvalidDimension(format!(
            "KCBS is a qutrit scenario; got dim {}",
            rho.dim()
        )));
    }
    let scenario = kcbs_scenario();
    let default;
    let chosen = match completions {
        Some(c) => {
            if c.len() != 5 {
                return Err(KdError::InvalidArgument(format!(
                    "need one completion per observable (5), got {}",
                    c.len()
                )));
            }
            c
        }
        None => {
            default = scenario.default_completions();
            &default
        }
    };
    let bases: Vec<OrthonormalBasis> = (0..5)
        .map(|j| scenario.eigenbasis(j, &chosen[j]))
        .collect::<Result<_>>()?;
    let refs: Vec<&OrthonormalBasis> = bases.iter().collect();
    extended_kd(rho, &refs)
}

/// KCBS correlator evaluated through the 5-extended KD distribution:
/// `S = Σ Q_{i_0,…,i_4} (a_{i_0}a_{i_1} + a_{i_1}a_{i_2} + … + a_{i_4}a_{i_0})`
/// with eigenvalues read off the index tuple. Agrees with [`kcbs_s`] for any
/// valid completion; when the distribution is entrywise positive the value
/// respects the non-contextual bound `S ≥ -3`.
pub fn kcbs_s_via_kd(rho: &Operator, completions: Option<&[Vec<CVector>]>) -> Result<f64> {
    let q = kcbs_extended_kd(rho, completions)?;
    let mut terms = Vec::with_capacity(q.values().len());
    for (idx, value) in q.iter() {
        let eig: Vec<f64> = idx.iter().map(|&i| dichotomic_eigenvalue(i)).collect();
        let weight: f64 = (0..5).map(|j| eig[j] * eig[(j + 1) % 5]).sum();
        terms.push(value * weight);
    }
    Ok(pairwise_sum(&terms).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::haar_random_unitary;
    use crate::nonclassicality::is_kd_positive;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    /// Qubit basis whose +1 axis lies in the x-z plane at polar angle
    /// `alpha` from +z.
    fn polar_basis(alpha: f64) -> OrthonormalBasis {
        let (s, co) = ((alpha / 2.0).sin(), (alpha / 2.0).cos());
        OrthonormalBasis::new(vec![
            CVector::from_iterator(2, [c(co, 0.0), c(s, 0.0)]),
            CVector::from_iterator(2, [c(-s, 0.0), c(co, 0.0)]),
        ])
        .unwrap()
    }

    fn random_qubit_basis(seed: u64) -> OrthonormalBasis {
        OrthonormalBasis::from_unitary_columns(&haar_random_unitary(2, seed).unwrap()).unwrap()
    }

    fn lg_operator_form(
        a_index: usize,
        a: &OrthonormalBasis,
        b: &OrthonormalBasis,
        c_basis: &OrthonormalBasis,
    ) -> f64 {
        let a_op = dichotomic_observable(a);
        let b_op = dichotomic_observable(b);
        let c_op = dichotomic_observable(c_basis);
        let combo = a_op.mul(&b_op).add(&b_op.mul(&c_op)).sub(&a_op.mul(&c_op));
        combo.expectation(a.vector(a_index)).re
    }

    #[test]
    fn lg_identical_observables_give_unity() {
        let basis = polar_basis(0.7);
        for a_index in 0..2 {
            let l = lg_correlator(a_index, &basis, &basis, &basis).unwrap();
            assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lg_equatorial_triple_reaches_three_halves() {
        let a = polar_basis(0.0);
        let b = polar_basis(std::f64::consts::PI / 3.0);
        let c_basis = polar_basis(2.0 * std::f64::consts::PI / 3.0);
        let l = lg_correlator(0, &a, &b, &c_basis).unwrap();
        assert_abs_diff_eq!(l, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn lg_matches_operator_form_on_random_triples() {
        for seed in 0..100u64 {
            let a = random_qubit_basis(3 * seed + 1);
            let b = random_qubit_basis(3 * seed + 2);
            let c_basis = random_qubit_basis(3 * seed + 3);
            for a_index in 0..2 {
                let l = lg_correlator(a_index, &a, &b, &c_basis).unwrap();
                let op = lg_operator_form(a_index, &a, &b, &c_basis);
                assert_abs_diff_eq!(l, op, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn lg_violation_requires_negative_real_part() {
        // Contrapositive on random triples: entrywise Re Q ≥ -1e-10 forces
        // L ≤ 1 (+ slack); and the known violating instance has a negative
        // real entry.
        for seed in 0..1000u64 {
            let a = random_qubit_basis(7 * seed + 1);
            let b = random_qubit_basis(7 * seed + 2);
            let c_basis = random_qubit_basis(7 * seed + 3);
            let q = lg_kd_distribution(0, &a, &b, &c_basis);
            let min_re = q.iter().flatten().map(|v| v.re).fold(f64::INFINITY, f64::min);
            let l = lg_correlator(0, &a, &b, &c_basis).unwrap();
            if min_re >= -1e-10 {
                assert!(l <= 1.0 + 1e-9, "positive-real KD but L = {l}");
            }
        }
        let a = polar_basis(0.0);
        let b = polar_basis(std::f64::consts::PI / 3.0);
        let c_basis = polar_basis(2.0 * std::f64::consts::PI / 3.0);
        let q = lg_kd_distribution(0, &a, &b, &c_basis);
        let min_re = q.iter().flatten().map(|v| v.re).fold(f64::INFINITY, f64::min);
        assert!(min_re < -1e-10, "violating instance should have Re Q < 0, min = {min_re}");
    }

    #[test]
    fn lg_weak_value_form_matches_kd_form() {
        for seed in 0..100u64 {
            let a = random_qubit_basis(11 * seed + 1);
            let b = random_qubit_basis(11 * seed + 2);
            let c_basis = random_qubit_basis(11 * seed + 3);
            for a_index in 0..2 {
                let report = lg_weak_value_form(a_index, &a, &b, &c_basis).unwrap();
                let l = lg_correlator(a_index, &a, &b, &c_basis).unwrap();
                assert_abs_diff_eq!(report.l, l, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn lg_violation_flags_anomalous_weak_value() {
        let a = polar_basis(0.0);
        let b = polar_basis(std::f64::consts::PI / 3.0);
        let c_basis = polar_basis(2.0 * std::f64::consts::PI / 3.0);
        let report = lg_weak_value_form(0, &a, &b, &c_basis).unwrap();
        assert!(report.l > 1.0);
        let term = report.terms.iter().find(|t| t.c_index == 0).unwrap();
        assert!(
            term.weak_value.re > 1.0,
            "Re B_w(a_1, c_1) = {} should exceed the top eigenvalue",
            term.weak_value.re
        );
        assert!(term.anomalous);
    }

    #[test]
    fn lg_commuting_triple_has_in_spectrum_weak_values() {
        let basis = polar_basis(0.4);
        let report = lg_weak_value_form(0, &basis, &basis, &basis).unwrap();
        for term in &report.terms {
            assert!(!term.anomalous);
            assert!(term.weak_value.re.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn lg_rejects_non_qubit_bases() {
        let qutrit = OrthonormalBasis::computational(3).unwrap();
        let qubit = polar_basis(0.3);
        assert!(lg_correlator(0, &qutrit, &qubit, &qubit).is_err());
        assert!(lg_correlator(2, &qubit, &qubit, &qubit).is_err());
    }

    // --- consistent histories ---

    fn beam_splitter() -> Operator {
        // exp(-i π/4 σ_y): a 50-50 beam-splitter on the path qubit.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Operator::from_fn(2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => c(s, 0.0),
            (0, 1) => c(-s, 0.0),
            (1, 0) => c(s, 0.0),
            _ => unreachable!(),
        })
        .unwrap()
    }

    fn ket(bits: &[C]) -> CVector {
        CVector::from_iterator(bits.len(), bits.iter().copied())
    }

    /// Mach-Zehnder history with a single intermediate property between the
    /// two beam-splitters.
    fn mz_history(projector: Operator) -> History {
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let one = ket(&[c(0.0, 0.0), c(1.0, 0.0)]);
        History::new(
            Operator::projector(&zero),
            vec![(1.0, projector)],
            Operator::projector(&one),
            vec![beam_splitter(), beam_splitter()],
        )
        .unwrap()
    }

    #[test]
    fn mz_which_path_family_is_inconsistent() {
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let h0 = mz_history(Operator::projector(&zero));
        let family = minimal_family(&h0).unwrap();
        assert_eq!(family.len(), 2);
        let q01 = histories_overlap(&family[0], &family[1]).unwrap();
        let q10 = histories_overlap(&family[1], &family[0]).unwrap();
        assert_abs_diff_eq!(q01.re, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(q01.im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q10.re, 0.25, epsilon = 1e-12);
        let verdict = family_consistent(&family, 1e-10).unwrap();
        assert!(!verdict.consistent);
        assert!(verdict.offending_pair.is_some());
    }

    #[test]
    fn mz_superposition_family_is_consistent_with_point_mass() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ket(&[c(s, 0.0), c(s, 0.0)]);
        let h_plus = mz_history(Operator::projector(&plus));
        let family = minimal_family(&h_plus).unwrap();
        let verdict = family_consistent(&family, 1e-10).unwrap();
        assert!(verdict.consistent);
        assert_eq!(verdict.offending_pair, None);
        assert_abs_diff_eq!(verdict.diagonal[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(verdict.diagonal[1], 0.0, epsilon = 1e-12);
        let sum: f64 = verdict.diagonal.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn commuting_projector_history_reproduces_born_probability() {
        // Trivial evolution, projector commuting with the initial state and
        // final event: the diagonal quasi-probability is the conditional
        // outcome probability.
        let d = 2;
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let identity = Operator::identity(d);
        let h = History::new(
            Operator::projector(&zero),
            vec![(1.0, Operator::projector(&zero))],
            Operator::projector(&zero),
            vec![identity.clone(), identity.clone()],
        )
        .unwrap();
        let q = histories_overlap(&h, &h).unwrap();
        assert_abs_diff_eq!(q.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.im, 0.0, epsilon = 1e-12);
        let family = minimal_family(&h).unwrap();
        let verdict = family_consistent(&family, 1e-10).unwrap();
        assert!(verdict.consistent);
    }

    #[test]
    fn minimal_family_covers_complement_combinations() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let plus = ket(&[c(s, 0.0), c(s, 0.0)]);
        let identity = Operator::identity(2);
        let h = History::new(
            Operator::projector(&zero),
            vec![(1.0, Operator::projector(&zero)), (2.0, Operator::projector(&plus))],
            Operator::projector(&zero),
            vec![identity.clone(), identity.clone(), identity.clone()],
        )
        .unwrap();
        let family = minimal_family(&h).unwrap();
        assert_eq!(family.len(), 4);
        // Every combination of (Π or I-Π) per slot appears exactly once.
        for (mask, member) in family.iter().enumerate() {
            for slot in 0..2 {
                let expected = if (mask >> slot) & 1 == 1 {
                    identity.sub(&h.projectors()[slot])
                } else {
                    h.projectors()[slot].clone()
                };
                assert!(member.projectors()[slot].frobenius_distance(&expected) < 1e-12);
            }
        }
        // Completeness: the full double sum of interference terms is 1, so
        // the diagonal of any (even inconsistent) family plus off-diagonals
        // telescopes; for a consistent family the diagonal alone sums to 1.
        let verdict = family_consistent(&family, 1e-10).unwrap();
        if verdict.consistent {
            let sum: f64 = verdict.diagonal.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn diagonal_overlap_is_real_nonnegative() {
        for seed in 0..20u64 {
            let u = haar_random_unitary(3, seed + 1).unwrap();
            let basis = OrthonormalBasis::from_unitary_columns(&u).unwrap();
            let evo = haar_random_unitary(3, seed + 100).unwrap();
            let evo2 = haar_random_unitary(3, seed + 200).unwrap();
            let h = History::new(
                Operator::projector(basis.vector(0)),
                vec![(0.5, basis.projector(1).add(&basis.projector(0)))],
                Operator::projector(basis.vector(2)),
                vec![evo, evo2],
            );
            let h = match h {
                Ok(h) => h,
                Err(_) => continue,
            };
            match histories_overlap(&h, &h) {
                Ok(q) => {
                    assert!(q.re >= -1e-12, "Q̃(H,H) = {q} should be real nonnegative");
                    assert_abs_diff_eq!(q.im, 0.0, epsilon = 1e-12);
                }
                Err(KdError::ZeroProbability(_)) => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn history_constructor_validates_inputs() {
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let rho = Operator::projector(&zero);
        let proj = Operator::projector(&zero);
        let identity = Operator::identity(2);
        // Non-idempotent chain element.
        let bad = proj.scale(c(0.5, 0.0));
        assert!(History::new(
            rho.clone(),
            vec![(1.0, bad)],
            proj.clone(),
            vec![identity.clone(), identity.clone()]
        )
        .is_err());
        // Wrong evolution count.
        assert!(History::new(
            rho.clone(),
            vec![(1.0, proj.clone())],
            proj.clone(),
            vec![identity.clone()]
        )
        .is_err());
        // Non-increasing times.
        assert!(History::new(
            rho.clone(),
            vec![(2.0, proj.clone()), (1.0, proj.clone())],
            proj.clone(),
            vec![identity.clone(), identity.clone(), identity.clone()]
        )
        .is_err());
        // Final event not rank-1.
        assert!(History::new(
            rho.clone(),
            vec![(1.0, proj.clone())],
            identity.clone(),
            vec![identity.clone(), identity.clone()]
        )
        .is_err());
    }

    #[test]
    fn orthogonal_final_event_reports_vanishing_normalizer() {
        let zero = ket(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let one = ket(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let identity = Operator::identity(2);
        let h = History::new(
            Operator::projector(&zero),
            vec![(1.0, Operator::projector(&zero))],
            Operator::projector(&one),
            vec![identity.clone(), identity.clone()],
        )
        .unwrap();
        assert!(matches!(
            histories_overlap(&h, &h),
            Err(KdError::ZeroProbability(_))
        ));
    }

    // --- KCBS ---

    #[test]
    fn kcbs_adjacent_vectors_are_orthogonal() {
        let scenario = kcbs_scenario();
        for j in 0..5 {
            let overlap = scenario.vector((j + 1) % 5).dotc(scenario.vector(j)).norm();
            assert!(overlap < 1e-12, "⟨v_{}|v_{}⟩ = {overlap}", j, (j + 1) % 5);
            assert_abs_diff_eq!(scenario.vector(j).norm(), 1.0, epsilon = 1e-12);
        }
        // The closed-form orthogonality condition at cos²θ = 1/√5.
        let cos2 = 1.0 / 5.0_f64.sqrt();
        let lhs = (4.0 * std::f64::consts::PI / 5.0).cos() * (1.0 - cos2) + cos2;
        assert_abs_diff_eq!(lhs, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kcbs_observables_have_pentagram_spectrum() {
        let scenario = kcbs_scenario();
        for j in 0..5 {
            let mut eigs = crate::hilbert::hermitian_eigenvalues(scenario.observable(j)).unwrap();
            eigs.sort_by(f64::total_cmp);
            assert_abs_diff_eq!(eigs[0], -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(eigs[1], -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(eigs[2], 1.0, epsilon = 1e-12);
        }
        // Adjacent observables commute (shared orthogonal rank-1 pieces).
        for j in 0..5 {
            let a = scenario.observable(j);
            let b = scenario.observable((j + 1) % 5);
            assert!(a.mul(b).frobenius_distance(&b.mul(a)) < 1e-12);
        }
    }

    #[test]
    fn kcbs_axis_state_violates_noncontextual_bound() {
        let psi = ket(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let rho = Operator::projector(&psi);
        let expected = 5.0 - 4.0 * 5.0_f64.sqrt();
        let s = kcbs_s(&rho).unwrap();
        assert_abs_diff_eq!(s, expected, epsilon = 1e-12);
        assert!(s < -3.0);
        let s_kd = kcbs_s_via_kd(&rho, None).unwrap();
        assert_abs_diff_eq!(s_kd, expected, epsilon = 1e-9);
        // The violation is certified by non-positivity of the 5-extended
        // distribution.
        let q = kcbs_extended_kd(&rho, None).unwrap();
        let verdict = is_kd_positive(&q, 1e-10);
        assert!(!verdict.is_positive);
    }

    #[test]
    fn kcbs_maximally_mixed_state_is_classical() {
        let rho = Operator::new(CMatrix::identity(3, 3).unscale(3.0)).unwrap();
        let s = kcbs_s(&rho).unwrap();
        // Adjacent projectors are orthogonal, so each ⟨A A'⟩ = 1 - 4/3·⟨P⟩
        // with ⟨P⟩ = 1/3: every term is -1/3.
        assert_abs_diff_eq!(s, -5.0 / 3.0, epsilon = 1e-12);
        assert!(s >= -3.0);
        let s_kd = kcbs_s_via_kd(&rho, None).unwrap();
        assert_abs_diff_eq!(s_kd, s, epsilon = 1e-9);
    }

    #[test]
    fn kcbs_kd_form_matches_direct_on_random_states() {
        for seed in 0..20u64 {
            let psi = crate::hilbert::haar_random_state(3, seed + 1).unwrap();
            let rho = Operator::projector(&psi);
            let s = kcbs_s(&rho).unwrap();
            let s_kd = kcbs_s_via_kd(&rho, None).unwrap();
            assert_abs_diff_eq!(s_kd, s, epsilon = 1e-9);
            // Positivity ⇒ classical bound.
            let q = kcbs_extended_kd(&rho, None).unwrap();
            if is_kd_positive(&q, 1e-10).is_positive {
                assert!(s_kd >= -3.0 - 1e-9);
            }
        }
    }

    #[test]
    fn kcbs_value_is_completion_invariant() {
        let psi = ket(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let rho = Operator::projector(&psi);
        let scenario = kcbs_scenario();
        let reference = kcbs_s_via_kd(&rho, None).unwrap();
        // Rotate each default completion pair by a j-dependent angle; any
        // orthonormal completion of the -1 eigenspace must give the same S.
        let defaults = scenario.default_completions();
        let rotated: Vec<Vec<CVector>> = defaults
            .iter()
            .enumerate()
            .map(|(j, pair)| {
                let angle = 0.3 + 0.4 * j as f64;
                let (s, co) = (angle.sin(), angle.cos());
                vec![
                    &pair[0] * c(co, 0.0) + &pair[1] * c(s, 0.1 * s),
                    &pair[0] * c(-s, 0.1 * s) + &pair[1] * c(co, 0.0),
                ]
            })
            .map(|pair| {
                // Re-orthonormalize after the complex tweak.
                let w0 = pair[0].unscale(pair[0].norm());
                let mut w1 = pair[1].clone();
                let overlap = w0.dotc(&w1);
                w1 -= &w0 * overlap;
                vec![w0, w1.unscale(w1.norm())]
            })
            .collect();
        let alt = kcbs_s_via_kd(&rho, Some(&rotated)).unwrap();
        assert_abs_diff_eq!(alt, reference, epsilon = 1e-9);
    }

    #[test]
    fn kcbs_rejects_bad_completions() {
        let psi = ket(&[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let rho = Operator::projector(&psi);
        let scenario = kcbs_scenario();
        // Completion vector not orthogonal to |v_j⟩.
        let mut bad = scenario.default_completions();
        bad[2][0] = scenario.vector(2).clone();
        assert!(kcbs_s_via_kd(&rho, Some(&bad)).is_err());
        // Wrong count.
        let short: Vec<Vec<CVector>> = scenario.default_completions().into_iter().take(3).collect();
        assert!(kcbs_s_via_kd(&rho, Some(&short)).is_err());
    }

    #[test]
    fn kcbs_rejects_non_qutrit_states() {
        let rho = Operator::new(CMatrix::identity(2, 2).unscale(2.0)).unwrap();
        assert!(kcbs_s(&rho).is_err());
        assert!(kcbs_s_via_kd(&rho, None).is_err());
    }
}
