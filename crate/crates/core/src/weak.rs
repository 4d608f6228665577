//! Weak values, Gaussian-meter (von Neumann) measurement simulation,
//! weak-value-amplification SNR, and the ancilla circuit that measures KD
//! quasi-probabilities.
//!
//! The meter is represented analytically as a superposition (or incoherent
//! mixture) of Gaussian wave packets; all means and norms are computed from
//! closed-form Gaussian overlap integrals, so the O(g²) error statements can
//! be tested without any discretization error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KdError, Result};
use crate::hilbert::{hermitian_eigensystem, C64, CMatrix, CVector, Operator, OrthonormalBasis};
use crate::kd::{extended_kd, KdDistribution};
use crate::nonclassicality::require_mub;

/// One Gaussian wave-packet component: amplitude × φ(x - center) with
/// position-space width sigma (φ normalized, |φ|² has standard deviation
/// sigma).
#[derive(Debug, Clone, PartialEq)]
pub struct MeterComponent {
    pub amplitude: C64,
    pub center: f64,
    pub sigma: f64,
}

/// A meter state: coherent superposition or incoherent mixture of Gaussian
/// packets. Normalized on construction via exact overlap integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeter {
    components: Vec<MeterComponent>,
    /// Superposition (true) vs classical mixture (false).
    coherent: bool,
}

/// ∫ φ_{a,σ1}(x) φ_{b,σ2}(x) dx for normalized real Gaussian packets.
fn gaussian_overlap(a: f64, s1: f64, b: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    (2.0 * s1 * s2 / v).sqrt() * (-(a - b) * (a - b) / (4.0 * v)).exp()
}

/// ∫ φ_{a,σ1}(x) x φ_{b,σ2}(x) dx.
fn gaussian_x_overlap(a: f64, s1: f64, b: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    gaussian_overlap(a, s1, b, s2) * (a * s2 * s2 + b * s1 * s1) / v
}

impl GaussianMeter {
    /// Build and normalize. `coherent` selects superposition vs mixture
    /// semantics for the norm and the mean.
    pub fn new(components: Vec<MeterComponent>, coherent: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(KdError::InvalidArgument("meter needs at least one component".into()));
        }
        for c in &components {
            if c.sigma <= 0.0 {
                return Err(KdError::InvalidArgument("meter width must be positive".into()));
            }
        }
        let mut meter = Self { components, coherent };
        let n = meter.norm_sq();
        if n <= 1e-300 {
            return Err(KdError::InvalidArgument("meter state has vanishing norm".into()));
        }
        let scale = C64::new(1.0 / n.sqrt(), 0.0);
        for c in &mut meter.components {
            c.amplitude *= scale;
        }
        Ok(meter)
    }

    pub fn components(&self) -> &[MeterComponent] {
        &self.components
    }

    pub fn is_coherent(&self) -> bool {
        self.coherent
    }

    /// Squared norm via exact overlaps (coherent) or weight sum (mixture).
    pub fn norm_sq(&self) -> f64 {
        if self.coherent {
            let mut acc = 0.0;
            for m in &self.components {
                for n in &self.components {
                    let o = gaussian_overlap(m.center, m.sigma, n.center, n.sigma);
                    acc += (m.amplitude.conj() * n.amplitude).re * o;
                }
            }
            acc
        } else {
            self.components.iter().map(|c| c.amplitude.norm_sqr()).sum()
        }
    }

    /// Mean pointer position ⟨x⟩.
    pub fn mean_position(&self) -> f64 {
        if self.coherent {
            let mut num = 0.0;
            for m in &self.components {
                for n in &self.components {
                    let o = gaussian_x_overlap(m.center, m.sigma, n.center, n.sigma);
                    num += (m.amplitude.conj() * n.amplitude).re * o;
                }
            }
            num / self.norm_sq()
        } else {
            let num: f64 = self.components.iter().map(|c| c.amplitude.norm_sqr() * c.center).sum();
            num / self.norm_sq()
        }
    }
}

/// Weak value ⟨ψ_f|A|ψ_i⟩ / ⟨ψ_f|ψ_i⟩.
///
/// For a projector A = |a_i⟩⟨a_i| with ψ_f a basis state |b_j⟩ this equals
/// the conditional KD quasi-probability Q_{i|j}; values outside A's spectrum
/// are "anomalous" and require KD non-positivity.
pub fn weak_value(a: &Operator, psi_i: &CVector, psi_f: &CVector) -> Result<C64> {
    if a.dim() != psi_i.len() || a.dim() != psi_f.len() {
        return Err(KdError::DimensionMismatch("operator and states must share a dimension".into()));
    }
    let ovl = psi_f.dotc(psi_i);
    if ovl.norm() <= 1e-12 {
        return Err(KdError::UndefinedWeakValue);
    }
    Ok(a.sandwich(psi_f, psi_i) / ovl)
}

/// Pointer momentum-shift observable g·Im(A_w)/σ² accompanying an imaginary
/// weak value (reported, not grid-simulated).
pub fn imaginary_shift(g: f64, sigma: f64, weak_val: C64) -> f64 {
    g * weak_val.im / (sigma * sigma)
}

/// Exact von Neumann measurement simulation with a Gaussian meter.
///
/// Couples the system observable to the pointer with strength `g`
/// (interaction exp(-i g A ⊗ p̂)), producing the entangled state
/// Σ_i ⟨a_i|ψ_i⟩ |a_i⟩ φ(x - g a_i). With post-selection onto ψ_f, returns
/// the (renormalized) coherent pointer superposition and the success
/// probability; without, returns the incoherent pointer mixture and
/// probability 1.
pub fn simulate_von_neumann(
    psi_i: &CVector,
    a: &Operator,
    g: f64,
    sigma: f64,
    post_select: Option<&CVector>,
) -> Result<(GaussianMeter, f64)> {
    if g <= 0.0 || sigma <= 0.0 {
        return Err(KdError::InvalidArgument("coupling and width must be positive".into()));
    }
    let (eigenvalues, basis) = hermitian_eigensystem(a)?;
    let d = a.dim();
    match post_select {
        Some(psi_f) => {
            let comps: Vec<MeterComponent> = (0..d)
                .map(|i| MeterComponent {
                    amplitude: psi_f.dotc(basis.vector(i)) * basis.vector(i).dotc(psi_i),
                    center: g * eigenvalues[i],
                    sigma,
                })
                .collect();
            // success probability = squared norm of the unnormalized meter
            let unnorm = GaussianMeter { components: comps.clone(), coherent: true };
            let p = unnorm.norm_sq();
            if p <= 1e-300 {
                return Err(KdError::ZeroProbability(p));
            }
            Ok((GaussianMeter::new(comps, true)?, p))
        }
        None => {
            let comps: Vec<MeterComponent> = (0..d)
                .map(|i| MeterComponent {
                    amplitude: basis.vector(i).dotc(psi_i),
                    center: g * eigenvalues[i],
                    sigma,
                })
                .collect();
            Ok((GaussianMeter::new(comps, false)?, 1.0))
        }
    }
}

/// Weak average Tr(Π_{b_j} Π_{a_i} ρ): the sequential weak-measurement
/// average of the two projectors. Identical to the standard KD entry
/// Q_{i,j}(ρ).
pub fn weak_average(
    rho: &Operator,
    a: &OrthonormalBasis,
    a_index: usize,
    b: &OrthonormalBasis,
    b_index: usize,
) -> Result<C64> {
    if rho.dim() != a.dim() || rho.dim() != b.dim() {
        return Err(KdError::DimensionMismatch("state and bases must share a dimension".into()));
    }
    let ai = a.vector(a_index);
    let bj = b.vector(b_index);
    // Tr(|b><b| |a><a| rho) = <b|a><a|rho|b>
    Ok(bj.dotc(ai) * rho.sandwich(ai, bj))
}

/// Signal-to-noise comparison of standard vs weak-value-amplified estimation
/// of a small coupling g.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    /// √N · g / σ.
    pub snr_standard: f64,
    /// √(N p_ps) · A_w · g / σ with p_ps = |⟨ψ_f|ψ_i⟩|².
    pub snr_weak_value: f64,
    /// snr_weak_value / snr_standard = ⟨ψ_f|A|ψ_i⟩ (up to sign conventions).
    pub ratio: C64,
}

/// SNRs for estimating g from N trials; requires a real weak value (this
/// estimator reads the position shift only).
pub fn wva_snr(
    g: f64,
    sigma: f64,
    n_trials: f64,
    psi_i: &CVector,
    psi_f: &CVector,
    a: &Operator,
) -> Result<SnrReport> {
    if g < 0.0 || sigma <= 0.0 || n_trials < 0.0 {
        return Err(KdError::InvalidArgument("parameters must be nonnegative (sigma positive)".into()));
    }
    let aw = weak_value(a, psi_i, psi_f)?;
    if aw.im.abs() > 1e-9 {
        return Err(KdError::Unsupported(format!(
            "weak value {aw} has an imaginary part; the position-shift SNR formula needs a real weak value"
        )));
    }
    let overlap_sq = psi_f.dotc(psi_i).norm_sqr();
    let snr_standard = n_trials.sqrt() * g / sigma;
    let snr_weak_value = (n_trials * overlap_sq).sqrt() * aw.re * g / sigma;
    let ratio = a.sandwich(psi_f, psi_i);
    Ok(SnrReport { snr_standard, snr_weak_value, ratio })
}

/// Specification of one run of the KD-measuring ancilla circuit.
#[derive(Debug, Clone)]
pub struct CircuitSpec {
    /// State under measurement.
    pub rho: Operator,
    /// Ordered measurement bases (basis 0 adjacent to ρ, as in
    /// [`extended_kd`]).
    pub bases: Vec<OrthonormalBasis>,
    /// Index tuple selecting the KD entry.
    pub indices: Vec<usize>,
    /// 0: measure the real part; 1: the imaginary part.
    pub s: u8,
    /// 0 means exact probabilities; > 0 enables sampling.
    pub shots: u64,
    /// RNG seed for sampling.
    pub seed: u64,
}

/// Exact ancilla-|0⟩ probability of the KD-measurement circuit.
///
/// The circuit: ancilla Hadamard, phase gate on the ancilla for s = 1,
/// a controlled cyclic shift of the k+1 registers (system plus one register
/// per basis vector), final Hadamard, measure the ancilla. The simulation
/// carries the full composite statevector of dimension 2·d^{k+1}. Outcomes:
/// P_0 = [1 + Re Q]/2 for s = 0 and [1 + Im Q]/2 for s = 1, with Q the
/// extended-KD entry at `indices`. (The s = 1 phase gate is diag(1, -i);
/// diag(1, i) would flip the sign of the imaginary part.)
pub fn circuit_probability(spec: &CircuitSpec) -> Result<f64> {
    let d = spec.rho.dim();
    let k = spec.bases.len();
    if k < 2 {
        return Err(KdError::InvalidArgument("circuit needs at least two bases".into()));
    }
    if spec.indices.len() != k {
        return Err(KdError::DimensionMismatch("one index per basis required".into()));
    }
    for b in &spec.bases {
        if b.dim() != d {
            return Err(KdError::DimensionMismatch("register dimensions must match the state".into()));
        }
    }
    if d.pow(k as u32) > 4096 {
        return Err(KdError::Capacity(format!("d^k = {} exceeds the circuit cap 4096", d.pow(k as u32))));
    }
    if spec.s > 1 {
        return Err(KdError::InvalidArgument("s must be 0 or 1".into()));
    }
    spec.rho.require_density()?;

    // Mixed states: the probability is linear in rho, so run the pure
    // statevector circuit on each eigenvector and average.
    let (weights, eigbasis) = hermitian_eigensystem(&spec.rho)?;
    let mut p0 = 0.0;
    for (w, psi) in weights.iter().zip(eigbasis.vectors()) {
        if *w < 1e-14 {
            continue;
        }
        p0 += w * pure_circuit_probability(psi, spec)?;
    }
    Ok(p0)
}

fn pure_circuit_probability(psi: &CVector, spec: &CircuitSpec) -> Result<f64> {
    let d = psi.len();
    let k = spec.bases.len();
    let n_regs = k + 1; // system + one register per basis
    let reg_dim = d.pow(n_regs as u32);

    // |Psi> = psi (x) |a^{(1)}_{i_1}> (x) ... (x) |a^{(k)}_{i_k}>
    let mut regs: Vec<&CVector> = vec![psi];
    for (b, &i) in spec.bases.iter().zip(&spec.indices) {
        regs.push(b.vector(i));
    }
    let big = crate::hilbert::tensor_product_states(&regs)?;

    // full composite with ancilla: amp[anc * reg_dim + r]
    let mut state = vec![C64::new(0.0, 0.0); 2 * reg_dim];
    for (r, &v) in big.iter().enumerate() {
        state[r] = v; // ancilla |0>
    }

    let h = 1.0 / 2.0_f64.sqrt();
    let hadamard = |state: &mut Vec<C64>| {
        for r in 0..reg_dim {
            let a0 = state[r];
            let a1 = state[reg_dim + r];
            state[r] = (a0 + a1) * h;
            state[reg_dim + r] = (a0 - a1) * h;
        }
    };

    hadamard(&mut state);

    if spec.s == 1 {
        // phase gate on the ancilla |1> branch
        let phase = C64::new(0.0, -1.0);
        for r in 0..reg_dim {
            state[reg_dim + r] *= phase;
        }
    }

    // controlled cyclic shift on the ancilla |1> branch:
    // factor ending at register 0 came from register k; factor at position p
    // came from position p-1.
    let mut shifted = vec![C64::new(0.0, 0.0); reg_dim];
    let mut digits = vec![0usize; n_regs];
    for r in 0..reg_dim {
        let mut rem = r;
        for p in (0..n_regs).rev() {
            digits[p] = rem % d;
            rem /= d;
        }
        // source index: (digits[1], digits[2], ..., digits[k], digits[0])
        let mut src = 0usize;
        for p in 1..n_regs {
            src = src * d + digits[p];
        }
        src = src * d + digits[0];
        shifted[r] = state[reg_dim + src];
    }
    for (r, v) in shifted.into_iter().enumerate() {
        state[reg_dim + r] = v;
    }

    hadamard(&mut state);

    let p0: f64 = state[..reg_dim].iter().map(|z| z.norm_sqr()).sum();
    Ok(p0)
}

/// splitmix64 step, used to derive per-batch sampling seeds.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo estimate of the circuit probability: `shots` Bernoulli draws
/// against the exact probability, batched with splitmix-derived seeds so the
/// result is deterministic for a fixed (spec, seed).
/// Returns (estimate, standard error).
pub fn circuit_sample(spec: &CircuitSpec) -> Result<(f64, f64)> {
    if spec.shots == 0 {
        return Err(KdError::InvalidArgument("sampling needs shots >= 1 (use circuit_probability for exact)".into()));
    }
    let p = circuit_probability(spec)?;
    let mut master = spec.seed;
    let batch = 10_000u64;
    let mut remaining = spec.shots;
    let mut successes = 0u64;
    while remaining > 0 {
        let this = remaining.min(batch);
        let seed = splitmix64(&mut master);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..this {
            if rng.gen::<f64>() < p {
                successes += 1;
            }
        }
        remaining -= this;
    }
    let est = successes as f64 / spec.shots as f64;
    let se = (est * (1.0 - est) / spec.shots as f64).sqrt();
    Ok((est, se))
}

/// Exact KD entry that the circuit pair (s=0, s=1) reconstructs, for
/// cross-checking: Re from s=0 plus i·Im from s=1.
pub fn circuit_reconstruct_entry(spec: &CircuitSpec) -> Result<C64> {
    let mut s0 = spec.clone();
    s0.s = 0;
    let mut s1 = spec.clone();
    s1.s = 1;
    let re = 2.0 * circuit_probability(&s0)? - 1.0;
    let im = 2.0 * circuit_probability(&s1)? - 1.0;
    Ok(C64::new(re, im))
}

/// Recover ⟨a_i|ρ|a_j⟩ from the three-projector sequence
/// Q_{i,k,j} = Tr(Π_{a_i} Π_{b_k} Π_{a_j} ρ) with B mutually unbiased to A.
///
/// Each fixed k determines the full matrix (the MUB overlaps are invertible
/// phases); the k = 0 reconstruction is used, reconstructions from every
/// other k are validated to agree within 1e-9, and the trace is normalized
/// to 1 to fix the overall constant.
pub fn three_point_density(rho: &Operator, a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<Operator> {
    require_mub(a, b, 1e-9)?;
    rho.require_density()?;
    let d = rho.dim();
    let q = |i: usize, k: usize, j: usize| -> C64 {
        // Tr(P_ai P_bk P_aj rho) = <a_i|b_k><b_k|a_j><a_j|rho|a_i>
        a.vector(i).dotc(b.vector(k)) * b.vector(k).dotc(a.vector(j)) * rho.sandwich(a.vector(j), a.vector(i))
    };
    let recover = |k: usize| -> CMatrix {
        CMatrix::from_fn(d, d, |i, j| {
            // rho_{a_j, a_i} = Q_{i,k,j} / (<a_i|b_k><b_k|a_j>), so swap roles
            let denom = a.vector(j).dotc(b.vector(k)) * b.vector(k).dotc(a.vector(i));
            q(j, k, i) / denom
        })
    };
    let base = recover(0);
    for k in 1..d {
        let other = recover(k);
        if (&other - &base).norm() > 1e-9 {
            return Err(KdError::InvalidArgument(format!(
                "three-point reconstructions from k = 0 and k = {k} disagree"
            )));
        }
    }
    // express back in the computational representation and fix the trace
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m += (a.vector(i) * a.vector(j).adjoint()) * base[(i, j)];
        }
    }
    let tr = m.trace();
    if tr.norm() <= 1e-12 {
        return Err(KdError::ZeroProbability(tr.norm()));
    }
    Operator::new(m / tr)
}

/// Convenience: the full KD distribution alongside exact circuit checks for
/// each entry (used by tests and the CLI).
pub fn circuit_matches_kd(spec_template: &CircuitSpec) -> Result<(KdDistribution, f64)> {
    let bases: Vec<&OrthonormalBasis> = spec_template.bases.iter().collect();
    let q = extended_kd(&spec_template.rho, &bases)?;
    let mut worst = 0.0_f64;
    for (idx, v) in q.iter() {
        let mut spec = spec_template.clone();
        spec.indices = idx;
        let got = circuit_reconstruct_entry(&spec)?;
        worst = worst.max((got - v).norm());
    }
    Ok((q, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{haar_random_state, haar_random_unitary, make_dft_basis};
    use crate::kd::{condition_on_outcome, standard_kd};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_basis(d: usize, seed: u64) -> OrthonormalBasis {
        OrthonormalBasis::from_unitary_columns(&haar_random_unitary(d, seed).unwrap()).unwrap()
    }

    fn pi8_state() -> CVector {
        let t = std::f64::consts::PI / 8.0;
        CVector::from_vec(vec![c(t.cos(), 0.0), c(t.sin(), 0.0)])
    }

    fn pauli_z() -> Operator {
        Operator::from_fn(2, |i, j| if i == j { c(if i == 0 { 1.0 } else { -1.0 }, 0.0) } else { c(0.0, 0.0) }).unwrap()
    }

    fn minus_state() -> CVector {
        let s = 1.0 / 2.0_f64.sqrt();
        CVector::from_vec(vec![c(s, 0.0), c(-s, 0.0)])
    }

    #[test]
    fn weak_value_reduces_to_expectation() {
        let a = pauli_z();
        let psi = pi8_state();
        let wv = weak_value(&a, &psi, &psi).unwrap();
        let expval = a.expectation(&psi);
        assert!((wv - expval).norm() < 1e-12);
    }

    #[test]
    fn anomalous_weak_value_matches_conditional_kd() {
        // A = |0><0|, psi_i = cos(pi/8)|0> + sin(pi/8)|1>, psi_f = |->
        let proj0 = Operator::from_fn(2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        let psi = pi8_state();
        let wv = weak_value(&proj0, &psi, &minus_state()).unwrap();
        assert!(wv.re > 1.0, "weak value {wv} should be anomalous");
        assert!(wv.im.abs() < 1e-12);

        // equals the conditional KD entry Q_{0|j=-}
        let q = standard_kd(
            &Operator::projector(&psi),
            &OrthonormalBasis::computational(2).unwrap(),
            &make_dft_basis(2).unwrap(),
        )
        .unwrap();
        let cond = condition_on_outcome(&q, 1, 1).unwrap();
        assert!((wv - cond.get(&[0])).norm() < 1e-10);
    }

    #[test]
    fn weak_value_summation_condition() {
        for seed in 0..20 {
            let d = 3;
            let psi = haar_random_state(d, seed + 10).unwrap();
            let b = random_basis(d, seed + 500);
            let u = haar_random_unitary(d, seed + 900).unwrap();
            let a = Operator::new((u.matrix() + u.matrix().adjoint()) * c(0.5, 0.0)).unwrap();
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..d {
                let p = b.vector(j).dotc(&psi).norm_sqr();
                if p < 1e-14 {
                    continue;
                }
                acc += weak_value(&a, &psi, b.vector(j)).unwrap() * c(p, 0.0);
            }
            let expval = a.expectation(&psi);
            assert!((acc - expval).norm() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn weak_value_rejects_orthogonal_selection() {
        let comp = OrthonormalBasis::computational(2).unwrap();
        let err = weak_value(&pauli_z(), comp.vector(0), comp.vector(1)).unwrap_err();
        assert!(matches!(err, KdError::UndefinedWeakValue));
    }

    #[test]
    fn single_eigenvalue_meter_is_one_gaussian() {
        // A = 2·I has one eigenvalue; meter centered at 2g
        let a = Operator::identity(2).scale(c(2.0, 0.0));
        let psi = pi8_state();
        let (meter, p) = simulate_von_neumann(&psi, &a, 0.1, 1.0, None).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(meter.mean_position(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn weak_regime_mean_shift_tracks_re_weak_value() {
        let proj0 = Operator::from_fn(2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        let psi = pi8_state();
        let psi_f = minus_state();
        let sigma = 1.0;
        let g = 1e-3 * sigma;
        let (meter, _) = simulate_von_neumann(&psi, &proj0, g, sigma, Some(&psi_f)).unwrap();
        let aw = weak_value(&proj0, &psi, &psi_f).unwrap();
        let err = (meter.mean_position() - g * aw.re).abs();
        assert!(err < 10.0 * g * g / sigma, "error {err} too large");
    }

    #[test]
    fn mean_shift_error_scales_as_g_squared() {
        let proj0 = Operator::from_fn(2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        let psi = pi8_state();
        let psi_f = minus_state();
        let sigma = 1.0;
        let aw = weak_value(&proj0, &psi, &psi_f).unwrap();
        // the per-unit-coupling shift converges to Re A_w at O(g²); the raw
        // mean error is one order higher because the pointer mean is odd in g
        let err_at = |g: f64| -> f64 {
            let (meter, _) = simulate_von_neumann(&psi, &proj0, g, sigma, Some(&psi_f)).unwrap();
            (meter.mean_position() / g - aw.re).abs()
        };
        let ratio = err_at(1e-2) / err_at(1e-3);
        assert!((50.0..=200.0).contains(&ratio), "scaling ratio {ratio} outside [50, 200]");
    }

    #[test]
    fn postselection_probability_scaling() {
        let proj0 = Operator::from_fn(2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        let psi = pi8_state();
        let psi_f = minus_state();
        let base = psi_f.dotc(&psi).norm_sqr();
        let err_at = |g: f64| -> f64 {
            let (_, p) = simulate_von_neumann(&psi, &proj0, g, 1.0, Some(&psi_f)).unwrap();
            (p - base).abs()
        };
        let ratio = err_at(1e-2) / err_at(1e-3);
        assert!((50.0..=200.0).contains(&ratio), "p_ps scaling ratio {ratio}");
    }

    #[test]
    fn weak_average_is_kd_entry() {
        let d = 3;
        let psi = haar_random_state(d, 3).unwrap();
        let rho = Operator::projector(&psi);
        let a = random_basis(d, 4);
        let b = random_basis(d, 5);
        let q = standard_kd(&rho, &a, &b).unwrap();
        let mut total = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                let wa = weak_average(&rho, &a, i, &b, j).unwrap();
                assert!((wa - q.get(&[i, j])).norm() < 1e-12);
                total += wa;
            }
        }
        assert!((total - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn snr_identities() {
        let psi = pi8_state();
        let psi_f = minus_state();
        let proj0 = Operator::from_fn(2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
        let r = wva_snr(1e-3, 1.0, 1e6, &psi, &psi_f, &proj0).unwrap();
        // ratio of the two SNRs equals |<psi_f|A|psi_i>|
        let expected = proj0.sandwich(&psi_f, &psi).norm();
        assert_abs_diff_eq!((r.snr_weak_value / r.snr_standard).abs(), expected, epsilon = 1e-10);
        assert_abs_diff_eq!(r.ratio.norm(), expected, epsilon = 1e-12);

        // g = 0: both zero
        let r0 = wva_snr(0.0, 1.0, 1e6, &psi, &psi_f, &proj0).unwrap();
        assert_eq!(r0.snr_standard, 0.0);
        assert_eq!(r0.snr_weak_value, 0.0);
    }

    #[test]
    fn circuit_diagonal_entry_probability_one() {
        let comp = OrthonormalBasis::computational(2).unwrap();
        let rho = Operator::projector(comp.vector(0));
        let spec = CircuitSpec {
            rho,
            bases: vec![comp.clone(), comp.clone()],
            indices: vec![0, 0],
            s: 0,
            shots: 0,
            seed: 0,
        };
        assert_abs_diff_eq!(circuit_probability(&spec).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn circuit_pi8_worked_entry() {
        let rho = Operator::projector(&pi8_state());
        let spec = CircuitSpec {
            rho,
            bases: vec![OrthonormalBasis::computational(2).unwrap(), make_dft_basis(2).unwrap()],
            indices: vec![1, 1],
            s: 0,
            shots: 0,
            seed: 0,
        };
        let p0 = circuit_probability(&spec).unwrap();
        assert_abs_diff_eq!(p0, (1.0 - 0.10355339059327379) / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p0, 0.44822, epsilon = 1e-5);
        // real-valued entry: s=1 gives 1/2
        let mut s1 = spec.clone();
        s1.s = 1;
        assert_abs_diff_eq!(circuit_probability(&s1).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn circuit_matches_extended_kd_all_entries() {
        for (d, k) in [(2usize, 2usize), (2, 3), (3, 2), (4, 2), (2, 4)] {
            let psi = haar_random_state(d, (d * 10 + k) as u64).unwrap();
            let rho = Operator::projector(&psi);
            let bases: Vec<OrthonormalBasis> =
                (0..k).map(|l| random_basis(d, (100 * d + 10 * k + l) as u64)).collect();
            let spec = CircuitSpec { rho, bases, indices: vec![0; k], s: 0, shots: 0, seed: 0 };
            let (_, worst) = circuit_matches_kd(&spec).unwrap();
            assert!(worst < 1e-12, "d={d} k={k} worst deviation {worst}");
        }
    }

    #[test]
    fn circuit_matches_for_mixed_state() {
        let d = 2;
        let rho = Operator::new(
            Operator::projector(&haar_random_state(d, 1).unwrap()).matrix() * c(0.6, 0.0)
                + Operator::projector(&haar_random_state(d, 2).unwrap()).matrix() * c(0.4, 0.0),
        )
        .unwrap();
        let spec = CircuitSpec {
            rho,
            bases: vec![random_basis(d, 3), random_basis(d, 4)],
            indices: vec![0, 0],
            s: 0,
            shots: 0,
            seed: 0,
        };
        let (_, worst) = circuit_matches_kd(&spec).unwrap();
        assert!(worst < 1e-12, "worst deviation {worst}");
    }

    #[test]
    fn circuit_sampling_statistics() {
        let rho = Operator::projector(&pi8_state());
        let spec = CircuitSpec {
            rho,
            bases: vec![OrthonormalBasis::computational(2).unwrap(), make_dft_basis(2).unwrap()],
            indices: vec![1, 1],
            s: 0,
            shots: 100_000,
            seed: 12345,
        };
        let exact = circuit_probability(&spec).unwrap();
        let (est, se) = circuit_sample(&spec).unwrap();
        assert!((est - exact).abs() < 5.0 * se, "estimate {est} vs exact {exact} (se {se})");
        // determinism
        let (est2, _) = circuit_sample(&spec).unwrap();
        assert_eq!(est, est2);
        // single shot is 0 or 1
        let mut one = spec.clone();
        one.shots = 1;
        let (e1, _) = circuit_sample(&one).unwrap();
        assert!(e1 == 0.0 || e1 == 1.0);
    }

    #[test]
    fn three_point_density_round_trip() {
        // diagonal qutrit
        let comp = OrthonormalBasis::computational(3).unwrap();
        let dft = make_dft_basis(3).unwrap();
        let diag = Operator::from_fn(3, |i, j| if i == j { c([0.5, 0.3, 0.2][i], 0.0) } else { c(0.0, 0.0) }).unwrap();
        let rec = three_point_density(&diag, &comp, &dft).unwrap();
        assert!(rec.frobenius_distance(&diag) < 1e-10);

        // random qutrit states
        for seed in 0..10 {
            let psi = haar_random_state(3, seed + 40).unwrap();
            let rho = Operator::projector(&psi);
            let rec = three_point_density(&rho, &comp, &dft).unwrap();
            assert!(rec.frobenius_distance(&rho) < 1e-9, "seed {seed}");
            // idempotence of the recovered pure projector
            assert!(rec.mul(&rec).frobenius_distance(&rec) < 1e-8);
        }
    }

    #[test]
    fn three_point_density_rejects_non_mub() {
        let comp = OrthonormalBasis::computational(3).unwrap();
        let rho = Operator::identity(3).scale(c(1.0 / 3.0, 0.0));
        assert!(matches!(
            three_point_density(&rho, &comp, &comp),
            Err(KdError::NotMutuallyUnbiased(_))
        ));
    }
}
