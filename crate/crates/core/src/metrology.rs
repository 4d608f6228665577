//! Fisher information for unitarily encoded parameters, with and without
//! post-selection, in both direct and KD forms.
//!
//! The parameter θ enters through exp(-i Â θ) acting on a pure probe state;
//! estimating θ from measurements of a fixed basis is limited by the Fisher
//! information, and non-real KD entries are exactly what makes it non-zero.
//! A positive-semidefinite filter inserted before the measurement models
//! post-selection; KD negativity of the filtered distribution is what lets
//! the retained states carry more information than the bound for classical
//! conditioning allows.

use crate::error::{KdError, Result};
use crate::hilbert::{
    hermitian_eigensystem, hermitian_function, matrix_exp_unitary, pairwise_sum_real, C64, CVector,
    Operator, OrthonormalBasis,
};
use crate::kd::{standard_kd, KdDistribution};
use crate::nonclassicality::total_nonpositivity;

/// A single-parameter estimation setup: generator, probe, measurement, and
/// an optional post-selective filter.
#[derive(Debug, Clone)]
pub struct EncodingScenario {
    generator: Operator,
    initial: CVector,
    measurement: OrthonormalBasis,
    filter: Option<Operator>,
}

impl EncodingScenario {
    /// Validates: Hermitian generator, normalized probe, filter spectrum in
    /// [0, 1] (tolerance 1e-10 at both ends).
    pub fn new(
        generator: Operator,
        initial: CVector,
        measurement: OrthonormalBasis,
        filter: Option<Operator>,
    ) -> Result<Self> {
        generator.require_hermitian(1e-10)?;
        if generator.dim() != initial.len() || generator.dim() != measurement.dim() {
            return Err(KdError::DimensionMismatch(
                "generator, probe, and measurement must share a dimension".into(),
            ));
        }
        if (initial.norm() - 1.0).abs() > 1e-10 {
            return Err(KdError::InvalidArgument("probe state must be normalized".into()));
        }
        if let Some(f) = &filter {
            f.require_hermitian(1e-10)?;
            if f.dim() != generator.dim() {
                return Err(KdError::DimensionMismatch("filter dimension mismatch".into()));
            }
            let eigs = crate::hilbert::hermitian_eigenvalues(f)?;
            for &e in &eigs {
                if !(-1e-10..=1.0 + 1e-10).contains(&e) {
                    return Err(KdError::InvalidArgument(format!(
                        "filter eigenvalue {e} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { generator, initial, measurement, filter })
    }

    pub fn generator(&self) -> &Operator {
        &self.generator
    }

    pub fn initial(&self) -> &CVector {
        &self.initial
    }

    pub fn measurement(&self) -> &OrthonormalBasis {
        &self.measurement
    }

    pub fn filter(&self) -> Option<&Operator> {
        self.filter.as_ref()
    }

    fn require_filter(&self) -> Result<&Operator> {
        self.filter
            .as_ref()
            .ok_or_else(|| KdError::InvalidArgument("scenario has no post-selective filter".into()))
    }
}

/// exp(-i Â θ) |ψ0⟩ via the generator's spectral decomposition.
pub fn encode(scenario: &EncodingScenario, theta: f64) -> Result<CVector> {
    let u = matrix_exp_unitary(&scenario.generator, theta)?;
    Ok(u.apply(&scenario.initial))
}

/// Measurement-outcome probabilities P(f_j) at parameter value θ.
pub fn outcome_probabilities(scenario: &EncodingScenario, theta: f64) -> Result<Vec<f64>> {
    let psi = encode(scenario, theta)?;
    Ok((0..psi.len())
        .map(|j| scenario.measurement.vector(j).dotc(&psi).norm_sqr())
        .collect())
}

/// ∂_θ P(f_j) = Σ_i 2 a_i Im Q_{i,j}, with Q the standard KD distribution of
/// the encoded state over (generator eigenbasis, measurement basis).
pub fn outcome_derivative(scenario: &EncodingScenario, theta: f64) -> Result<Vec<f64>> {
    let psi = encode(scenario, theta)?;
    let rho = Operator::projector(&psi);
    let (a_vals, a_basis) = hermitian_eigensystem(&scenario.generator)?;
    let q = standard_kd(&rho, &a_basis, &scenario.measurement)?;
    let d = psi.len();
    Ok((0..d)
        .map(|j| {
            let terms: Vec<f64> = (0..d).map(|i| 2.0 * a_vals[i] * q.get(&[i, j]).im).collect();
            pairwise_sum_real(&terms)
        })
        .collect())
}

/// Per-outcome amplitude derivatives ∂_θ ⟨f_j|Ψ_θ⟩ = ⟨f_j|(-iÂ)|Ψ_θ⟩, used
/// to take the Fisher-information limit on zero-probability outcomes.
fn amplitude_derivatives(scenario: &EncodingScenario, theta: f64) -> Result<Vec<C64>> {
    let psi = encode(scenario, theta)?;
    let a_psi = scenario.generator.apply(&psi);
    Ok((0..psi.len())
        .map(|j| scenario.measurement.vector(j).dotc(&a_psi) * C64::new(0.0, -1.0))
        .collect())
}

/// Classical Fisher information Σ_j (∂_θ P_j)² / P_j of the outcome
/// distribution.
///
/// Outcomes with P_j < 1e-14 contribute their analytic limit 4·|∂_θ c_j|²
/// (c_j the outcome amplitude), which is zero exactly when the amplitude is
/// stationary; this keeps the value continuous through probability zeros.
pub fn fisher_information(scenario: &EncodingScenario, theta: f64) -> Result<f64> {
    let probs = outcome_probabilities(scenario, theta)?;
    let derivs = outcome_derivative(scenario, theta)?;
    let amp_derivs = amplitude_derivatives(scenario, theta)?;
    let terms: Vec<f64> = probs
        .iter()
        .zip(&derivs)
        .zip(&amp_derivs)
        .map(|((&p, &dp), dc)| if p < 1e-14 { 4.0 * dc.norm_sqr() } else { dp * dp / p })
        .collect();
    Ok(pairwise_sum_real(&terms))
}

/// The same Fisher information written through the conditional KD
/// distribution: 4 Σ_j P_j [Σ_i a_i Im(Q_{i,j}/P_j)]², with the same
/// zero-probability limit convention as [`fisher_information`].
pub fn fisher_information_kd_form(scenario: &EncodingScenario, theta: f64) -> Result<f64> {
    let psi = encode(scenario, theta)?;
    let rho = Operator::projector(&psi);
    let (a_vals, a_basis) = hermitian_eigensystem(&scenario.generator)?;
    let q = standard_kd(&rho, &a_basis, &scenario.measurement)?;
    let probs = outcome_probabilities(scenario, theta)?;
    let amp_derivs = amplitude_derivatives(scenario, theta)?;
    let d = psi.len();
    let terms: Vec<f64> = (0..d)
        .map(|j| {
            if probs[j] < 1e-14 {
                return 4.0 * amp_derivs[j].norm_sqr();
            }
            let inner: Vec<f64> =
                (0..d).map(|i| a_vals[i] * (q.get(&[i, j]) / probs[j]).im).collect();
            let s = pairwise_sum_real(&inner);
            4.0 * probs[j] * s * s
        })
        .collect();
    Ok(pairwise_sum_real(&terms))
}

/// Quantum Fisher information of the (pure) encoded state: 4·Var_{ψ0}(Â),
/// independent of θ for this encoding. Mixed probes are not representable in
/// [`EncodingScenario`]; the mixed-state quantum Fisher information (via the
/// symmetric logarithmic derivative) is deliberately out of scope.
pub fn qfi_pure(scenario: &EncodingScenario, theta: f64) -> Result<f64> {
    let psi = encode(scenario, theta)?;
    let a = &scenario.generator;
    let mean = a.expectation(&psi).re;
    let second = a.mul(a).expectation(&psi).re;
    Ok(4.0 * (second - mean * mean))
}

/// Apply the post-selective filter: returns (K̂|Ψ_θ⟩/√p, p) with
/// K̂ the Hermitian principal square root of F̂ and p = ⟨Ψ_θ|F̂|Ψ_θ⟩.
/// Any other Kraus root of F̂ differs by a unitary that changes neither p
/// nor the retained state's Fisher information.
pub fn postselect(scenario: &EncodingScenario, theta: f64) -> Result<(CVector, f64)> {
    let f = scenario.require_filter()?;
    let psi = encode(scenario, theta)?;
    let p = f.expectation(&psi).re;
    if p <= 1e-12 {
        return Err(KdError::ZeroProbability(p));
    }
    let k = hermitian_function(f, |e| e.max(0.0).sqrt())?;
    let out = k.apply(&psi) / C64::new(p.sqrt(), 0.0);
    Ok((out, p))
}

/// Quantum Fisher information of the post-selected state, evaluated
/// directly: 4[⟨Â F̂ Â⟩/p − |⟨Â F̂⟩|²/p²] on the encoded state.
pub fn postselected_qfi(scenario: &EncodingScenario, theta: f64) -> Result<f64> {
    let f = scenario.require_filter()?;
    let psi = encode(scenario, theta)?;
    let a = &scenario.generator;
    let p = f.expectation(&psi).re;
    if p <= 1e-12 {
        return Err(KdError::ZeroProbability(p));
    }
    let afa = a.mul(f).mul(a).expectation(&psi).re;
    let af = a.mul(f).expectation(&psi);
    Ok(4.0 * (afa / p - af.norm_sqr() / (p * p)))
}

/// Conditional filtered distribution Q̃_{i,j} = ⟨Ψ_θ|a_i⟩⟨a_i|F̂|a_j⟩⟨a_j|Ψ_θ⟩/p
/// over two copies of the generator eigenbasis. Its negativity is what
/// allows the post-selected information to exceed the classical bound.
pub fn conditional_ps_distribution(
    scenario: &EncodingScenario,
    theta: f64,
) -> Result<KdDistribution> {
    let f = scenario.require_filter()?;
    let psi = encode(scenario, theta)?;
    let (_, a_basis) = hermitian_eigensystem(&scenario.generator)?;
    let p = f.expectation(&psi).re;
    if p <= 1e-12 {
        return Err(KdError::ZeroProbability(p));
    }
    let d = psi.len();
    let inv_p = C64::new(1.0 / p, 0.0);
    let mut values = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let ai = a_basis.vector(i);
            let aj = a_basis.vector(j);
            values.push(psi.dotc(ai) * f.sandwich(ai, aj) * aj.dotc(&psi) * inv_p);
        }
    }
    KdDistribution::from_values(vec![d, d], values)
}

/// [`postselected_qfi`] rewritten through the conditional filtered
/// distribution: 4[Σ a_i a_j Q̃_{i,j} − |Σ a_i Q̃_{i,j}|²].
pub fn postselected_qfi_kd_form(scenario: &EncodingScenario, theta: f64) -> Result<f64> {
    let q = conditional_ps_distribution(scenario, theta)?;
    let (a_vals, _) = hermitian_eigensystem(&scenario.generator)?;
    let d = a_vals.len();
    let mut second = C64::new(0.0, 0.0);
    let mut first = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let v = q.get(&[i, j]);
            second += v * C64::new(a_vals[i] * a_vals[j], 0.0);
            first += v * C64::new(a_vals[i], 0.0);
        }
    }
    Ok(4.0 * (second.re - first.norm_sqr()))
}

/// Spectral gap (largest minus smallest eigenvalue) of the generator; its
/// square bounds the post-selected information whenever the conditional
/// filtered distribution is entrywise positive.
pub fn spectral_gap(scenario: &EncodingScenario) -> Result<f64> {
    let eigs = crate::hilbert::hermitian_eigenvalues(&scenario.generator)?;
    Ok(eigs.last().copied().unwrap_or(0.0) - eigs.first().copied().unwrap_or(0.0))
}

/// Summary of an information-distillation trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationReport {
    /// Quantum Fisher information of the post-selected state.
    pub i_ps: f64,
    /// Post-selection probability.
    pub p_ps: f64,
    /// i_ps · p_ps, the retained information per input probe.
    pub product: f64,
    /// Quantum Fisher information without filtering.
    pub qfi: f64,
    /// product / qfi ∈ [0, 1]; 1 means lossless distillation.
    pub efficiency: f64,
    /// Total non-positivity of the conditional filtered distribution.
    pub conditional_nonpositivity: f64,
}

/// Evaluate how much information the filter retains: i_ps·p_ps ≤ qfi always,
/// with equality (efficiency 1) achievable only through KD negativity.
pub fn distillation_report(scenario: &EncodingScenario, theta: f64) -> Result<DistillationReport> {
    let i_ps = postselected_qfi(scenario, theta)?;
    let (_, p_ps) = postselect(scenario, theta)?;
    let qfi = qfi_pure(scenario, theta)?;
    let q = conditional_ps_distribution(scenario, theta)?;
    let product = i_ps * p_ps;
    let efficiency = if qfi > 1e-14 { product / qfi } else { 0.0 };
    Ok(DistillationReport {
        i_ps,
        p_ps,
        product,
        qfi,
        efficiency,
        conditional_nonpositivity: total_nonpositivity(&q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{haar_random_state, haar_random_unitary, make_dft_basis};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn half_z() -> Operator {
        Operator::from_fn(2, |i, j| {
            if i == j {
                c(if i == 0 { 0.5 } else { -0.5 }, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap()
    }

    fn plus_state() -> CVector {
        let s = 1.0 / 2.0_f64.sqrt();
        CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)])
    }

    fn x_basis() -> OrthonormalBasis {
        make_dft_basis(2).unwrap()
    }

    fn qubit_scenario(filter: Option<Operator>) -> EncodingScenario {
        EncodingScenario::new(half_z(), plus_state(), x_basis(), filter).unwrap()
    }

    fn random_hermitian(d: usize, seed: u64) -> Operator {
        let u = haar_random_unitary(d, seed).unwrap();
        Operator::new((u.matrix() + u.matrix().adjoint()) * c(0.5, 0.0)).unwrap()
    }

    fn random_scenario(d: usize, seed: u64) -> EncodingScenario {
        let a = random_hermitian(d, seed);
        let psi = haar_random_state(d, seed + 1000).unwrap();
        let f = OrthonormalBasis::from_unitary_columns(&haar_random_unitary(d, seed + 2000).unwrap())
            .unwrap();
        EncodingScenario::new(a, psi, f, None).unwrap()
    }

    #[test]
    fn encode_identity_at_zero() {
        let s = qubit_scenario(None);
        let psi = encode(&s, 0.0).unwrap();
        assert!((psi - plus_state()).norm() < 1e-12);
    }

    #[test]
    fn encode_bloch_rotation() {
        // exp(-i (Z/2) pi)|+> = -i|->, i.e. |-> up to global phase
        let s = qubit_scenario(None);
        let psi = encode(&s, std::f64::consts::PI).unwrap();
        let minus = CVector::from_vec(vec![
            c(1.0 / 2.0_f64.sqrt(), 0.0),
            c(-1.0 / 2.0_f64.sqrt(), 0.0),
        ]);
        let overlap = minus.dotc(&psi).norm();
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn encode_preserves_norm() {
        for seed in 0..10 {
            let s = random_scenario(3, seed);
            let psi = encode(&s, 0.3 + seed as f64).unwrap();
            assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_zero_in_generator_basis() {
        // measuring the generator's own eigenbasis yields theta-independent
        // probabilities
        let a = half_z();
        let s = EncodingScenario::new(
            a,
            plus_state(),
            OrthonormalBasis::computational(2).unwrap(),
            None,
        )
        .unwrap();
        for theta in [0.0, 0.4, 1.3] {
            for dp in outcome_derivative(&s, theta).unwrap() {
                assert!(dp.abs() < 1e-12);
            }
            assert!(fisher_information(&s, theta).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_sum_to_zero() {
        for seed in 0..10 {
            let s = random_scenario(3, seed + 50);
            let sum: f64 = outcome_derivative(&s, 0.7).unwrap().iter().sum();
            assert!(sum.abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..50 {
            let d = if seed % 2 == 0 { 2 } else { 3 };
            let s = random_scenario(d, seed + 100);
            let theta = 0.1 + 0.05 * seed as f64;
            let analytic = outcome_derivative(&s, theta).unwrap();
            let p_plus = outcome_probabilities(&s, theta + h).unwrap();
            let p_minus = outcome_probabilities(&s, theta - h).unwrap();
            for j in 0..d {
                let fd = (p_plus[j] - p_minus[j]) / (2.0 * h);
                assert!((analytic[j] - fd).abs() < 1e-6, "seed {seed} outcome {j}");
            }
        }
    }

    #[test]
    fn qubit_fisher_is_one_including_at_zero() {
        let s = qubit_scenario(None);
        // I(theta) = 1 for all theta in this configuration; theta = 0 hits a
        // zero-probability outcome and exercises the limit convention
        for theta in [0.0, 0.3, 1.0, 2.0] {
            assert_abs_diff_eq!(fisher_information(&s, theta).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fisher_direct_equals_kd_form() {
        for seed in 0..30 {
            let d = if seed % 2 == 0 { 2 } else { 3 };
            let s = random_scenario(d, seed + 300);
            let theta = 0.2 + 0.1 * seed as f64;
            let direct = fisher_information(&s, theta).unwrap();
            let kd = fisher_information_kd_form(&s, theta).unwrap();
            assert!((direct - kd).abs() < 1e-9, "seed {seed}: {direct} vs {kd}");
        }
    }

    #[test]
    fn fisher_never_exceeds_qfi() {
        for seed in 0..30 {
            let d = 2 + (seed % 3) as usize;
            let s = random_scenario(d, seed + 700);
            let theta = 0.15 * (seed + 1) as f64;
            let i = fisher_information(&s, theta).unwrap();
            let q = qfi_pure(&s, theta).unwrap();
            assert!(i <= q + 1e-9, "seed {seed}: I = {i} > QFI = {q}");
        }
    }

    #[test]
    fn qfi_values() {
        // eigenstate of the generator: zero information
        let s_eig = EncodingScenario::new(
            half_z(),
            CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            x_basis(),
            None,
        )
        .unwrap();
        assert!(qfi_pure(&s_eig, 0.5).unwrap().abs() < 1e-12);

        // |+> against Z/2: QFI = 1
        let s = qubit_scenario(None);
        assert_abs_diff_eq!(qfi_pure(&s, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        // theta-independent
        assert_abs_diff_eq!(qfi_pure(&s, 1.7).unwrap(), 1.0, epsilon = 1e-12);

        // equal superposition of extreme eigenvectors maximizes: (gap)^2
        let a = random_hermitian(4, 9);
        let (_, basis) = hermitian_eigensystem(&a).unwrap();
        let psi = (basis.vector(0) + basis.vector(3)) / c(2.0_f64.sqrt(), 0.0);
        let s_max = EncodingScenario::new(
            a.clone(),
            psi,
            OrthonormalBasis::computational(4).unwrap(),
            None,
        )
        .unwrap();
        let gap = spectral_gap(&s_max).unwrap();
        assert_abs_diff_eq!(qfi_pure(&s_max, 0.0).unwrap(), gap * gap, epsilon = 1e-10);
    }

    #[test]
    fn postselect_basics() {
        // identity filter: unchanged state, p = 1
        let s = qubit_scenario(Some(Operator::identity(2)));
        let (psi, p) = postselect(&s, 0.4).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        assert!((psi - encode(&s, 0.4).unwrap()).norm() < 1e-12);

        // rank-1 filter: output is the filter state up to phase
        let f_state = haar_random_state(2, 11).unwrap();
        let s1 = qubit_scenario(Some(Operator::projector(&f_state)));
        let (out, p1) = postselect(&s1, 0.4).unwrap();
        assert!(p1 > 1e-6);
        assert_abs_diff_eq!(f_state.dotc(&out).norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn postselected_qfi_identity_filter_is_qfi() {
        let s = qubit_scenario(Some(Operator::identity(2)));
        let theta = 0.6;
        assert_abs_diff_eq!(
            postselected_qfi(&s, theta).unwrap(),
            qfi_pure(&s, theta).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn postselected_qfi_direct_equals_kd_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..20 {
            let d = 2 + (seed % 2) as usize;
            // random PSD filter with spectrum in [0, 1]
            let h = random_hermitian(d, seed + 4000);
            let f = hermitian_function(&h, |e| 0.5 + 0.45 * e.tanh()).unwrap();
            let a = random_hermitian(d, seed + 5000);
            let psi = haar_random_state(d, seed + 6000).unwrap();
            let meas = OrthonormalBasis::computational(d).unwrap();
            let s = EncodingScenario::new(a, psi, meas, Some(f)).unwrap();
            let theta = rng.gen::<f64>() * 2.0;
            let direct = postselected_qfi(&s, theta).unwrap();
            let kd = postselected_qfi_kd_form(&s, theta).unwrap();
            assert!((direct - kd).abs() < 1e-9, "seed {seed}: {direct} vs {kd}");
        }
    }

    #[test]
    fn positive_conditional_distribution_respects_gap_bound() {
        // filter diagonal in the generator eigenbasis: the conditional
        // distribution is diagonal and positive, so i_ps <= gap^2
        let a = half_z();
        let f = Operator::from_fn(2, |i, j| {
            if i == j {
                c(if i == 0 { 0.9 } else { 0.2 }, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap();
        let s = EncodingScenario::new(a, plus_state(), x_basis(), Some(f)).unwrap();
        let q = conditional_ps_distribution(&s, 0.3).unwrap();
        for (_, v) in q.iter() {
            assert!(v.im.abs() < 1e-12 && v.re > -1e-12);
        }
        let gap = spectral_gap(&s).unwrap();
        assert!(postselected_qfi(&s, 0.3).unwrap() <= gap * gap + 1e-9);
    }

    /// Partial attenuation filter: transmission amplitude t along |+>,
    /// full transmission along |->. Weakly transmitting the dominant probe
    /// component amplifies the theta-sensitive one.
    fn partial_filter(t: f64) -> Operator {
        let plus = Operator::projector(x_basis().vector(0));
        let minus = Operator::projector(x_basis().vector(1));
        plus.scale(c(t * t, 0.0)).add(&minus)
    }

    #[test]
    fn anomalous_filter_beats_gap_bound() {
        // near-orthogonal partial post-selection boosts the retained
        // information past the spectral-gap bound
        let s = qubit_scenario(Some(partial_filter(0.1)));
        let theta = 0.2;
        let i_ps = postselected_qfi(&s, theta).unwrap();
        let gap = spectral_gap(&s).unwrap();
        assert!(
            i_ps > gap * gap,
            "expected anomalous boost, got i_ps = {i_ps} vs bound {}",
            gap * gap
        );
        // non-classicality is present in the conditional distribution
        let q = conditional_ps_distribution(&s, theta).unwrap();
        assert!(total_nonpositivity(&q) > 1.0 + 1e-6);
    }

    #[test]
    fn distillation_product_bounded_and_lossless_limit() {
        // product <= qfi over a sweep of rank-1 filter angles; efficiency
        // approaches 1 as the filter tilts toward orthogonality
        let s0 = qubit_scenario(None);
        let theta = 1e-3;
        let qfi = qfi_pure(&s0, theta).unwrap();
        let mut best_eff: f64 = 0.0;
        for n in 1..40 {
            let t = 0.02 * n as f64; // transmission amplitude sweep
            let s = qubit_scenario(Some(partial_filter(t)));
            let Ok(r) = distillation_report(&s, theta) else { continue };
            assert!(r.product <= qfi + 1e-9, "t = {t}: product {} > qfi {qfi}", r.product);
            assert!((-1e-9..=1.0 + 1e-9).contains(&r.efficiency));
            best_eff = best_eff.max(r.efficiency);
        }
        assert!(best_eff >= 0.99, "max efficiency {best_eff} < 0.99");
    }

    #[test]
    fn distillation_zero_information_filter() {
        // filter commuting with the generator and projecting onto one
        // eigenstate: the retained state is a generator eigenstate with no
        // information left
        let a = half_z();
        let filter = Operator::from_fn(2, |i, j| {
            if i == 0 && j == 0 {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap();
        let s = EncodingScenario::new(a, plus_state(), x_basis(), Some(filter)).unwrap();
        let r = distillation_report(&s, 0.2).unwrap();
        assert!(r.i_ps.abs() < 1e-10);
        assert!(r.efficiency.abs() < 1e-10);
    }

    #[test]
    fn identity_filter_efficiency_one() {
        let s = qubit_scenario(Some(Operator::identity(2)));
        let r = distillation_report(&s, 0.9).unwrap();
        assert_abs_diff_eq!(r.p_ps, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.efficiency, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cramer_rao_variance_matches_bound() {
        // two-outcome qubit experiment: P(-) = sin^2(theta/2), I = 1;
        // the ML estimate 2*asin(sqrt(f)) over binomial trials should have
        // variance close to 1/(N*I)
        let theta0 = 1.0_f64;
        let p_minus = (theta0 / 2.0).sin().powi(2);
        let n_samples = 10_000usize;
        let n_experiments = 10_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let binom = rand_distr::Binomial::new(n_samples as u64, p_minus).unwrap();
        let mut estimates = Vec::with_capacity(n_experiments);
        for _ in 0..n_experiments {
            let hits = rng.sample(binom);
            let f = hits as f64 / n_samples as f64;
            estimates.push(2.0 * f.sqrt().asin());
        }
        let mean: f64 = estimates.iter().sum::<f64>() / n_experiments as f64;
        let var: f64 =
            estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n_experiments as f64;
        let s = qubit_scenario(None);
        let bound = 1.0 / (n_samples as f64 * fisher_information(&s, theta0).unwrap());
        assert!(
            (var - bound).abs() <= 0.2 * bound,
            "variance {var} not within 20% of bound {bound}"
        );
    }

    #[test]
    fn validation_errors() {
        // unnormalized probe
        let bad = CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        assert!(EncodingScenario::new(half_z(), bad, x_basis(), None).is_err());
        // filter with eigenvalue > 1
        let over = Operator::identity(2).scale(c(1.5, 0.0));
        assert!(EncodingScenario::new(half_z(), plus_state(), x_basis(), Some(over)).is_err());
        // postselect without a filter
        let s = qubit_scenario(None);
        assert!(matches!(postselect(&s, 0.1), Err(KdError::InvalidArgument(_))));
        // zero post-selection probability
        let ortho = Operator::projector(&CVector::from_vec(vec![
            c(1.0 / 2.0_f64.sqrt(), 0.0),
            c(-1.0 / 2.0_f64.sqrt(), 0.0),
        ]));
        let s0 = qubit_scenario(Some(ortho));
        assert!(matches!(postselect(&s0, 0.0), Err(KdError::ZeroProbability(_))));
    }
}
