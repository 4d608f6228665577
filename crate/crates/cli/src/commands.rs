//! Command parameter structs (shared by flags and scenario files) and their
//! handlers.
//!
//! Every struct derives both `clap::Args` and `serde::Deserialize` with
//! `deny_unknown_fields`, so a scenario file and a flag invocation go through
//! identical validation. Each handler validates and resolves all inputs
//! before computing; with `dry_run` it stops there (the `validate`
//! subcommand).

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use kdlab_core::foundations::{
    family_consistent, histories_overlap, kcbs_extended_kd, kcbs_s, kcbs_s_via_kd,
    lg_correlator, lg_kd_distribution, lg_weak_value_form, minimal_family, History,
};
use kdlab_core::hilbert::{thermal_state, CVector, Operator, OrthonormalBasis, C64};
use kdlab_core::kd::{extended_kd, standard_kd, KdDistribution};
use kdlab_core::metrology::{
    distillation_report, fisher_information, fisher_information_kd_form, qfi_pure,
    spectral_gap, EncodingScenario,
};
use kdlab_core::nonclassicality::{
    complete_incompatibility, is_kd_positive, kd_coherence, l1_coherence,
    total_nonpositivity, uncertainty_diagram, SamplerSpec,
};
use kdlab_core::thermo::{
    free_energy_difference, kd_work_distribution, nonpositivity_trace,
    peak_to_return_interval, tpm_distribution, PauliAxis, SpinChainConfig, WorkDistribution,
};
use kdlab_core::weak::{
    circuit_reconstruct_entry, circuit_sample, imaginary_shift, simulate_von_neumann,
    weak_value, wva_snr, CircuitSpec,
};

use crate::error::{CliError, CliResult};
use crate::io::{
    csv_document, csv_num, emit, jcomplex, jnum, load_basis, load_density, load_operator,
    load_vector, parse_time_grid, render_json,
};

fn default_basis_a() -> String {
    "Z".to_string()
}

fn default_basis_b() -> String {
    "X".to_string()
}

fn wrap(command: &str, seed: Option<u64>, result: Value) -> Value {
    let mut top = Map::new();
    top.insert("tool".into(), json!("kdlab"));
    top.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    top.insert("command".into(), json!(command));
    if let Some(s) = seed {
        top.insert("seed".into(), json!(s));
    }
    top.insert("result".into(), result);
    Value::Object(top)
}

fn dry_ok(command: &str) -> Value {
    json!({ "validated": command, "status": "ok" })
}

fn distribution_json(q: &KdDistribution) -> Value {
    let entries: Vec<Value> = q
        .iter()
        .map(|(idx, v)| json!({ "index": idx, "value": jcomplex(v) }))
        .collect();
    let total = q.total();
    json!({
        "shape": q.shape(),
        "entries": entries,
        "total": jcomplex(total),
        "nonpositivity": jnum(total_nonpositivity(q)),
    })
}

// --- kd ---

/// Compute a standard or extended KD distribution for a state.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdParams {
    /// State file ({"vector": …} or {"density": …}).
    #[arg(long)]
    pub state: String,
    /// First basis: Z, X, Y, or a {"columns": …} file.
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_basis_a")]
    pub basis_a: String,
    /// Second basis.
    #[arg(long, default_value = "X")]
    #[serde(default = "default_basis_b")]
    pub basis_b: String,
    /// Extended chain of bases (overrides --basis-a/--basis-b; at least 2).
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub bases: Option<Vec<String>>,
    /// Output path (stdout when absent).
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

pub fn run_kd(p: &KdParams, dry_run: bool) -> CliResult<()> {
    let rho = load_density("state", &p.state)?;
    let d = rho.dim();
    let specs: Vec<&str> = match &p.bases {
        Some(chain) if chain.len() >= 2 => chain.iter().map(|s| s.as_str()).collect(),
        Some(chain) => {
            return Err(CliError::validation(format!(
                "bases: extended chain needs at least 2 bases, got {}",
                chain.len()
            )))
        }
        None => vec![p.basis_a.as_str(), p.basis_b.as_str()],
    };
    let bases: Vec<OrthonormalBasis> = specs
        .iter()
        .enumerate()
        .map(|(k, s)| load_basis(&format!("basis {k}"), s, d))
        .collect::<CliResult<_>>()?;
    if dry_run {
        emit(None, &render_json(&dry_ok("kd")))?;
        return Ok(());
    }
    let q = if bases.len() == 2 {
        standard_kd(&rho, &bases[0], &bases[1])?
    } else {
        let refs: Vec<&OrthonormalBasis> = bases.iter().collect();
        extended_kd(&rho, &refs)?
    };
    let total = q.total();
    if (total - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(CliError::numerical(format!(
            "KD distribution total {total} deviates from 1"
        )));
    }
    let mut result = distribution_json(&q);
    if q.rank() == 2 {
        let table: Vec<Value> = (0..d)
            .map(|i| Value::Array((0..d).map(|j| jcomplex(q.get(&[i, j]))).collect()))
            .collect();
        result["table"] = Value::Array(table);
    }
    result["dim"] = json!(d);
    emit(p.out.as_deref(), &render_json(&wrap("kd", None, result)))
}

// --- witness ---

/// Non-positivity and coherence witnesses of a state's KD distribution.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessParams {
    #[arg(long)]
    pub state: String,
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_basis_a")]
    pub basis_a: String,
    #[arg(long, default_value = "X")]
    #[serde(default = "default_basis_b")]
    pub basis_b: String,
    /// Random restarts for the KD-coherence maximization (requires --seed).
    #[arg(long)]
    #[serde(default)]
    pub coherence_restarts: Option<usize>,
    /// Seed for randomized sub-computations.
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

pub fn run_witness(p: &WitnessParams, dry_run: bool) -> CliResult<()> {
    let rho = load_density("state", &p.state)?;
    let d = rho.dim();
    let a = load_basis("basis-a", &p.basis_a, d)?;
    let b = load_basis("basis-b", &p.basis_b, d)?;
    if p.coherence_restarts.is_some() && p.seed.is_none() {
        return Err(CliError::validation(
            "coherence-restarts: randomized optimization requires an explicit --seed".to_string(),
        ));
    }
    if dry_run {
        emit(None, &render_json(&dry_ok("witness")))?;
        return Ok(());
    }
    let q = standard_kd(&rho, &a, &b)?;
    let verdict = is_kd_positive(&q, 1e-10);
    let mut result = json!({
        "nonpositivity": jnum(total_nonpositivity(&q)),
        "is_positive": verdict.is_positive,
        "worst_entry": { "index": verdict.worst_entry.0, "value": jcomplex(verdict.worst_entry.1) },
        "l1_coherence": jnum(l1_coherence(&rho, &a)?),
    });
    if let (Some(restarts), Some(seed)) = (p.coherence_restarts, p.seed) {
        result["kd_coherence"] = jnum(kd_coherence(&rho, &a, restarts, seed)?);
    }
    emit(p.out.as_deref(), &render_json(&wrap("witness", p.seed, result)))
}

// --- geometry ---

/// Support-uncertainty diagram and incompatibility scan for a basis pair.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    /// Hilbert-space dimension.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_basis_a")]
    pub basis_a: String,
    #[arg(long, default_value = "X")]
    #[serde(default = "default_basis_b")]
    pub basis_b: String,
    /// State sampler: haar, basis, or pairs.
    #[arg(long, default_value = "haar")]
    #[serde(default = "default_sampler")]
    pub sampler: String,
    /// Number of Haar samples.
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed (required for the haar sampler).
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    /// CSV output path for the sampled points.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn default_sampler() -> String {
    "haar".to_string()
}

fn default_samples() -> usize {
    1000
}

pub fn run_geometry(p: &GeometryParams, dry_run: bool) -> CliResult<()> {
    if p.dim < 2 {
        return Err(CliError::validation(format!("dim: need at least 2, got {}", p.dim)));
    }
    let a = load_basis("basis-a", &p.basis_a, p.dim)?;
    let b = load_basis("basis-b", &p.basis_b, p.dim)?;
    let sampler = match p.sampler.as_str() {
        "haar" => {
            if p.seed.is_none() {
                return Err(CliError::validation(
                    "sampler 'haar' is randomized and requires an explicit --seed".to_string(),
                ));
            }
            SamplerSpec::Haar(p.samples)
        }
        "basis" => SamplerSpec::BasisStates,
        "pairs" => SamplerSpec::BasisPairSuperpositions,
        other => {
            return Err(CliError::validation(format!(
                "sampler: unknown sampler '{other}' (expected haar, basis, or pairs)"
            )))
        }
    };
    if dry_run {
        emit(None, &render_json(&dry_ok("geometry")))?;
        return Ok(());
    }
    let points = uncertainty_diagram(&a, &b, &sampler, p.seed.unwrap_or(0))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            vec![
                pt.label.clone(),
                pt.n_a.to_string(),
                pt.n_b.to_string(),
                pt.n_ab().to_string(),
                pt.kd_positive.to_string(),
                pt.donoho_stark_ok.to_string(),
            ]
        })
        .collect();
    let csv = csv_document(
        p.seed,
        &["label", "n_a", "n_b", "n_sum", "kd_positive", "donoho_stark_ok"],
        &rows,
    );
    match &p.out {
        Some(path) => {
            emit(Some(path), &csv)?;
            let verdict = complete_incompatibility(&a, &b)?;
            let result = json!({
                "dim": p.dim,
                "points_written": points.len(),
                "csv": path,
                "completely_incompatible": verdict.completely_incompatible,
                "witness": verdict.witness,
            });
            emit(None, &render_json(&wrap("geometry", p.seed, result)))
        }
        None => emit(None, &csv),
    }
}

// --- weak ---

/// Weak values and Gaussian-meter von Neumann measurement simulation.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakParams {
    /// Initial pure state file.
    #[arg(long)]
    pub state: String,
    /// Observable file ({"matrix": …}, Hermitian).
    #[arg(long)]
    pub observable: String,
    /// Post-selection pure state file.
    #[arg(long)]
    #[serde(default)]
    pub post_select: Option<String>,
    /// Measurement coupling strength.
    #[arg(long)]
    pub g: f64,
    /// Meter wave-packet width.
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Trial count for the SNR comparison (needs post-selection).
    #[arg(long)]
    #[serde(default)]
    pub trials: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn default_sigma() -> f64 {
    1.0
}

pub fn run_weak(p: &WeakParams, dry_run: bool) -> CliResult<()> {
    let psi_i = load_vector("state", &p.state)?;
    let a = load_operator("observable", &p.observable)?;
    a.require_hermitian(1e-10)
        .map_err(|e| CliError::validation(format!("observable: {e}")))?;
    if a.dim() != psi_i.len() {
        return Err(CliError::validation(format!(
            "observable: dim {} does not match state dim {}",
            a.dim(),
            psi_i.len()
        )));
    }
    let psi_f = match &p.post_select {
        Some(path) => {
            let v = load_vector("post-select", path)?;
            if v.len() != psi_i.len() {
                return Err(CliError::validation(format!(
                    "post-select: dim {} does not match state dim {}",
                    v.len(),
                    psi_i.len()
                )));
            }
            Some(v)
        }
        None => None,
    };
    if p.trials.is_some() && psi_f.is_none() {
        return Err(CliError::validation(
            "trials: the SNR comparison needs --post-select".to_string(),
        ));
    }
    if dry_run {
        emit(None, &render_json(&dry_ok("weak")))?;
        return Ok(());
    }
    let (meter, probability) = simulate_von_neumann(&psi_i, &a, p.g, p.sigma, psi_f.as_ref())?;
    let mut result = json!({
        "mean_shift": jnum(meter.mean_position()),
        "success_probability": jnum(probability),
        "g": jnum(p.g),
        "sigma": jnum(p.sigma),
    });
    if let Some(psi_f) = &psi_f {
        let aw = weak_value(&a, &psi_i, psi_f)?;
        result["weak_value"] = jcomplex(aw);
        result["imaginary_shift"] = jnum(imaginary_shift(p.g, p.sigma, aw));
        if let Some(n) = p.trials {
            let snr = wva_snr(p.g, p.sigma, n, &psi_i, psi_f, &a)?;
            result["snr"] = json!({
                "standard": jnum(snr.snr_standard),
                "weak_value_amplified": jnum(snr.snr_weak_value),
                "ratio": jcomplex(snr.ratio),
            });
        }
    }
    emit(p.out.as_deref(), &render_json(&wrap("weak", None, result)))
}

// --- circuit ---

/// Ancilla-interferometry estimate of one KD entry, with exact cross-check.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    #[arg(long)]
    pub state: String,
    /// Chain of measurement bases (comma-separated, at least 2).
    #[arg(long, value_delimiter = ',', required = true)]
    pub bases: Vec<String>,
    /// Index tuple selecting the entry (one per basis).
    #[arg(long, value_delimiter = ',', required = true)]
    pub indices: Vec<usize>,
    /// Shots per phase setting.
    #[arg(long, default_value_t = 100_000)]
    #[serde(default = "default_shots")]
    pub shots: u64,
    /// Sampling seed (required: runs are reproducible by contract).
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn default_shots() -> u64 {
    100_000
}

pub fn run_circuit(p: &CircuitParams, dry_run: bool) -> CliResult<()> {
    let rho = load_density("state", &p.state)?;
    let d = rho.dim();
    if p.bases.len() < 2 {
        return Err(CliError::validation(format!(
            "bases: the circuit measures extended KD entries; need at least 2 bases, got {}",
            p.bases.len()
        )));
    }
    if p.indices.len() != p.bases.len() {
        return Err(CliError::validation(format!(
            "indices: got {} indices for {} bases",
            p.indices.len(),
            p.bases.len()
        )));
    }
    let bases: Vec<OrthonormalBasis> = p
        .bases
        .iter()
        .enumerate()
        .map(|(k, s)| load_basis(&format!("basis {k}"), s, d))
        .collect::<CliResult<_>>()?;
    for (k, &i) in p.indices.iter().enumerate() {
        if i >= d {
            return Err(CliError::validation(format!(
                "indices: index {i} in slot {k} out of range for dim {d}"
            )));
        }
    }
    if dry_run {
        emit(None, &render_json(&dry_ok("circuit")))?;
        return Ok(());
    }
    let spec = CircuitSpec {
        rho: rho.clone(),
        bases,
        indices: p.indices.clone(),
        s: 0,
        shots: p.shots,
        seed: p.seed,
    };
    let refs: Vec<&OrthonormalBasis> = spec.bases.iter().collect();
    let exact = extended_kd(&rho, &refs)?.get(&p.indices);
    let circuit = circuit_reconstruct_entry(&spec)?;
    if (circuit - exact).norm() > 1e-9 {
        return Err(CliError::numerical(format!(
            "circuit reconstruction {circuit} deviates from the KD entry {exact}"
        )));
    }
    let (p0_re, se_re) = circuit_sample(&spec)?;
    let mut spec_im = spec.clone();
    spec_im.s = 1;
    spec_im.seed = p.seed.wrapping_add(1);
    let (p0_im, se_im) = circuit_sample(&spec_im)?;
    let result = json!({
        "kd_entry": jcomplex(exact),
        "circuit_entry": jcomplex(circuit),
        "sampled": {
            "re": { "estimate": jnum(2.0 * p0_re - 1.0), "stderr": jnum(2.0 * se_re) },
            "im": { "estimate": jnum(2.0 * p0_im - 1.0), "stderr": jnum(2.0 * se_im) },
        },
        "shots": p.shots,
    });
    emit(p.out.as_deref(), &render_json(&wrap("circuit", Some(p.seed), result)))
}

// --- metrology ---

/// Fisher information of a phase-encoded probe, with optional post-selection.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetrologyParams {
    /// Hermitian generator file.
    #[arg(long)]
    pub generator: String,
    /// Probe pure state file.
    #[arg(long)]
    pub state: String,
    /// Measurement basis.
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_basis_a")]
    pub measurement: String,
    /// Optional filter operator file (eigenvalues in [0, 1]).
    #[arg(long)]
    #[serde(default)]
    pub filter: Option<String>,
    /// Encoding parameter value.
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub theta: f64,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

pub fn run_metrology(p: &MetrologyParams, dry_run: bool) -> CliResult<()> {
    let generator = load_operator("generator", &p.generator)?;
    let initial = load_vector("state", &p.state)?;
    let measurement = load_basis("measurement", &p.measurement, initial.len())?;
    let filter = match &p.filter {
        Some(path) => Some(load_operator("filter", path)?),
        None => None,
    };
    let scenario = EncodingScenario::new(generator, initial, measurement, filter)
        .map_err(CliError::from)?;
    if dry_run {
        emit(None, &render_json(&dry_ok("metrology")))?;
        return Ok(());
    }
    let fisher = fisher_information(&scenario, p.theta)?;
    let fisher_kd = fisher_information_kd_form(&scenario, p.theta)?;
    if (fisher - fisher_kd).abs() > 1e-9 {
        return Err(CliError::numerical(format!(
            "Fisher information {fisher} and its KD form {fisher_kd} disagree"
        )));
    }
    let mut result = json!({
        "theta": jnum(p.theta),
        "fisher": jnum(fisher),
        "fisher_kd_form": jnum(fisher_kd),
        "qfi": jnum(qfi_pure(&scenario, p.theta)?),
    });
    if scenario.filter().is_some() {
        let report = distillation_report(&scenario, p.theta)?;
        result["postselected"] = json!({
            "fisher": jnum(report.i_ps),
            "probability": jnum(report.p_ps),
            "information_per_probe": jnum(report.product),
            "qfi": jnum(report.qfi),
            "efficiency": jnum(report.efficiency),
            "conditional_nonpositivity": jnum(report.conditional_nonpositivity),
            "variance_bound": jnum(spectral_gap(&scenario)?),
        });
    }
    emit(p.out.as_deref(), &render_json(&wrap("metrology", None, result)))
}

// --- thermo ---

/// TPM and KD work distributions with fluctuation-theorem checks.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoParams {
    /// Initial Hamiltonian file.
    #[arg(long)]
    pub h0: String,
    /// Final Hamiltonian file.
    #[arg(long)]
    pub h_tau: String,
    /// Drive unitary file.
    #[arg(long)]
    pub u: String,
    /// Inverse temperature.
    #[arg(long)]
    pub beta: f64,
    /// Initial state file (defaults to the thermal state of h0).
    #[arg(long)]
    #[serde(default)]
    pub state: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn work_distribution_json(w: &WorkDistribution) -> Value {
    let support: Vec<Value> = w.support().iter().map(|&x| jnum(x)).collect();
    let weights: Vec<Value> = w.weights().iter().map(|&z| jcomplex(z)).collect();
    json!({ "support": support, "weights": weights })
}

pub fn run_thermo(p: &ThermoParams, dry_run: bool) -> CliResult<()> {
    if p.beta <= 0.0 {
        return Err(CliError::validation(format!(
            "beta: inverse temperature must be positive, got {}",
            p.beta
        )));
    }
    let h0 = load_operator("h0", &p.h0)?;
    let htau = load_operator("h-tau", &p.h_tau)?;
    let u = load_operator("u", &p.u)?;
    h0.require_hermitian(1e-10)
        .map_err(|e| CliError::validation(format!("h0: {e}")))?;
    htau.require_hermitian(1e-10)
        .map_err(|e| CliError::validation(format!("h-tau: {e}")))?;
    u.require_unitary(1e-10)
        .map_err(|e| CliError::validation(format!("u: {e}")))?;
    if h0.dim() != htau.dim() || h0.dim() != u.dim() {
        return Err(CliError::validation(
            "h0, h-tau, and u must share a dimension".to_string(),
        ));
    }
    let (rho, thermal_initial) = match &p.state {
        Some(path) => {
            let rho = load_density("state", path)?;
            if rho.dim() != h0.dim() {
                return Err(CliError::validation(format!(
                    "state: dim {} does not match h0 dim {}",
                    rho.dim(),
                    h0.dim()
                )));
            }
            (rho, false)
        }
        None => (thermal_state(&h0, p.beta)?, true),
    };
    if dry_run {
        emit(None, &render_json(&dry_ok("thermo")))?;
        return Ok(());
    }
    let tpm = tpm_distribution(&rho, &h0, &htau, &u)?;
    let kd = kd_work_distribution(&rho, &h0, &htau, &u)?;
    let delta_f = free_energy_difference(&h0, &htau, p.beta)?;
    let jarzynski_lhs = tpm.exponential_average(p.beta).re;
    let jarzynski_rhs = (-p.beta * delta_f).exp();
    // KD first moment must equal the two-time energy difference exactly.
    let evolved = u.mul(&rho).mul(&u.dagger());
    let energy_difference =
        htau.expectation_in(&evolved).re - h0.expectation_in(&rho).re;
    let kd_mean = kd.mean();
    if (kd_mean.re - energy_difference).abs() > 1e-10 || kd_mean.im.abs() > 1e-10 {
        return Err(CliError::numerical(format!(
            "KD work first moment {kd_mean} deviates from the energy difference {energy_difference}"
        )));
    }
    if thermal_initial {
        let rel = (jarzynski_lhs - jarzynski_rhs).abs() / jarzynski_rhs.abs().max(1e-300);
        if rel > 1e-8 {
            return Err(CliError::numerical(format!(
                "Jarzynski check failed: ⟨exp(-βW)⟩ = {jarzynski_lhs} vs exp(-βΔF) = {jarzynski_rhs}"
            )));
        }
    }
    let result = json!({
        "beta": jnum(p.beta),
        "thermal_initial": thermal_initial,
        "tpm": work_distribution_json(&tpm),
        "kd": work_distribution_json(&kd),
        "free_energy_difference": jnum(delta_f),
        "jarzynski": { "exp_average": jnum(jarzynski_lhs), "exp_minus_beta_df": jnum(jarzynski_rhs) },
        "first_moment": { "kd_mean": jcomplex(kd_mean), "energy_difference": jnum(energy_difference) },
    });
    emit(p.out.as_deref(), &render_json(&wrap("thermo", None, result)))
}

// --- otoc ---

/// OTOC and work-distribution non-positivity trace on a transverse-field
/// Ising chain.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtocParams {
    /// Number of sites (2-8).
    #[arg(long)]
    pub n: usize,
    /// Ising coupling J.
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "default_j")]
    pub j: f64,
    /// Transverse field g.
    #[arg(long)]
    pub g: f64,
    /// Longitudinal field h.
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub h: f64,
    /// Inverse temperature.
    #[arg(long)]
    pub beta: f64,
    /// Time grid start:end:step.
    #[arg(long)]
    pub times: String,
    /// Site of the W operator (default 0).
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub w_site: usize,
    /// Site of the V operator (default n-1).
    #[arg(long)]
    #[serde(default)]
    pub v_site: Option<usize>,
    /// Pauli axis of W: X, Y, or Z.
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_axis")]
    pub w_axis: String,
    /// Pauli axis of V.
    #[arg(long, default_value = "Z")]
    #[serde(default = "default_axis")]
    pub v_axis: String,
    /// CSV output path.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn default_j() -> f64 {
    1.0
}

fn default_axis() -> String {
    "Z".to_string()
}

fn parse_axis(field: &str, s: &str) -> CliResult<PauliAxis> {
    match s {
        "X" | "x" => Ok(PauliAxis::X),
        "Y" | "y" => Ok(PauliAxis::Y),
        "Z" | "z" => Ok(PauliAxis::Z),
        other => Err(CliError::validation(format!(
            "{field}: unknown Pauli axis '{other}'"
        ))),
    }
}

fn otoc_config(p: &OtocParams, times: Vec<f64>) -> CliResult<SpinChainConfig> {
    let config = SpinChainConfig {
        n_sites: p.n,
        j: p.j,
        g: p.g,
        h: p.h,
        w_site: p.w_site,
        w_axis: parse_axis("w-axis", &p.w_axis)?,
        v_site: p.v_site.unwrap_or(p.n.saturating_sub(1)),
        v_axis: parse_axis("v-axis", &p.v_axis)?,
        times,
        beta: p.beta,
    };
    config.validate()?;
    Ok(config)
}

pub fn run_otoc(p: &OtocParams, threads: usize, dry_run: bool) -> CliResult<()> {
    let times = parse_time_grid(&p.times)?;
    let config = otoc_config(p, times.clone())?;
    if dry_run {
        emit(None, &render_json(&dry_ok("otoc")))?;
        return Ok(());
    }
    // Time points are independent; split the grid across workers and merge
    // in order, so the output is identical for any thread count.
    let trace = if threads <= 1 || times.len() <= 1 {
        nonpositivity_trace(&config)?
    } else {
        let workers = threads.min(times.len());
        let chunk = times.len().div_ceil(workers);
        let chunks: Vec<Vec<f64>> = times.chunks(chunk).map(|c| c.to_vec()).collect();
        let results = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|ts| {
                    let sub = SpinChainConfig { times: ts.clone(), ..config.clone() };
                    scope.spawn(move || nonpositivity_trace(&sub))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Vec<_>>()
        });
        let mut merged = Vec::with_capacity(times.len());
        for r in results {
            merged.extend(r?);
        }
        merged
    };
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|pt| {
            vec![
                csv_num(pt.t),
                csv_num(pt.re_f),
                csv_num(pt.im_f),
                csv_num(pt.c),
                csv_num(pt.n),
            ]
        })
        .collect();
    let csv = csv_document(None, &["t", "re_f", "im_f", "c", "n"], &rows);
    match &p.out {
        Some(path) => {
            emit(Some(path), &csv)?;
            let interval = peak_to_return_interval(&trace);
            let result = json!({
                "points_written": trace.len(),
                "csv": path,
                "peak_interval": interval.map(|iv| json!({
                    "t_peak": jnum(iv.t_peak),
                    "t_return": iv.t_return.map(jnum),
                    "interval": jnum(iv.interval),
                })),
            });
            emit(None, &render_json(&wrap("otoc", None, result)))
        }
        None => emit(None, &csv),
    }
}

// --- foundations ---

/// Leggett-Garg, consistent-histories, and KCBS computations.
#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoundationsParams {
    /// Task: kcbs, lg, or mz.
    #[arg(skip)]
    #[serde(default)]
    pub task: String,
    /// KCBS qutrit state: three amplitude digits (e.g. 001) or a state file.
    #[arg(long)]
    #[serde(default)]
    pub state: Option<String>,
    /// LG initial eigenstate index (0 or 1).
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub a_index: usize,
    /// LG polar angle of the first observable axis (radians).
    #[arg(long)]
    #[serde(default)]
    pub alpha_a: Option<f64>,
    /// LG polar angle of the second observable axis.
    #[arg(long)]
    #[serde(default)]
    pub alpha_b: Option<f64>,
    /// LG polar angle of the third observable axis.
    #[arg(long)]
    #[serde(default)]
    pub alpha_c: Option<f64>,
    /// Mach-Zehnder family: which-path or superposition.
    #[arg(long)]
    #[serde(default)]
    pub family: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<String>,
}

fn kcbs_state(spec: &str) -> CliResult<Operator> {
    let digits: Vec<u32> = spec.chars().filter_map(|c| c.to_digit(10)).collect();
    if digits.len() == 3 && digits.len() == spec.chars().count() {
        let psi = CVector::from_iterator(3, digits.iter().map(|&d| C64::new(d as f64, 0.0)));
        let norm = psi.norm();
        if norm <= 1e-12 {
            return Err(CliError::validation("state: zero amplitude triple".to_string()));
        }
        return Ok(Operator::projector(&psi.unscale(norm)));
    }
    load_density("state", spec)
}

/// Qubit basis whose +1 axis lies in the x-z plane at polar angle `alpha`.
fn polar_basis(alpha: f64) -> OrthonormalBasis {
    let (s, co) = ((alpha / 2.0).sin(), (alpha / 2.0).cos());
    OrthonormalBasis::new(vec![
        CVector::from_iterator(2, [C64::new(co, 0.0), C64::new(s, 0.0)]),
        CVector::from_iterator(2, [C64::new(-s, 0.0), C64::new(co, 0.0)]),
    ])
    .expect("rotation of the computational basis is orthonormal")
}

fn mz_histories(family: &str) -> CliResult<Vec<History>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let zero = CVector::from_iterator(2, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let one = CVector::from_iterator(2, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let plus = CVector::from_iterator(2, [C64::new(s, 0.0), C64::new(s, 0.0)]);
    let beam_splitter = Operator::from_fn(2, |i, j| match (i, j) {
        (0, 1) => C64::new(-s, 0.0),
        _ => C64::new(s, 0.0),
    })?;
    let projector = match family {
        "which-path" => Operator::projector(&zero),
        "superposition" => Operator::projector(&plus),
        other => {
            return Err(CliError::validation(format!(
                "family: expected which-path or superposition, got '{other}'"
            )))
        }
    };
    let base = History::new(
        Operator::projector(&zero),
        vec![(1.0, projector)],
        Operator::projector(&one),
        vec![beam_splitter.clone(), beam_splitter],
    )?;
    Ok(minimal_family(&base)?)
}

pub fn run_foundations(p: &FoundationsParams, dry_run: bool) -> CliResult<()> {
    match p.task.as_str() {
        "kcbs" => {
            let spec = p.state.as_deref().ok_or_else(|| {
                CliError::validation("state: the kcbs task needs --state".to_string())
            })?;
            let rho = kcbs_state(spec)?;
            if dry_run {
                emit(None, &render_json(&dry_ok("foundations kcbs")))?;
                return Ok(());
            }
            let s_direct = kcbs_s(&rho)?;
            let s_kd = kcbs_s_via_kd(&rho, None)?;
            if (s_direct - s_kd).abs() > 1e-9 {
                return Err(CliError::numerical(format!(
                    "direct KCBS correlator {s_direct} and KD form {s_kd} disagree"
                )));
            }
            let q = kcbs_extended_kd(&rho, None)?;
            let positive = is_kd_positive(&q, 1e-10).is_positive;
            let result = json!({
                "s_direct": jnum(s_direct),
                "s_kd": jnum(s_kd),
                "positive": positive,
                "bound_violated": s_direct < -3.0 - 1e-9,
            });
            emit(p.out.as_deref(), &render_json(&wrap("foundations kcbs", None, result)))
        }
        "lg" => {
            if p.a_index >= 2 {
                return Err(CliError::validation(format!(
                    "a-index: must be 0 or 1, got {}",
                    p.a_index
                )));
            }
            if dry_run {
                emit(None, &render_json(&dry_ok("foundations lg")))?;
                return Ok(());
            }
            let third = 2.0 * std::f64::consts::PI / 3.0;
            let a = polar_basis(p.alpha_a.unwrap_or(0.0));
            let b = polar_basis(p.alpha_b.unwrap_or(third / 2.0));
            let c = polar_basis(p.alpha_c.unwrap_or(third));
            let l = lg_correlator(p.a_index, &a, &b, &c)?;
            let report = lg_weak_value_form(p.a_index, &a, &b, &c)?;
            let q = lg_kd_distribution(p.a_index, &a, &b, &c);
            let entries: Vec<Value> = (0..2)
                .flat_map(|j| (0..2).map(move |k| (j, k)))
                .map(|(j, k)| json!({ "index": [j, k], "value": jcomplex(q[j][k]) }))
                .collect();
            let terms: Vec<Value> = report
                .terms
                .iter()
                .map(|t| {
                    json!({
                        "c_index": t.c_index,
                        "probability": jnum(t.probability),
                        "weak_value": jcomplex(t.weak_value),
                        "anomalous": t.anomalous,
                    })
                })
                .collect();
            let result = json!({
                "l": jnum(l),
                "l_weak_value_form": jnum(report.l),
                "violates_classical_bound": l > 1.0 + 1e-12,
                "kd_entries": entries,
                "weak_terms": terms,
            });
            emit(p.out.as_deref(), &render_json(&wrap("foundations lg", None, result)))
        }
        "mz" => {
            let family_name = p.family.as_deref().unwrap_or("which-path");
            let family = mz_histories(family_name)?;
            if dry_run {
                emit(None, &render_json(&dry_ok("foundations mz")))?;
                return Ok(());
            }
            let verdict = family_consistent(&family, 1e-10)?;
            let q01 = histories_overlap(&family[0], &family[1])?;
            let diagonal: Vec<Value> = verdict.diagonal.iter().map(|&x| jnum(x)).collect();
            let result = json!({
                "family": family_name,
                "interference": jcomplex(q01),
                "consistent": verdict.consistent,
                "diagonal": diagonal,
            });
            emit(p.out.as_deref(), &render_json(&wrap("foundations mz", None, result)))
        }
        other => Err(CliError::validation(format!(
            "foundations: unknown task '{other}' (expected kcbs, lg, or mz)"
        ))),
    }
}
