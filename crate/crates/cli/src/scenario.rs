//! Scenario files: a JSON description of one command invocation, either
//! validated (`kdlab validate`) or executed (`kdlab run`).
//!
//! Schema:
//! ```json
//! { "version": "1", "command": "kd", "params": { … }, "seed": 7, "output": "q.json" }
//! ```
//! `params` mirrors the command's flags (snake_case keys); unknown fields
//! anywhere are rejected. Top-level `seed` and `output` fill the
//! corresponding params when those are absent.

use serde::Deserialize;
use serde_json::Value;

use crate::commands::{
    self, CircuitParams, FoundationsParams, GeometryParams, KdParams, MetrologyParams,
    OtocParams, ThermoParams, WeakParams, WitnessParams,
};
use crate::error::{json_error, CliError, CliResult};

const SUPPORTED_VERSIONS: &[&str] = &["1"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: String,
    command: String,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<String>,
}

fn load(path: &str) -> CliResult<ScenarioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("scenario: cannot read '{path}': {e}")))?;
    let scenario: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| json_error(&format!("scenario ('{path}')"), &e))?;
    if !SUPPORTED_VERSIONS.contains(&scenario.version.as_str()) {
        return Err(CliError::validation(format!(
            "scenario: unsupported version '{}' (supported: {})",
            scenario.version,
            SUPPORTED_VERSIONS.join(", ")
        )));
    }
    Ok(scenario)
}

fn merged_params(scenario: &ScenarioFile) -> CliResult<Value> {
    let mut params = match &scenario.params {
        Value::Null => Value::Object(Default::default()),
        Value::Object(m) => Value::Object(m.clone()),
        _ => {
            return Err(CliError::validation(
                "scenario: 'params' must be a JSON object".to_string(),
            ))
        }
    };
    let map = params.as_object_mut().expect("object by construction");
    if let Some(seed) = scenario.seed {
        map.entry("seed").or_insert(Value::from(seed));
    }
    if let Some(output) = &scenario.output {
        map.entry("out").or_insert(Value::from(output.clone()));
    }
    Ok(params)
}

fn parse<T: serde::de::DeserializeOwned>(command: &str, params: Value) -> CliResult<T> {
    serde_json::from_value(params).map_err(|e| json_error(&format!("params for '{command}'"), &e))
}

fn dispatch(scenario: &ScenarioFile, threads: usize, dry_run: bool) -> CliResult<()> {
    let params = merged_params(scenario)?;
    match scenario.command.as_str() {
        "kd" => commands::run_kd(&parse::<KdParams>("kd", params)?, dry_run),
        "witness" => commands::run_witness(&parse::<WitnessParams>("witness", params)?, dry_run),
        "geometry" => {
            commands::run_geometry(&parse::<GeometryParams>("geometry", params)?, dry_run)
        }
        "weak" => commands::run_weak(&parse::<WeakParams>("weak", params)?, dry_run),
        "circuit" => commands::run_circuit(&parse::<CircuitParams>("circuit", params)?, dry_run),
        "metrology" => {
            commands::run_metrology(&parse::<MetrologyParams>("metrology", params)?, dry_run)
        }
        "thermo" => commands::run_thermo(&parse::<ThermoParams>("thermo", params)?, dry_run),
        "otoc" => commands::run_otoc(&parse::<OtocParams>("otoc", params)?, threads, dry_run),
        "foundations" => {
            commands::run_foundations(&parse::<FoundationsParams>("foundations", params)?, dry_run)
        }
        other => Err(CliError::validation(format!(
            "scenario: unknown command '{other}'"
        ))),
    }
}

/// Execute a scenario file.
pub fn run(path: &str, threads: usize) -> CliResult<()> {
    let scenario = load(path)?;
    dispatch(&scenario, threads, false)
}

/// Validate a scenario file (schema, referenced files, dimensions) without
/// executing the computation. Prints a short report.
pub fn validate(path: &str) -> CliResult<()> {
    let scenario = load(path)?;
    dispatch(&scenario, 1, true)
}
