//! Input file schemas (states, operators, bases) and deterministic output
//! formatting.
//!
//! Complex numbers appear in input JSON either as a plain number (purely
//! real) or as a two-element array `[re, im]`. Floats are emitted with 17
//! significant digits in JSON (exact f64 round trip) and 12 in CSV.

use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{Number, Value};

use kdlab_core::hilbert::{make_dft_basis, CMatrix, CVector, Operator, OrthonormalBasis, C64};

use crate::error::{json_error, CliError, CliResult};

/// A complex scalar: `3.5` or `[3.5, -1.0]`.
#[derive(Debug, Clone, Copy)]
pub enum CNum {
    Real(f64),
    Pair(f64, f64),
}

// Manual impl: an untagged derive would break under serde_json's
// arbitrary-precision number representation.
impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let value = Value::deserialize(d)?;
        let as_f64 = |v: &Value| -> Result<f64, D::Error> {
            v.as_f64()
                .ok_or_else(|| D::Error::custom(format!("expected a number, got {v}")))
        };
        match &value {
            Value::Number(_) => Ok(CNum::Real(as_f64(&value)?)),
            Value::Array(parts) if parts.len() == 2 => {
                Ok(CNum::Pair(as_f64(&parts[0])?, as_f64(&parts[1])?))
            }
            other => Err(D::Error::custom(format!(
                "expected a number or a [re, im] pair, got {other}"
            ))),
        }
    }
}

impl CNum {
    pub fn to_c64(self) -> C64 {
        match self {
            CNum::Real(re) => Complex64::new(re, 0.0),
            CNum::Pair(re, im) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    #[serde(default)]
    vector: Option<Vec<CNum>>,
    #[serde(default)]
    density: Option<Vec<Vec<CNum>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    matrix: Vec<Vec<CNum>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisFile {
    /// Basis vectors, one inner list per vector.
    columns: Vec<Vec<CNum>>,
}

fn read_json<T: serde::de::DeserializeOwned>(field: &str, path: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{field}: cannot read '{path}': {e}")))?;
    serde_json::from_str(&text).map_err(|e| json_error(&format!("{field} ('{path}')"), &e))
}

fn square_matrix(field: &str, rows: &[Vec<CNum>]) -> CliResult<CMatrix> {
    let d = rows.len();
    if d == 0 {
        return Err(CliError::validation(format!("{field}: empty matrix")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(CliError::validation(format!(
                "{field}: matrix is not square (row {i} has {} entries, expected {d})",
                row.len()
            )));
        }
    }
    Ok(CMatrix::from_fn(d, d, |i, j| rows[i][j].to_c64()))
}

/// Load a state file (`{"vector": …}` or `{"density": …}`) as a density
/// operator. Pure vectors are normalized; densities are validated.
pub fn load_density(field: &str, path: &str) -> CliResult<Operator> {
    let file: StateFile = read_json(field, path)?;
    match (file.vector, file.density) {
        (Some(v), None) => {
            let psi = vector_from(field, &v)?;
            Ok(Operator::projector(&psi))
        }
        (None, Some(rows)) => {
            let op = Operator::new(square_matrix(field, &rows)?)
                .map_err(|e| CliError::validation(format!("{field}: {e}")))?;
            op.require_density()
                .map_err(|e| CliError::validation(format!("{field}: {e}")))?;
            Ok(op)
        }
        _ => Err(CliError::validation(format!(
            "{field}: provide exactly one of 'vector' or 'density'"
        ))),
    }
}

/// Load a state file as a pure state vector (rejects densities).
pub fn load_vector(field: &str, path: &str) -> CliResult<CVector> {
    let file: StateFile = read_json(field, path)?;
    match (file.vector, file.density) {
        (Some(v), None) => vector_from(field, &v),
        _ => Err(CliError::validation(format!(
            "{field}: this command needs a pure state ('vector')"
        ))),
    }
}

fn vector_from(field: &str, entries: &[CNum]) -> CliResult<CVector> {
    if entries.is_empty() {
        return Err(CliError::validation(format!("{field}: empty vector")));
    }
    let psi = CVector::from_iterator(entries.len(), entries.iter().map(|c| c.to_c64()));
    let norm = psi.norm();
    if norm <= 1e-12 {
        return Err(CliError::validation(format!("{field}: zero vector")));
    }
    Ok(psi.unscale(norm))
}

/// Load an operator file (`{"matrix": …}`).
pub fn load_operator(field: &str, path: &str) -> CliResult<Operator> {
    let file: OperatorFile = read_json(field, path)?;
    Operator::new(square_matrix(field, &file.matrix)?)
        .map_err(|e| CliError::validation(format!("{field}: {e}")))
}

/// Resolve a basis spec for dimension `d`: the names `Z` (computational),
/// `X` (discrete Fourier; Hadamard for qubits), `Y` (qubit circular), or a
/// path to a `{"columns": …}` file.
pub fn load_basis(field: &str, spec: &str, d: usize) -> CliResult<OrthonormalBasis> {
    match spec {
        "Z" => OrthonormalBasis::computational(d)
            .map_err(|e| CliError::validation(format!("{field}: {e}"))),
        "X" => make_dft_basis(d).map_err(|e| CliError::validation(format!("{field}: {e}"))),
        "Y" => {
            if d != 2 {
                return Err(CliError::validation(format!(
                    "{field}: basis 'Y' is qubit-only, state has dim {d}"
                )));
            }
            let s = std::f64::consts::FRAC_1_SQRT_2;
            OrthonormalBasis::new(vec![
                CVector::from_iterator(2, [C64::new(s, 0.0), C64::new(0.0, s)]),
                CVector::from_iterator(2, [C64::new(s, 0.0), C64::new(0.0, -s)]),
            ])
            .map_err(|e| CliError::validation(format!("{field}: {e}")))
        }
        path => {
            let file: BasisFile = read_json(field, path)?;
            let mut vectors = Vec::with_capacity(file.columns.len());
            for (k, col) in file.columns.iter().enumerate() {
                if col.len() != d {
                    return Err(CliError::validation(format!(
                        "{field}: basis vector {k} has dim {} but the state has dim {d}",
                        col.len()
                    )));
                }
                vectors.push(vector_from(&format!("{field}[{k}]"), col)?);
            }
            OrthonormalBasis::new(vectors)
                .map_err(|e| CliError::validation(format!("{field}: {e}")))
        }
    }
}

/// Parse a `start:end:step` time grid (inclusive of the endpoint up to
/// rounding).
pub fn parse_time_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::validation(format!(
            "times: expected start:end:step, got '{spec}'"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| CliError::validation(format!("times: '{p}' is not a number")))
        })
        .collect::<CliResult<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || end < start {
        return Err(CliError::validation(
            "times: need step > 0 and end >= start".to_string(),
        ));
    }
    let count = ((end - start) / step + 1.0 + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(CliError::validation(format!("times: {count} points is too many")));
    }
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

/// Effective worker count: `--threads`, else `KDLAB_THREADS`, else 1.
pub fn thread_count(flag: Option<usize>) -> CliResult<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("KDLAB_THREADS") {
            Ok(v) => v.parse::<usize>().map_err(|_| {
                CliError::validation(format!("KDLAB_THREADS: '{v}' is not a thread count"))
            })?,
            Err(_) => 1,
        },
    };
    Ok(n.max(1))
}

// --- output formatting ---

/// A float as a JSON number with 17 significant digits (exact round trip).
///
/// The exponent sign is always explicit ("e+0", not "e0") so that every
/// serialization path in serde_json produces identical bytes.
pub fn jnum(x: f64) -> Value {
    assert!(x.is_finite(), "non-finite value in output: {x}");
    let mut text = format!("{x:.16e}");
    let e = text.find('e').expect("exponent in scientific notation");
    if !matches!(text.as_bytes()[e + 1], b'+' | b'-') {
        text.insert(e + 1, '+');
    }
    Value::Number(Number::from_string_unchecked(text))
}

/// A complex value as `[re, im]`.
pub fn jcomplex(z: C64) -> Value {
    Value::Array(vec![jnum(z.re), jnum(z.im)])
}

/// A float formatted for CSV: 12 significant digits.
pub fn csv_num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Assemble a CSV document: provenance comment, header, rows. LF endings.
pub fn csv_document(seed: Option<u64>, header: &[&str], rows: &[Vec<String>]) -> String {
    let seed_text = match seed {
        Some(s) => s.to_string(),
        None => "none".to_string(),
    };
    let mut out = format!(
        "# kdlab {} seed={seed_text}\n{}\n",
        env!("CARGO_PKG_VERSION"),
        header.join(",")
    );
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Write a result to `--out` or stdout.
pub fn emit(out: Option<&str>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::validation(format!("out: cannot write '{path}': {e}"))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Render a JSON value with a trailing newline.
pub fn render_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}
