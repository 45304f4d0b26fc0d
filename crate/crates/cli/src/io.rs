//! JSON exchange formats for matrices, Kraus sets and instruments, and the
//! report writer.

use std::io::Write;

use locc_core::channels::{Instrument, KrausSet};
use locc_core::{ComplexMatrix, PartyDims, C64};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what}: {why}")]
    Shape { what: &'static str, why: String },
    #[error(transparent)]
    Core(#[from] locc_core::Error),
}

fn shape(what: &'static str, why: impl Into<String>) -> InputError {
    InputError::Shape { what, why: why.into() }
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
pub fn load(arg: &str) -> Result<Value, InputError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        std::fs::read_to_string(arg).map_err(|source| InputError::Read { path: arg.into(), source })?
    };
    Ok(serde_json::from_str(&text)?)
}

fn get<'a>(v: &'a Value, key: &str, what: &'static str) -> Result<&'a Value, InputError> {
    v.get(key).ok_or_else(|| shape(what, format!("missing \"{key}\"")))
}

fn as_usize(v: &Value, what: &'static str) -> Result<usize, InputError> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| shape(what, format!("expected a non-negative integer, got {v}")))
}

fn usize_list(v: &Value, what: &'static str) -> Result<Vec<usize>, InputError> {
    v.as_array()
        .ok_or_else(|| shape(what, "expected an array of integers"))?
        .iter()
        .map(|x| as_usize(x, what))
        .collect()
}

/// {"rows": r, "cols": c, "data": [[re, im], ...]} in row-major order.
pub fn parse_matrix(v: &Value) -> Result<ComplexMatrix, InputError> {
    const WHAT: &str = "matrix";
    let rows = as_usize(get(v, "rows", WHAT)?, WHAT)?;
    let cols = as_usize(get(v, "cols", WHAT)?, WHAT)?;
    let data = get(v, "data", WHAT)?.as_array().ok_or_else(|| shape(WHAT, "\"data\" is not an array"))?;
    if data.len() != rows * cols {
        return Err(shape(WHAT, format!("{} entries for a {rows}x{cols} matrix", data.len())));
    }
    let entries = data
        .iter()
        .map(|e| match e.as_array().map(|p| p.as_slice()) {
            Some([a, b]) => match (a.as_f64(), b.as_f64()) {
                (Some(a), Some(b)) => Ok(C64::new(a, b)),
                _ => Err(shape(WHAT, format!("non-numeric entry {e}"))),
            },
            _ => Err(shape(WHAT, format!("entry {e} is not a [re, im] pair"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComplexMatrix::from_vec(rows, cols, entries)?)
}

/// {"dims": {"in": [...], "out": [...]}, "operators": [matrix, ...]}.
pub fn parse_kraus(v: &Value) -> Result<KrausSet, InputError> {
    const WHAT: &str = "Kraus set";
    let dims = get(v, "dims", WHAT)?;
    let d_in = PartyDims::new(usize_list(get(dims, "in", WHAT)?, WHAT)?)?;
    let d_out = PartyDims::new(usize_list(get(dims, "out", WHAT)?, WHAT)?)?;
    let ops = get(v, "operators", WHAT)?
        .as_array()
        .ok_or_else(|| shape(WHAT, "\"operators\" is not an array"))?
        .iter()
        .map(parse_matrix)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KrausSet::new(ops, d_in, d_out)?)
}

/// A Kraus set with "partition": [[indices], ...].
pub fn parse_instrument(v: &Value) -> Result<Instrument, InputError> {
    const WHAT: &str = "instrument";
    let kraus = parse_kraus(v)?;
    let partition = get(v, "partition", WHAT)?
        .as_array()
        .ok_or_else(|| shape(WHAT, "\"partition\" is not an array"))?
        .iter()
        .map(|b| usize_list(b, WHAT))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Instrument::new(kraus, partition)?)
}

pub fn matrix_json(m: &ComplexMatrix) -> Value {
    json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "data": m.data().iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
    })
}

pub fn kraus_json(k: &KrausSet) -> Value {
    json!({
        "dims": {"in": k.input_dims().dims(), "out": k.output_dims().dims()},
        "operators": k.operators().iter().map(matrix_json).collect::<Vec<_>>(),
    })
}

/// Prints floats with 17 significant digits.
struct Precise;

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

pub fn render(report: &Map<String, Value>) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Precise);
    serde::Serialize::serialize(report, &mut ser).expect("in-memory JSON");
    String::from_utf8(out).expect("JSON is UTF-8")
}
