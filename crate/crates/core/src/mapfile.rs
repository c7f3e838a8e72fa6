//! JSON map files.
//!
//! ```json
//! { "kind": "polynomial", "coeffs": [[1, 0], [1, 0], [1, 0]] }
//! { "kind": "mobius_special" }
//! { "kind": "family", "coeffs": [[[0, 0]], [[1, 0]], ...], "x0": [-1, 0] }
//! ```
//!
//! One-variable coefficient lists start at `z^1`; family matrices are indexed
//! `[k][j]` for `t^j z^k` and start at `z^0`. Every number may be written as a
//! JSON number or as a decimal string.

use std::path::Path;

use num_complex::Complex64;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::maps::{BivariateFamily, PolynomialMap};

#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    Map(PolynomialMap),
    Family(BivariateFamily),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapFile {
    pub spec: MapSpec,
    /// Marked point with `f_t(x0) = t`, if the file names one.
    pub x0: Option<Complex64>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidMap(msg.into())
}

fn real(v: &Value, at: &str) -> Result<f64> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| invalid(format!("{at}: expected a number or decimal string")))?;
    if !x.is_finite() {
        return Err(invalid(format!("{at}: non-finite value")));
    }
    Ok(x)
}

pub fn complex(v: &Value, at: &str) -> Result<Complex64> {
    match v.as_array().map(Vec::as_slice) {
        Some([re, im]) => Ok(Complex64::new(real(re, at)?, real(im, at)?)),
        _ => Err(invalid(format!("{at}: expected [re, im]"))),
    }
}

fn list<'a>(v: &'a Value, at: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| invalid(format!("{at}: expected an array")))
}

pub fn parse(text: &str) -> Result<MapFile> {
    let doc: Value = serde_json::from_str(text).map_err(|e| invalid(format!("JSON: {e}")))?;
    let kind = doc
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("missing \"kind\""))?;
    let coeffs = doc.get("coeffs");
    let spec = match kind {
        "mobius_special" => MapSpec::Map(PolynomialMap::mobius_special()),
        "polynomial" => {
            let items = list(
                coeffs.ok_or_else(|| invalid("missing \"coeffs\""))?,
                "coeffs",
            )?;
            let cs = items
                .iter()
                .enumerate()
                .map(|(i, v)| complex(v, &format!("coeffs[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            MapSpec::Map(PolynomialMap::polynomial(cs)?)
        }
        "family" => {
            let rows = list(
                coeffs.ok_or_else(|| invalid("missing \"coeffs\""))?,
                "coeffs",
            )?;
            let matrix = rows
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    list(row, &format!("coeffs[{k}]"))?
                        .iter()
                        .enumerate()
                        .map(|(j, v)| complex(v, &format!("coeffs[{k}][{j}]")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            MapSpec::Family(BivariateFamily::new(matrix)?)
        }
        other => return Err(invalid(format!("unknown kind {other:?}"))),
    };
    let x0 = doc.get("x0").map(|v| complex(v, "x0")).transpose()?;
    Ok(MapFile { spec, x0 })
}

pub fn load(path: &Path) -> Result<MapFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse(&text)
}
