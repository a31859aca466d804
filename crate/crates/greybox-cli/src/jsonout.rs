//! Deterministic JSON output: object keys sorted (serde_json's default map),
//! every float rounded to 12 significant digits, one trailing newline.

use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// Round to 12 significant digits through the decimal representation.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(sig12(f)) {
                        *v = Value::Number(rounded);
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, data: &T) -> Result<(), CliError> {
    let mut value = serde_json::to_value(data)
        .map_err(|e| CliError::Input(format!("serializing {}: {e}", path.display())))?;
    round_value(&mut value);
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::Input(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Input(format!("writing {}: {e}", path.display())))
}
