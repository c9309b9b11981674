use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use finpop::report::{round_sig, REPORT_DIGITS};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Destination of the primary output: stdout or `--out`.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().map(|x| round_sig(x, REPORT_DIGITS)) {
                if let Some(r) = serde_json::Number::from_f64(x) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Report JSON with probabilities cut to the report precision.
pub fn report_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(value).map_err(CliError::internal)?;
    round_floats(&mut v);
    serde_json::to_string_pretty(&v).map_err(CliError::internal)
}

/// Plans are inputs to later commands and keep full precision.
pub fn plan_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(CliError::internal)
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut w = open(path)?;
    writeln!(w, "{text}").map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

pub fn write_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(open(path)?);
    for row in rows {
        w.serialize(row).map_err(CliError::internal)?;
    }
    w.flush().map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

impl Sink {
    /// A report that has a JSON form and, optionally, a table form.
    pub fn emit<T: Serialize, R: Serialize>(&self, value: &T, table: Option<&[R]>) -> Result<(), CliError> {
        match (self.format, table) {
            (Format::Json, _) => write_text(self.out.as_deref(), &report_json(value)?),
            (Format::Csv, Some(rows)) => write_csv(self.out.as_deref(), rows),
            (Format::Csv, None) => Err(CliError::usage("CSV output is only available for tabular reports")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_integers() {
        let mut v = serde_json::json!({"n": 3023, "p": 0.123456789012345678, "xs": [1.0000000000004, 7]});
        round_floats(&mut v);
        assert_eq!(v["n"], 3023);
        assert_eq!(v["p"], 0.123456789012);
        assert_eq!(v["xs"][0], 1.0);
        assert_eq!(v["xs"][1], 7);
    }
}
