//! Config files, output headers and writers.
//!
//! Every file starts with `# ` lines holding the command and its effective
//! configuration as TOML, so passing an earlier output back through
//! `--config` reproduces it.

use crate::CliError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Reads a TOML config, a previous CSV output (its `# ` header) or a
/// previous JSON report (its `config` field).
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(trimmed).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = v.get("config").cloned().unwrap_or(v);
        return serde_json::from_value(cfg).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    let toml_text = if trimmed.starts_with("# damcmc ") {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .skip(1)
            .map(|l| l.strip_prefix("# ").unwrap_or(""))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        text
    };
    toml::from_str(&toml_text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Header text: the command name followed by the config as TOML.
pub fn header<T: Serialize>(command: &str, cfg: &T) -> Result<String, CliError> {
    let body = toml::to_string(cfg).map_err(|e| CliError::Config(format!("cannot serialise config: {e}")))?;
    Ok(format!("damcmc {command}\n{body}"))
}

/// Opens `path`, or stdout for `None` / `-`.
pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

/// Writes `header` as `# ` lines, then a CSV header row and rows.
pub fn write_csv(path: Option<&Path>, header: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = open(path)?;
    for line in header.lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{}", columns.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with the effective config under `config`. Wall-clock fields
/// are dropped so reruns are byte-identical.
pub fn write_json<T: Serialize>(path: Option<&Path>, command: &str, cfg: &T, mut report: serde_json::Value) -> Result<(), CliError> {
    strip_wall_clock(&mut report);
    let doc = serde_json::json!({ "command": command, "config": cfg, "report": report });
    let mut w = open(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn strip_wall_clock(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove("wall_seconds");
            map.values_mut().for_each(strip_wall_clock);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

/// Shortest round-trip formatting; empty for `None`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
