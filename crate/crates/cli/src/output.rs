use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const TOOL: &str = "sindex";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every artifact carries the tool version and the effective configuration.
#[derive(Serialize)]
pub struct Artifact<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a Value,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, config: &Value, result: T) -> Result<()> {
    let artifact = Artifact {
        tool: TOOL,
        version: VERSION,
        command,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&artifact)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `17` significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with a `#`-prefixed provenance preamble.
pub fn write_csv(path: &Path, command: &str, config: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# {TOOL} {VERSION} {command}")?;
    writeln!(buf, "# config {}", serde_json::to_string(config)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Elapsed time goes next to the artifact so the artifact itself stays reproducible.
pub fn write_timing(out: &Path, command: &str, elapsed: Duration) -> Result<()> {
    let path = sibling(out, "timing.json");
    let body = json!({ "tool": TOOL, "version": VERSION, "command": command, "wallclock_secs": elapsed.as_secs_f64() });
    fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&body)?))
        .with_context(|| format!("writing {}", path.display()))
}

/// `out.json` with suffix `csv` becomes `out.csv`; an extension-less path gains one.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
