//! Self-contained report envelopes and output plumbing.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::AppError;

/// Wall-clock timings, included only on request so default reports are
/// byte-identical across reruns.
#[derive(Debug, Serialize)]
pub struct Timings {
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

/// Every report carries the tool version, the command, the fully resolved
/// config, and the seed, so its contents are reconstructible.
#[derive(Debug, Serialize)]
pub struct ReportEnvelope<T: Serialize> {
    tool: ToolInfo,
    command: &'static str,
    config: serde_json::Value,
    seed: u64,
    outputs: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

impl<T: Serialize> ReportEnvelope<T> {
    pub fn new(command: &'static str, config: serde_json::Value, seed: u64, outputs: T) -> Self {
        ReportEnvelope {
            tool: ToolInfo { name: "dpcert", version: env!("CARGO_PKG_VERSION") },
            command,
            config,
            seed,
            outputs,
            timings: None,
        }
    }

    pub fn with_timings(mut self, started: Instant, include: bool) -> Self {
        if include {
            self.timings = Some(Timings { wall_seconds: started.elapsed().as_secs_f64() });
        }
        self
    }
}

/// Write a string to `--out` or stdout.
pub fn write_output(out: Option<&PathBuf>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            std::fs::write(path, content)
                .map_err(|e| AppError::Usage(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("report written to {}", path.display());
            Ok(())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| AppError::Usage(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, AppError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Usage(format!("serialization failed: {e}")))
}

/// RFC-4180 CSV: comma-separated, CRLF line endings. All our fields are
/// numeric or simple identifiers, so no quoting is ever needed.
pub fn csv_lines(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    }
    out
}

/// Load and deserialize a JSON config, rejecting unknown fields and
/// reporting the JSON pointer of the offending field on schema errors.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| AppError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut deserializer = serde_json::Deserializer::from_str(&raw);
    serde_path_to_error::deserialize(&mut deserializer).map_err(|e| {
        let pointer = format!("/{}", e.path().to_string().replace('.', "/"));
        AppError::Usage(format!(
            "config schema violation in {} at {pointer}: {}",
            path.display(),
            e.inner()
        ))
    })
}
