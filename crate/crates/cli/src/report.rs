use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// What every command writes. With `--no-timestamp` the two clock fields
/// are omitted and identical inputs give identical bytes.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub input_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u128>,
    pub verdict: bool,
    pub result: serde_json::Value,
}

impl RunReport {
    pub fn new(command: Vec<String>, input_sha256: String, verdict: bool, result: serde_json::Value) -> Self {
        RunReport {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input_sha256,
            timestamp_unix: None,
            elapsed_ms: None,
            verdict,
            result,
        }
    }

    pub fn stamp(&mut self, elapsed: Duration) {
        self.timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        self.elapsed_ms = Some(elapsed.as_millis());
    }

    /// Pretty JSON with a trailing newline, to `out` or standard output.
    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Failed(e.to_string()))?;
        text.push('\n');
        match out {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Failed(e.to_string()))
}
