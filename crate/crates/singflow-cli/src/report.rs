//! Report writing. Every JSON report opens with the same header block:
//! tool version, config hash, the non-rigorous banner, and the list of
//! assumptions the run could not check. No timestamps — identical configs
//! must produce identical bytes.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::{CliError, CliResult};

pub const BANNER: &str = "numerical, non-rigorous";

pub fn tool_version() -> String {
    format!("singflow {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: String,
    config_hash: String,
    banner: &'static str,
    assumptions_unchecked: &'a [String],
    config: &'a RunConfig,
    #[serde(flatten)]
    payload: T,
}

/// Write header + payload as pretty JSON with a trailing newline.
pub fn write_report<T: Serialize>(
    path: &Path,
    config: &RunConfig,
    assumptions: &[String],
    payload: T,
) -> CliResult {
    let report = Report {
        tool: tool_version(),
        config_hash: config.hash(),
        banner: BANNER,
        assumptions_unchecked: assumptions,
        config,
        payload,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(path.to_owned(), e))
}
