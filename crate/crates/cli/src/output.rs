//! Report envelopes, CSV formatting, and file emission. All numeric CSV
//! fields are printed with 17 significant digits so a re-read
//! round-trips exactly; outputs are buffered and written only after the
//! whole run succeeds, so a failed run leaves no partial files.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VERSION_STRING: &str = concat!(
    env!("CARGO_PKG_NAME"),
    " ",
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("GIT_DESCRIBE"),
    ")"
);

/// 17 significant digits: enough to reproduce any f64 bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct RunOutput {
    /// `(file name, contents)` pairs, written into the output directory.
    pub files: Vec<(String, String)>,
    /// Subcommand-specific results embedded in the report.
    pub results: Value,
    /// One-line human summaries printed to stdout.
    pub summary: Vec<String>,
}

impl RunOutput {
    pub fn new(results: Value) -> RunOutput {
        RunOutput {
            files: Vec::new(),
            results,
            summary: Vec::new(),
        }
    }

    pub fn with_file(mut self, name: &str, contents: String) -> RunOutput {
        self.files.push((name.to_string(), contents));
        self
    }

    pub fn with_summary(mut self, line: String) -> RunOutput {
        self.summary.push(line);
        self
    }
}

/// Write the artifacts plus the `report.json` envelope (resolved config,
/// binary version, results).
pub fn emit(
    out_dir: &Path,
    subcommand: &str,
    config: &ExperimentConfig,
    output: &RunOutput,
) -> Result<(), CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", out_dir.display())))?;
    let report = json!({
        "version": VERSION_STRING,
        "subcommand": subcommand,
        "config": config,
        "results": output.results,
    });
    let mut files = output.files.clone();
    files.push((
        "report.json".to_string(),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    ));
    for (name, contents) in &files {
        let path = out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub struct CsvBuilder {
    buf: String,
}

impl CsvBuilder {
    pub fn new(header: &str) -> CsvBuilder {
        CsvBuilder {
            buf: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}
