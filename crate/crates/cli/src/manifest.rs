//! Run manifests: everything needed to re-run a command and check that it
//! reproduces its output.

use std::time::Duration;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{Cli, Command};
use crate::commands::{self, CliError, CliResult, Output};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub argv: Vec<String>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub wall_time_s: f64,
    /// Parsed arguments, defaults filled in.
    pub inputs: Value,
    pub outputs: Value,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(argv: &[String], cmd: &Command, out: &Output, exit_code: i32, wall: Duration) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            argv: argv.to_vec(),
            seeds: out.seeds.clone(),
            threads: rayon::current_num_threads(),
            wall_time_s: wall.as_secs_f64(),
            inputs: serde_json::to_value(cmd).expect("arguments serialize"),
            outputs: out.json.clone(),
            exit_code,
        }
    }

    pub fn write(&self, path: &str) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
    }
}

/// Drops `--manifest FILE` / `--manifest=FILE` so a replay does not
/// overwrite the file it is reading.
fn strip_manifest(argv: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--manifest" {
            it.next();
        } else if !a.starts_with("--manifest=") {
            out.push(a.clone());
        }
    }
    out
}

pub fn replay(path: &str) -> CliResult<Output> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {path}: {e}")))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{path} is not a run manifest: {e}")))?;
    let argv = strip_manifest(&m.argv);
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Input(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Input("a replay manifest cannot be replayed".into()));
    }
    let out = commands::run(&cli.command)?;
    let exit_code = i32::from(out.failed);
    let outputs_match = out.json == m.outputs;
    let exit_matches = exit_code == m.exit_code;
    let reproduced = outputs_match && exit_matches;
    if !reproduced {
        eprintln!("replay of {path} differs from the recorded run");
    }
    Ok(Output {
        json: json!({
            "manifest": path,
            "argv": argv,
            "recorded_threads": m.threads,
            "threads": rayon::current_num_threads(),
            "outputs_match": outputs_match,
            "exit_code_matches": exit_matches,
            "reproduced": reproduced,
        }),
        csv: None,
        failed: !reproduced,
        seeds: out.seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_manifest_flags() {
        let argv: Vec<String> = ["qspec", "--manifest", "a.json", "eigen", "--manifest=b.json", "--p", "2"]
            .map(String::from)
            .to_vec();
        assert_eq!(strip_manifest(&argv), ["qspec", "eigen", "--p", "2"]);
    }
}
