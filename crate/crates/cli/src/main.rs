mod args;
mod commands;
mod manifest;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use manifest::RunManifest;

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("QSPEC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("QSPEC_THREADS={v} is not a thread count"))?;
    if n == 0 {
        return Err("QSPEC_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    let start = Instant::now();
    let out = match commands::run(&cli.command) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let text = match &out.csv {
        Some(csv) => csv.clone(),
        None => serde_json::to_string_pretty(&out.json).expect("output serializes") + "\n",
    };
    // a closed pipe downstream is not an error of ours
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    let code = if out.failed { EXIT_FAILED_CHECK } else { 0 };
    if let Some(path) = &cli.manifest {
        let m = RunManifest::new(&argv, &cli.command, &out, i32::from(code), start.elapsed());
        if let Err(e) = m.write(path) {
            eprintln!("error: cannot write manifest {path}: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    ExitCode::from(code)
}
