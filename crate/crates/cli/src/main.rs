use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

mod config;
mod run;

use config::RunConfig;
use run::{Command, Failure};

/// Pressure, Bowen numbers and the pressure metric on polynomial families.
#[derive(Debug, Parser)]
#[command(name = "julia-thermo", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration, or a JSON result to re-run.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    verbose: bool,
}

const EXIT_COMPUTE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn write_json(path: &Path, doc: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("json values serialize");
    text.push('\n');
    std::fs::write(path, text)
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.threads == Some(0) {
        eprintln!("config error: --threads must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("config error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if cli.verbose {
        eprintln!("{} on {} thread(s)", cli.command.name(), threads);
    }

    let start = Instant::now();
    let outcome = julia_thermo::par::with_threads(threads, || run::run(cli.command, &config));
    let elapsed = start.elapsed().as_secs_f64();

    let stem = config
        .output
        .stem
        .clone()
        .unwrap_or_else(|| cli.command.name().to_string());
    let json_path = cli.out.join(format!("{stem}.json"));
    let base = |result: Value, mut diagnostics: Value, status: &str| {
        if let Value::Object(map) = &mut diagnostics {
            map.insert("status".into(), json!(status));
            map.insert("command".into(), json!(cli.command.name()));
            map.insert("threads".into(), json!(threads));
            map.insert("elapsed_seconds".into(), json!(elapsed));
        }
        json!({
            "config": config,
            "result": result,
            "diagnostics": diagnostics,
            "version": env!("CARGO_PKG_VERSION"),
        })
    };

    match outcome {
        Ok(out) => {
            if let Some((header, rows)) = &out.table {
                let csv_path = cli.out.join(format!("{stem}.csv"));
                if let Err(e) = write_csv(&csv_path, header, rows) {
                    eprintln!("error: writing {}: {e}", csv_path.display());
                    return ExitCode::from(EXIT_COMPUTE);
                }
                if cli.verbose {
                    eprintln!("wrote {}", csv_path.display());
                }
            }
            let doc = base(out.result, out.diagnostics, "ok");
            if let Err(e) = write_json(&json_path, &doc) {
                eprintln!("error: writing {}: {e}", json_path.display());
                return ExitCode::from(EXIT_COMPUTE);
            }
            if cli.verbose {
                eprintln!("wrote {} in {elapsed:.2}s", json_path.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("computation failed: {e}");
            let doc = base(Value::Null, json!({ "error": e.to_string() }), "error");
            if let Err(w) = write_json(&json_path, &doc) {
                eprintln!("error: writing {}: {w}", json_path.display());
            }
            ExitCode::from(EXIT_COMPUTE)
        }
    }
}
