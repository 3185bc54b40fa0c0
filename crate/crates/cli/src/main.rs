use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use iotweave::demo::{run_demo, Goldens};
use iotweave::manifest::load_manifest;
use iotweave::metrics::{classes_delta, format_delta, render_report, CohesionReport, ReportFormat};
use iotweave::middleware::BuildMode;
use iotweave::scenario::parse_scenario;
use iotweave::sim::trace::{to_jsonl, EventKind};
use iotweave::sim::simulate;

const USAGE: u8 = 1;
const INPUT: u8 = 2;
const FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "iotweave", version, about = "Tangled vs woven IoT middleware: simulation and cohesion metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario against one build and write its trace as JSONL.
    Simulate {
        #[arg(long)]
        mode: BuildMode,
        #[arg(long)]
        scenario: PathBuf,
        /// Trace destination; stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Overrides the scenario's link seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cohesion report for one manifest.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Side-by-side report for two manifests, with the CoI(J) difference.
    Compare {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Build both versions, verify them and print the comparison table.
    Demo {
        /// Also write manifests, traces and report.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory holding the expected manifests (defaults to the shipped ones).
        #[arg(long)]
        golden: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn report_of(path: &Path) -> Result<CohesionReport<f64>, Failure> {
    let m = load_manifest(path).map_err(|e| fail(INPUT, format!("{}: {e}", path.display())))?;
    Ok(CohesionReport::from_manifest(&m))
}

fn emit(text: &str) -> Result<(), Failure> {
    io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| fail(FAILURE, format!("cannot write output: {e}")))
}

fn simulate_cmd(mode: BuildMode, scenario: &Path, trace: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let text = fs::read_to_string(scenario).map_err(|e| fail(INPUT, format!("{}: {e}", scenario.display())))?;
    let mut parsed = parse_scenario(&text).map_err(|e| fail(INPUT, format!("{}: {e}", scenario.display())))?;
    if let Some(seed) = seed {
        parsed = parsed.with_seed(seed);
    }
    let world = simulate(&parsed, mode).map_err(|e| fail(FAILURE, format!("internal fault: {e}")))?;
    let jsonl = to_jsonl(world.trace());
    match trace {
        Some(p) => fs::write(p, &jsonl).map_err(|e| fail(FAILURE, format!("{}: {e}", p.display())))?,
        None => emit(&jsonl)?,
    }
    let count = |k: EventKind| world.trace().iter().filter(|e| e.kind == k).count();
    eprintln!(
        "mode={} events={} sessions={} delivered={} transfer_failed={} final_tick={}",
        mode.as_str(),
        world.trace().len(),
        count(EventKind::SessionEstablished),
        world
            .trace()
            .iter()
            .filter(|e| e.kind == EventKind::Delivered && e.module != "Transport")
            .count(),
        count(EventKind::TransferFailed),
        world.clock()
    );
    Ok(())
}

fn render(reports: &[CohesionReport<f64>], format: ReportFormat) -> Result<String, Failure> {
    render_report(reports, format).map_err(|e| fail(FAILURE, e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            mode,
            scenario,
            trace,
            seed,
        } => simulate_cmd(mode, &scenario, trace.as_deref(), seed),
        Command::Metrics { manifest, format } => {
            let r = report_of(&manifest)?;
            emit(&render(&[r], format)?)
        }
        Command::Compare { left, right, format } => {
            let (l, r) = (report_of(&left)?, report_of(&right)?);
            let delta = format!("delta CoI(J) {}\n", format_delta(classes_delta(&l, &r)));
            emit(&render(&[l, r], format)?)?;
            match format {
                ReportFormat::Table => emit(&delta),
                // Keep machine-readable output parseable.
                ReportFormat::Csv | ReportFormat::Json => {
                    eprint!("{delta}");
                    Ok(())
                }
            }
        }
        Command::Demo { out, golden } => {
            let goldens = match golden {
                Some(dir) => Goldens::from_dir(&dir)
                    .map_err(|e| fail(FAILURE, format!("verification failed: {}: {e}", e.verification())))?,
                None => Goldens::default(),
            };
            let output = run_demo(&goldens)
                .map_err(|e| fail(FAILURE, format!("verification failed: {}: {e}", e.verification())))?;
            let mut text = output.table();
            text.push('\n');
            for line in output.summary_lines() {
                text.push_str(&line);
                text.push('\n');
            }
            emit(&text)?;
            if let Some(dir) = out {
                output
                    .write_to(&dir)
                    .map_err(|e| fail(FAILURE, format!("{}: {e}", dir.display())))?;
            }
            eprintln!("verified: manifests match, traces equivalent");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
