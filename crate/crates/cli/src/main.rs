//! `iqnet`: run configured experiments, the acceptance suite, and driving-data dumps.
//!
//! Exit codes: 0 every verdict passed, 1 some verdict failed (or the run
//! aborted), 2 the configuration was rejected.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iqnet::acceptance::{run_all, run_criterion, CriterionResult};
use iqnet::experiments::{run_experiment, ExperimentConfig, ExperimentError, ExperimentKind};
use iqnet::{DrivingStream, EventKind, Site};

const PASS: u8 = 0;
const FAIL: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "iqnet", version, about = "Interference queueing network simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Replace the configured seed list by this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite, or the listed criteria only.
    Verify {
        criteria: Vec<u32>,
    },
    /// Print the driving events of a cube of sites as CSV.
    DumpDriving {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Sup-norm radius of the cube of sites around the origin.
        #[arg(long, default_value_t = 2)]
        radius: u32,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
    },
    /// Run a fluid-transience config and write the trajectories as CSV.
    Fluid {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out, None),
        Command::Verify { criteria } => verify(&criteria),
        Command::DumpDriving {
            seed,
            lambda,
            dim,
            radius,
            t0,
            t1,
        } => dump_driving(seed, lambda, dim, radius, t0, t1),
        Command::Fluid { config, out } => run(&config, None, out, Some(ExperimentKind::FluidTransience)),
    };
    ExitCode::from(code)
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, require: Option<ExperimentKind>) -> u8 {
    let mut cfg = match ExperimentConfig::parse_file(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return CONFIG_ERROR;
        }
    };
    if let Some(kind) = require {
        if cfg.kind != kind {
            eprintln!("SEMANTIC_ERROR: expected kind = \"{}\", found \"{}\"", kind.name(), cfg.kind.name());
            return CONFIG_ERROR;
        }
    }
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(ExperimentError::Config(e)) => {
            eprintln!("{e}");
            return CONFIG_ERROR;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return FAIL;
        }
    };
    print!("{}", report.summary());
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("iqnet-out").join(cfg.kind.name()));
    if let Err(e) = report.write_to(&dir) {
        eprintln!("error: {e}");
        return FAIL;
    }
    println!("wrote {} ({:.1}s)", dir.display(), report.wall_clock);
    if report.passed() {
        PASS
    } else {
        FAIL
    }
}

fn verify(criteria: &[u32]) -> u8 {
    let print = |r: &CriterionResult| println!("{}", r.line());
    let results: Vec<CriterionResult> = if criteria.is_empty() {
        run_all(print)
    } else {
        let mut out = Vec::new();
        for &id in criteria {
            match run_criterion(id) {
                Some(r) => {
                    print(&r);
                    out.push(r);
                }
                None => {
                    eprintln!("no criterion {id}; valid numbers are 1 to 14");
                    return CONFIG_ERROR;
                }
            }
        }
        out
    };
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        PASS
    } else {
        FAIL
    }
}

fn dump_driving(seed: u64, lambda: f64, dim: usize, radius: u32, t0: f64, t1: f64) -> u8 {
    if dim == 0 || !(t1 >= t0) {
        eprintln!("SEMANTIC_ERROR: need dim >= 1 and t1 >= t0");
        return CONFIG_ERROR;
    }
    let driving = match DrivingStream::new(seed, lambda) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("SEMANTIC_ERROR: {e}");
            return CONFIG_ERROR;
        }
    };
    let sites = Site::ball(&Site::origin(dim), radius);
    let events = match driving.events_in(&sites, t0, t1) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return FAIL;
        }
    };
    let mut w = BufWriter::new(io::stdout().lock());
    let coords: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
    let mut result = writeln!(w, "time,{},kind,mark", coords.join(","));
    for e in events {
        if result.is_err() {
            break;
        }
        let at: Vec<String> = e.site.coords().iter().map(i64::to_string).collect();
        result = match e.kind {
            EventKind::Arrival => writeln!(w, "{},{},arrival,", e.time, at.join(",")),
            EventKind::PotentialDeparture(m) => writeln!(w, "{},{},departure,{}", e.time, at.join(","), m.value()),
        };
    }
    match result.and_then(|_| w.flush()) {
        Ok(()) => PASS,
        // a closed pipe (e.g. `| head`) is not a failure
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => PASS,
        Err(e) => {
            eprintln!("error: {e}");
            FAIL
        }
    }
}
