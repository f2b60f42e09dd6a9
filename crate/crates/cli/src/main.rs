use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use trms_core::check::{CheckError, CheckOptions};
use trms_core::pipeline::profile_files;
use trms_core::report::{build_report, Format};
use trms_core::tracegen::{RandomParams, Scenario};
use trms_core::{Granularity, ProfileStore, ProfilerConfig, RoutineNames};

/// Threaded read memory size profiler for multithreaded execution traces.
#[derive(Debug, Parser)]
#[command(name = "trms-prof", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic trace as `<base>.t<tid>.trace` files.
    Gen(GenArgs),
    /// Profile a trace and write one CSV row per routine activation.
    Profile(ProfileArgs),
    /// Turn a profile CSV into plot datasets, metrics and curve fits.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// example-2a, example-2b, producer-consumer, producer-consumer-calls,
    /// external-read, scaling or random.
    scenario: Scenario,
    /// Rounds for the parametric scenarios.
    #[arg(short, long, default_value_t = 100)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    threads: u32,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    cells: u64,
    #[arg(long, default_value_t = 10_000)]
    events: u64,
    #[arg(long, default_value_t = 0.1, value_parser = parse_ratio)]
    kernel_ratio: f64,
    /// Leave activations pending at the end of a random trace.
    #[arg(long)]
    truncate: bool,
    /// Output base path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Trace base path: reads `<base>.t*.trace`.
    trace: PathBuf,
    /// Bits per shadow timestamp.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u8).range(8..=64))]
    counter_width: u8,
    #[arg(long, default_value_t = 4)]
    renumber_margin: u64,
    /// Bytes per shadowed cell.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    granularity: u64,
    /// Also run the reference profiler and compare the results.
    #[arg(long)]
    oracle_check: bool,
    /// Check the per-frame partial sums against the reference after every event.
    #[arg(long)]
    debug_invariants: bool,
    /// Output CSV file; stdout if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Profile CSV written by `profile`.
    profile: PathBuf,
    /// Routine names sidecar (`<base>.names`).
    #[arg(long)]
    names: Option<PathBuf>,
    /// Aggregate all threads into one profile per routine (default).
    #[arg(long, overrides_with = "per_thread")]
    merge_threads: bool,
    /// Keep one profile per routine and thread.
    #[arg(long, overrides_with = "merge_threads")]
    per_thread: bool,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

enum Failure {
    /// Bad trace, profile or I/O.
    Input(anyhow::Error),
    /// A requested cross-check failed.
    Check(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let random = RandomParams {
        seed: args.seed,
        threads: args.threads,
        cells: args.cells,
        events: args.events,
        kernel_ratio: args.kernel_ratio,
        truncate: args.truncate,
        ..Default::default()
    };
    let trace = args.scenario.generate(args.n, random);
    let files = trace
        .write(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    log::info!("{}: {} events", args.scenario, trace.event_count());
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<(), Failure> {
    let granularity = Granularity::new(args.granularity).context("granularity must be positive")?;
    let config = ProfilerConfig::default()
        .with_width(args.counter_width)
        .context("counter width")?
        .with_margin(args.renumber_margin)
        .with_granularity(granularity);
    let opts = CheckOptions {
        oracle: args.oracle_check,
        invariants: args.debug_invariants,
    };
    let (store, stats) = match profile_files(&args.trace, config, opts) {
        Ok(r) => r,
        Err(e @ (CheckError::Invariant { .. } | CheckError::Mismatch { .. })) => {
            return Err(Failure::Check(e.into()))
        }
        Err(e) => {
            return Err(Failure::Input(
                anyhow::Error::new(e).context(format!("profiling {}", args.trace.display())),
            ))
        }
    };
    log::info!(
        "{} events, {} activations, {} renumberings",
        stats.events,
        store.len(),
        stats.renumberings
    );
    match &args.output {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            store.write_csv(&mut w).context("writing profile")?;
            w.flush().context("writing profile")?;
        }
        None => {
            let stdout = std::io::stdout();
            store.write_csv(stdout.lock()).context("writing profile")?;
        }
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let f = File::open(&args.profile)
        .with_context(|| format!("opening {}", args.profile.display()))?;
    let store = ProfileStore::read_csv(BufReader::new(f))
        .with_context(|| format!("reading {}", args.profile.display()))?;
    let names = match &args.names {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(RoutineNames::parse(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let merge = !args.per_thread;
    let files = build_report(&store, names.as_ref(), merge)
        .emit(args.format, &args.output)
        .with_context(|| format!("writing report to {}", args.output.display()))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRMS_PROF_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Profile(a) => profile(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(e)) => {
            eprintln!("check failed: {e:#}");
            ExitCode::from(3)
        }
    }
}
