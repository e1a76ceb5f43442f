use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clonewatch::metrics::{
    detection_report, emit_csv, fit_complexity, lookup_reference, parse_sweep_spec, read_csv, run_sweep, CsvError,
    MetricsRow, SweepError,
};
use clonewatch::netsim::{run, Protocol, SimConfig, SimError};

#[derive(Parser)]
#[command(
    name = "clonewatch",
    version,
    about = "Clone-detection simulator and experiment tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write a one-row CSV.
    Simulate {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        degree: usize,
        #[arg(long, default_value_t = 0.0)]
        load: f64,
        #[arg(long, default_value_t = 0)]
        clones: usize,
        #[arg(long, default_value_t = 100)]
        clone_tick: u64,
        #[arg(long, default_value_t = 200)]
        ticks: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of simulations described by a spec file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the message-count growth exponent of one protocol.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        protocol: Protocol,
    },
    /// Detection rates per load and protocol, with the ordering check.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_ORDERING: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(e: impl fmt::Display) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }

    fn io(e: impl fmt::Display) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<CsvError> for Failure {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io { .. } => Failure::io(e),
            _ => Failure::invalid(e),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::invalid(e)
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        Failure::invalid(e)
    }
}

fn summary(row: &MetricsRow, sent: u64, dropped: u64) {
    println!("protocol            {}", row.protocol);
    println!(
        "nodes               {} (target degree {}, diameter {})",
        row.n, row.degree_d, row.diameter_s
    );
    println!("load                {}", row.load);
    println!("messages            {} ({} bytes)", row.messages_total, row.bytes_total);
    println!("channel             {sent} offered, {dropped} dropped");
    println!("station peak        {}", row.station_peak_entries);
    println!("node peak memory    {}", row.node_peak_memory_entries);
    println!("clones detected     {}/{}", row.clones_detected, row.clones_injected);
    println!("false positives     {}", row.false_positives);
    match row.mean_detection_latency_ticks {
        Some(l) => println!("mean latency        {l:.3} ticks"),
        None => println!("mean latency        -"),
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            protocol,
            n,
            degree,
            load,
            clones,
            clone_tick,
            ticks,
            seed,
            out,
        } => {
            let cfg = SimConfig {
                protocol,
                n,
                target_degree: degree,
                load,
                clone_count: clones,
                clone_injection_tick: clone_tick,
                ticks,
                seed,
                ..SimConfig::default()
            };
            let trace = run(&cfg)?;
            let row = MetricsRow::from_trace(&cfg, &trace);
            emit_csv(std::slice::from_ref(&row), &out)?;
            summary(&row, trace.totals.protocol_sent, trace.totals.protocol_dropped);
        }
        Command::Sweep { spec, out } => {
            let text = fs::read_to_string(&spec).map_err(|e| Failure::io(format!("{}: {e}", spec.display())))?;
            let spec = parse_sweep_spec(&text).map_err(Failure::invalid)?;
            let rows = run_sweep(&spec)?;
            emit_csv(&rows, &out)?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Fit { input, protocol } => {
            let rows = read_csv(&input)?;
            let fit = fit_complexity(&rows, protocol).map_err(Failure::invalid)?;
            println!("protocol      {}", fit.protocol);
            for (n, m) in &fit.points {
                println!("  n={n:<6} mean messages {m:.1}");
            }
            println!("exponent      {:.4}", fit.exponent);
            println!("intercept     {:.4}", fit.intercept);
            println!("r_squared     {:.6}", fit.r_squared);
            match lookup_reference(protocol.as_str()) {
                Some(r) => println!(
                    "reference     {}: communication {}, memory {}",
                    r.technique, r.communication, r.memory
                ),
                None => println!("reference     none for {protocol}"),
            }
        }
        Command::Report { input } => {
            let rows = read_csv(&input)?;
            let report = detection_report(&rows, None).map_err(Failure::invalid)?;
            print!("{}", report.render());
            if !report.ordering_confirmed() {
                return Err(Failure {
                    code: EXIT_ORDERING,
                    message: "expected detection ordering not confirmed at the highest load".into(),
                });
            }
            println!("ordering confirmed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
