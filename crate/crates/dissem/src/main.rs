//! Command-line harness: single runs, seeded sweeps, the lower-bound lab,
//! trace validation, and trace generation.
//!
//! Exit codes are a stable contract: 0 success, 1 model/protocol violation,
//! 2 horizon exceeded, 64 usage or configuration error.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dissem::config::{family_by_name, RunConfig};
use dissem::engine::{competitive_residual, ExecutionReport};
use dissem::graph::{generate, DynamicGraphTrace, GeneratorSpec};
use dissem::lowerbound::{sparse_connectivity_experiment, ExperimentConfig, TrialRecord};
use dissem::{Error, Result};

const EXIT_VIOLATION: u8 = 1;
const EXIT_HORIZON: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "dissem", about = "Token dissemination in adversarial dynamic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and emit its CSV row.
    Run(RunArgs),
    /// Cartesian sweep over n/k/s/seed axes, one CSV row per run.
    Sweep(SweepArgs),
    /// Lower-bound lab experiments (free-graph connectivity, potential).
    Lowerbound(LowerboundArgs),
    /// Check a trace file for connectivity and sigma-stability.
    Validate(ValidateArgs),
    /// Generate a trace file from a generator family.
    GenTrace(GenTraceArgs),
}

#[derive(Args, Clone)]
struct ConfigFlags {
    /// `key = value` manifest; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flooding | single-source | multi-source | oblivious-multi
    #[arg(long)]
    protocol: Option<String>,
    /// oblivious:<trace-file|family> | freeedge | idlecut[:<sigma>]
    #[arg(long)]
    adversary: Option<String>,
    /// single:<node> | uniform:<s> | file:<path>
    #[arg(long)]
    placement: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    sigma: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated alphas for the residual report.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    c_f: Option<f64>,
    #[arg(long)]
    c_ell: Option<f64>,
    #[arg(long)]
    f_override: Option<u32>,
    #[arg(long)]
    ell_override: Option<u64>,
    #[arg(long)]
    s_threshold_override: Option<u64>,
}

impl ConfigFlags {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_manifest(&std::fs::read_to_string(path)?)?;
        }
        let overrides: &[(&str, Option<String>)] = &[
            ("protocol", self.protocol.clone()),
            ("adversary", self.adversary.clone()),
            ("placement", self.placement.clone()),
            ("n", self.n.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("alpha", self.alpha.clone()),
            ("c_f", self.c_f.map(|v| v.to_string())),
            ("c_ell", self.c_ell.map(|v| v.to_string())),
            ("f_override", self.f_override.map(|v| v.to_string())),
            ("ell_override", self.ell_override.map(|v| v.to_string())),
            (
                "s_threshold_override",
                self.s_threshold_override.map(|v| v.to_string()),
            ),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                cfg.apply(key, value)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Append the CSV row here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-message event log here.
    #[arg(long)]
    event_log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Comma-separated n values.
    #[arg(long)]
    n_list: String,
    /// Comma-separated k values.
    #[arg(long)]
    k_list: String,
    /// Comma-separated source counts (uniform placement).
    #[arg(long, default_value = "1")]
    s_list: String,
    /// Comma-separated seeds.
    #[arg(long)]
    seed_list: String,
    /// CSV output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerboundArgs {
    /// Comma-separated n values.
    #[arg(long)]
    n_list: String,
    /// Token count; defaults to k = n per point.
    #[arg(long)]
    k: Option<u32>,
    /// K' inclusion probability.
    #[arg(long, default_value_t = 0.25)]
    p: f64,
    /// Sparsity constant.
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u32,
    #[arg(long)]
    seed: u64,
    /// CSV output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    trace: PathBuf,
    #[arg(long, default_value_t = 3)]
    sigma: u64,
}

#[derive(Args)]
struct GenTraceArgs {
    /// static | random-churn | path-rewire
    #[arg(long)]
    family: String,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 3)]
    sigma: u64,
    #[arg(long)]
    horizon: u64,
    #[arg(long)]
    seed: u64,
    /// Trace file to write; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> Result<Vec<T>> {
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad `{name}` entry: {s}")))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{name}` must be non-empty")));
    }
    Ok(items)
}

fn error_exit(e: &Error) -> ExitCode {
    let code = match e {
        Error::ModelViolation(_) | Error::ProtocolBug(_) | Error::ConstructionBug(_) => {
            EXIT_VIOLATION
        }
        Error::RoundOutOfRange { .. } => EXIT_HORIZON,
        _ => EXIT_USAGE,
    };
    eprintln!("error: {e}");
    ExitCode::from(code)
}

struct Output {
    file: Option<std::fs::File>,
}

impl Output {
    fn create(path: &Option<PathBuf>) -> Result<Self> {
        Ok(Output {
            file: path.as_ref().map(std::fs::File::create).transpose()?,
        })
    }

    fn line(&mut self, text: &str) -> Result<()> {
        match &mut self.file {
            Some(f) => writeln!(f, "{text}")?,
            None => println!("{text}"),
        }
        Ok(())
    }
}

fn residual_summary(cfg: &RunConfig, report: &ExecutionReport) -> String {
    cfg.alphas
        .iter()
        .map(|&a| format!("alpha={a}: residual={}", competitive_residual(report, a)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.flags.build()?;
    let (report, log) = cfg.execute(args.event_log.is_some())?;
    if let Some(path) = &args.event_log {
        std::fs::write(path, log)?;
    }
    let mut out = Output::create(&args.out)?;
    out.line(ExecutionReport::CSV_HEADER)?;
    out.line(&report.csv_row("run"))?;
    eprintln!("{}", residual_summary(&cfg, &report));
    if report.completed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "horizon {} exceeded without completing dissemination",
            cfg.horizon()
        );
        Ok(ExitCode::from(EXIT_HORIZON))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let base = args.flags.build()?;
    let ns: Vec<u32> = parse_list("n-list", &args.n_list)?;
    let ks: Vec<u32> = parse_list("k-list", &args.k_list)?;
    let ss: Vec<u32> = parse_list("s-list", &args.s_list)?;
    let seeds: Vec<u64> = parse_list("seed-list", &args.seed_list)?;

    let mut points = Vec::new();
    for &n in &ns {
        for &k in &ks {
            for &s in &ss {
                for &seed in &seeds {
                    let mut cfg = base.clone();
                    cfg.n = n;
                    cfg.k = k;
                    cfg.seed = seed;
                    cfg.placement = format!("uniform:{s}");
                    points.push((format!("n{n}-k{k}-s{s}-seed{seed}"), cfg));
                }
            }
        }
    }

    // Rows computed in parallel but written in axis order, so output bytes
    // are independent of scheduling.
    let results: Vec<(String, Result<ExecutionReport>)> = points
        .par_iter()
        .map(|(id, cfg)| (id.clone(), cfg.execute(false).map(|(r, _)| r)))
        .collect();

    let mut out = Output::create(&args.out)?;
    out.line(ExecutionReport::CSV_HEADER)?;
    let mut incomplete = false;
    for (id, result) in results {
        match result {
            Ok(report) => {
                incomplete |= !report.completed();
                out.line(&report.csv_row(&id))?;
            }
            Err(e) => {
                // Partial output is already flushed; abort with the
                // offending run's error.
                eprintln!("sweep aborted at {id}");
                return Err(e);
            }
        }
    }
    Ok(if incomplete {
        ExitCode::from(EXIT_HORIZON)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_lowerbound(args: &LowerboundArgs) -> Result<ExitCode> {
    let ns: Vec<u32> = parse_list("n-list", &args.n_list)?;
    let mut out = Output::create(&args.out)?;
    out.line(TrialRecord::CSV_HEADER)?;
    let mut prev_fraction = -1.0f64;
    for &n in &ns {
        let stats = sparse_connectivity_experiment(&ExperimentConfig {
            n,
            k: args.k.unwrap_or(n),
            p: args.p,
            c: args.c,
            trials: args.trials,
            seed: args.seed,
        });
        for record in &stats.records {
            out.line(&record.csv_row())?;
        }
        let fraction = stats.connected_fraction();
        let fit = stats.max_components_dense as f64 / (n as f64).log2();
        eprintln!(
            "n={n}: sparse connected fraction {fraction:.4} (Wilson 95% [{:.4}, {:.4}]), \
             max dense components {} (a = {fit:.3} x log2 n), phi0 <= 0.8nk in {:.1}% of seeds",
            stats.wilson.0,
            stats.wilson.1,
            stats.max_components_dense,
            100.0 * stats.phi0_ok_fraction,
        );
        if fraction + 1e-9 < prev_fraction {
            eprintln!("warning: connected fraction not monotone at n={n}");
        }
        prev_fraction = fraction;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.trace)?;
    let trace = DynamicGraphTrace::parse(&text)?;
    let connectivity = trace.connectivity();
    let mut ok = true;
    for (i, connected) in connectivity.iter().enumerate() {
        if !connected {
            println!("round {}: DISCONNECTED", i + 1);
            ok = false;
        }
    }
    match trace.first_stability_violation(args.sigma) {
        None => println!(
            "{} rounds: connectivity {}, {}-stability pass",
            trace.horizon(),
            if ok { "pass" } else { "FAIL" },
            args.sigma
        ),
        Some(((u, v), round)) => {
            println!(
                "edge ({u},{v}) removed at round {round} violates {}-stability",
                args.sigma
            );
            ok = false;
        }
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn cmd_gen_trace(args: &GenTraceArgs) -> Result<ExitCode> {
    let family = family_by_name(&args.family)
        .ok_or_else(|| Error::Config(format!("unknown family `{}`", args.family)))?;
    let spec = GeneratorSpec::new(family, args.n, args.sigma, args.seed);
    let trace = generate(&spec, args.horizon)?;
    match &args.out {
        Some(path) => std::fs::write(path, trace.serialize())?,
        None => print!("{}", trace.serialize()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Let clap print help/version normally; everything else is usage.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Lowerbound(args) => cmd_lowerbound(args),
        Command::Validate(args) => cmd_validate(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => error_exit(&e),
    }
}
