//! `connsim` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid flags, config or input.

use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use connsim::config::{CliConfig, ConfigError};
use connsim::engine::{run_records, run_replicates, sweep, EngineError, SweepOptions};
use connsim::output::{self, Metric, OutputError, RunRecord, SweepFiles};
use connsim::plot::{render_svg, Facet, PlotError, PlotOptions};
use connsim::schedule::{
    builtin_schedule, export_schedule, load_schedule, parse_schedule, reachability_profile, to_json, to_text,
    validate_schedule, ScheduleError,
};
use connsim::{
    BiasParams, ConnectivityKind, HorizonMode, MemoryWindow, ParameterPoint, QualityMode, Schedule, SimulationConfig,
};

#[derive(Parser)]
#[command(name = "connsim", version, about = "Connectivity-dynamics cultural evolution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one parameter point and print the per-round entropy/adaptiveness table.
    Simulate(SimulateArgs),
    /// Run a parameter sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Generate, validate or inspect pairing schedules.
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Render a summary file as an SVG chart.
    Plot(PlotArgs),
}

fn unit_parser(what: &'static str) -> impl Fn(&str) -> Result<f64, String> + Clone + Send + Sync + 'static {
    move |s: &str| {
        let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(format!("{what} must lie in [0,1]"))
        }
    }
}

fn memory_parser(s: &str) -> Result<MemoryWindow, String> {
    s.parse()
}

#[derive(Args)]
struct SimulateArgs {
    /// Population size.
    #[arg(long, default_value_t = 8)]
    agents: usize,
    /// early, mid, late or custom (custom requires --schedule).
    #[arg(long, default_value = "early")]
    connectivity: ConnectivityKind,
    /// Schedule file (line or JSON format); implies custom connectivity.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Coordination bias: 0 egocentric, 1 allocentric.
    #[arg(long, default_value_t = 0.5, value_parser = unit_parser("coordination bias"))]
    c: f64,
    /// Content bias sensitivity.
    #[arg(long, default_value_t = 0.0, value_parser = unit_parser("content bias"))]
    b: f64,
    /// Memory window in rounds, or inf.
    #[arg(long, default_value = "inf", value_parser = memory_parser)]
    memory: MemoryWindow,
    /// Mutation rate.
    #[arg(long, default_value_t = 0.02, value_parser = unit_parser("mutation rate"))]
    mu: f64,
    /// Master seed; replicate r uses seed_derive(seed, 0, r).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run exactly this many rounds (default: one pass through the schedule).
    #[arg(long, conflicts_with = "until_convergence", value_parser = clap::value_parser!(u32).range(1..))]
    rounds: Option<u32>,
    /// Run until the first round with zero entropy, up to MAX rounds.
    #[arg(long, value_name = "MAX", num_args = 0..=1, default_missing_value = "200")]
    until_convergence: Option<u32>,
    /// Number of replicates; the table shows per-round means.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// 1-based agent whose initial variant is high quality (default: random per run).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    quality_owner: Option<u64>,
    /// Write run records to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration.
    config: PathBuf,
    /// Worker threads (default: available parallelism). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Continue an interrupted sweep in the configured output directory.
    #[arg(long)]
    resume: bool,
    /// Stop after this many points, leaving a resumable checkpoint.
    #[arg(long)]
    max_points: Option<usize>,
}

#[derive(Subcommand)]
enum ScheduleCommand {
    /// Write a built-in schedule (line format, or JSON for .json paths or --json).
    Generate {
        #[arg(long)]
        kind: ConnectivityKind,
        #[arg(long)]
        agents: usize,
        /// Output path (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit JSON on standard output.
        #[arg(long)]
        json: bool,
    },
    /// Check that a schedule file is a complete round-robin of perfect matchings.
    Validate {
        path: PathBuf,
        /// Accept schedules that leave some pairs unmet.
        #[arg(long)]
        allow_incomplete: bool,
    },
    /// Print how many agents a source's variant can reach after each round.
    Reach {
        #[arg(long, required_unless_present = "schedule")]
        kind: Option<ConnectivityKind>,
        #[arg(long, default_value_t = 8)]
        agents: usize,
        /// Schedule file instead of a built-in kind.
        #[arg(long, conflicts_with = "kind")]
        schedule: Option<PathBuf>,
        /// 1-based source agent (default: every agent, one line each).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        source: Option<u64>,
    },
}

#[derive(Args)]
struct PlotArgs {
    /// Summary CSV written by `sweep`.
    summary: PathBuf,
    /// entropy, entropy_norm, adaptiveness or delta_adaptiveness.
    #[arg(long)]
    metric: Metric,
    /// Panel per level of content_bias, coordination_bias or memory.
    #[arg(long, default_value = "content_bias")]
    facet: Facet,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Keep only this population size.
    #[arg(long)]
    agents: Option<usize>,
    /// Keep only this content bias level.
    #[arg(long, value_parser = unit_parser("content bias"))]
    b: Option<f64>,
    /// Keep only this coordination bias level.
    #[arg(long, value_parser = unit_parser("coordination bias"))]
    c: Option<f64>,
    /// Keep only this memory level.
    #[arg(long, value_parser = memory_parser)]
    memory: Option<MemoryWindow>,
    /// Minimum rise over each neighbour for a ΔA burst marker.
    #[arg(long, default_value_t = connsim::metrics::DEFAULT_BURST_PROMINENCE)]
    prominence: f64,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Failure { code: 2, message: message.to_string() }
    }

    fn io(message: impl Display) -> Self {
        Failure { code: 1, message: message.to_string() }
    }
}

impl From<ScheduleError> for Failure {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Io(_) => Failure::io(e),
            _ => Failure::usage(e),
        }
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        match e {
            OutputError::Io(_) => Failure::io(e),
            _ => Failure::usage(e),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Sink { .. } => Failure::io(format!("{e}; rerun with --resume to continue")),
            _ => Failure::usage(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Schedule(ScheduleError::Io(_)) => Failure::io(e),
            _ => Failure::usage(e),
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match threads {
        Some(0) => return Err(Failure::usage("--threads must be at least 1")),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    builder.build().map_err(Failure::io)
}

fn load_custom(path: &Path) -> Result<Arc<Schedule>, Failure> {
    let loaded = load_schedule(path)?;
    if let Some(v) = &loaded.incomplete {
        eprintln!("warning: {}: {v}", path.display());
    }
    Ok(Arc::new(loaded.schedule))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let params = BiasParams::new(a.c, a.b, a.mu, a.memory).map_err(Failure::usage)?;
    let quality_mode = match a.quality_owner {
        Some(q) if q as usize > a.agents => {
            return Err(Failure::usage(format!("--quality-owner {q} exceeds --agents {}", a.agents)))
        }
        Some(q) => QualityMode::FixedOwner(q as usize - 1),
        None => QualityMode::RandomOwnerPerRun,
    };
    let point = match (&a.schedule, a.connectivity) {
        (Some(path), _) => {
            let schedule = load_custom(path)?;
            if schedule.n_agents() != a.agents {
                return Err(Failure::usage(format!(
                    "--schedule has {} agents but --agents is {}",
                    schedule.n_agents(),
                    a.agents
                )));
            }
            ParameterPoint::custom(schedule, params, quality_mode)?
        }
        (None, ConnectivityKind::Custom) => return Err(Failure::usage("--connectivity custom requires --schedule")),
        (None, kind) => ParameterPoint::builtin(kind, a.agents, params, quality_mode)
            .map_err(|e| Failure::usage(format!("--connectivity {kind} --agents {}: {e}", a.agents)))?,
    };
    let horizon = match (a.rounds, a.until_convergence) {
        (Some(r), _) => HorizonMode::Fixed(r),
        (None, Some(max_rounds)) => HorizonMode::UntilConvergence { max_rounds },
        (None, None) => HorizonMode::Complete,
    };
    let key = point.key();
    let config = SimulationConfig::new(point, horizon, a.seed);
    let pool = thread_pool(a.threads)?;
    let runs = pool.install(|| run_replicates(&config, 0, a.runs as usize))?;

    if let Some(path) = &a.out {
        let records: Vec<RunRecord> =
            runs.iter().enumerate().flat_map(|(r, run)| run_records(&key, r as u64, run)).collect();
        output::write_runs(&records, path)?;
    }

    let max_round = runs.iter().map(|r| r.rounds()).max().unwrap_or(0);
    let mut out = io::stdout().lock();
    let mut table = String::from("round  entropy  adaptiveness\n");
    for t in 0..max_round {
        let stats: Vec<_> = runs.iter().filter_map(|r| r.stats.get(t)).collect();
        let k = stats.len() as f64;
        let h = stats.iter().map(|s| s.entropy).sum::<f64>() / k;
        let adapt = stats.iter().map(|s| s.adaptiveness).sum::<f64>() / k;
        table.push_str(&format!("{:>5}  {h:>7.3}  {adapt:>12.3}\n", t + 1));
    }
    let converged = runs.iter().filter_map(|r| r.convergence.round()).collect::<Vec<_>>();
    if a.runs == 1 {
        match converged.first() {
            Some(t) => table.push_str(&format!("converged at round {t}\n")),
            None => table.push_str("not converged\n"),
        }
    } else {
        table.push_str(&format!("converged runs: {}/{}\n", converged.len(), a.runs));
    }
    out.write_all(table.as_bytes()).map_err(Failure::io)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::io(format!("{}: {e}", a.config.display())))?;
    let config = CliConfig::from_json_str(&text)?;
    let grid = config.to_grid()?;
    let fingerprint = config.fingerprint();
    let pool = thread_pool(a.threads)?;

    let (mut files, start_point) = if a.resume {
        SweepFiles::resume(&config.output_dir, &fingerprint).map_err(|e| match e {
            OutputError::Checkpoint(m) => Failure::usage(format!("cannot resume: {m}")),
            other => Failure::io(format!("cannot resume: {other}")),
        })?
    } else {
        (SweepFiles::create(&config.output_dir, &fingerprint, config.write_runs)?, 0)
    };

    let start = Instant::now();
    let total_points = grid.points()?.len();
    eprintln!(
        "sweep: {total_points} points x {} replicates, starting at point {start_point}, {} thread(s)",
        grid.replicates,
        pool.current_num_threads()
    );
    let step = (total_points / 100).max(1);
    let progress = |done: usize, total: usize| {
        if done.is_multiple_of(step) || done == total {
            eprintln!("  {done}/{total} points ({:.1}s)", start.elapsed().as_secs_f64());
        }
    };
    let opts = SweepOptions { start_point, max_points: a.max_points, progress: Some(&progress) };
    let report = pool.install(|| sweep(&grid, config.master_seed, &mut files, opts))?;
    let elapsed = start.elapsed().as_secs_f64();
    if report.is_complete() {
        println!(
            "completed {} points in {elapsed:.2}s; output in {}",
            report.total_points,
            config.output_dir.display()
        );
    } else {
        println!(
            "stopped after point {} of {} in {elapsed:.2}s; continue with --resume",
            report.next_point, report.total_points
        );
    }
    Ok(())
}

fn cmd_schedule(c: ScheduleCommand) -> Result<(), Failure> {
    match c {
        ScheduleCommand::Generate { kind, agents, out, json } => {
            let s = builtin_schedule(kind, agents)?;
            match out {
                Some(path) => export_schedule(&s, path)?,
                None => {
                    let body = if json { to_json(&s) } else { to_text(&s) };
                    io::stdout().write_all(body.as_bytes()).map_err(Failure::io)?;
                }
            }
            Ok(())
        }
        ScheduleCommand::Validate { path, allow_incomplete } => {
            let text = fs::read_to_string(&path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            let s = parse_schedule(&text)?;
            let violations: Vec<_> = validate_schedule(&s, !allow_incomplete);
            if violations.is_empty() {
                println!("valid: {} agents, {} rounds", s.n_agents(), s.len());
                return Ok(());
            }
            for v in &violations {
                println!("{v}");
            }
            Err(Failure { code: 1, message: format!("{}: {} violation(s)", path.display(), violations.len()) })
        }
        ScheduleCommand::Reach { kind, agents, schedule, source } => {
            let s = match (schedule, kind) {
                (Some(path), _) => parse_schedule(
                    &fs::read_to_string(&path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?,
                )?,
                (None, Some(kind)) => builtin_schedule(kind, agents)?,
                (None, None) => return Err(Failure::usage("--kind or --schedule is required")),
            };
            let line = |src: usize| -> Result<String, Failure> {
                let p = reachability_profile(&s, src)?;
                Ok(p.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "))
            };
            let mut out = String::new();
            match source {
                Some(src) => out.push_str(&format!("{}\n", line(src as usize - 1)?)),
                None => {
                    for src in 0..s.n_agents() {
                        out.push_str(&format!("{:>3}: {}\n", src + 1, line(src)?));
                    }
                }
            }
            io::stdout().write_all(out.as_bytes()).map_err(Failure::io)
        }
    }
}

fn cmd_plot(a: PlotArgs) -> Result<(), Failure> {
    let rows = output::read_summary(&a.summary).map_err(|e| match e {
        OutputError::Io(err) => Failure::io(format!("{}: {err}", a.summary.display())),
        other => Failure::usage(format!("{}: {other}", a.summary.display())),
    })?;
    let opts = PlotOptions {
        metric: a.metric,
        facet: a.facet,
        n_agents: a.agents,
        content_bias: a.b,
        coordination_bias: a.c,
        memory: a.memory,
        burst_prominence: a.prominence,
    };
    let svg = render_svg(&rows, &opts).map_err(|e: PlotError| Failure::usage(e))?;
    fs::write(&a.out, svg).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Schedule(c) => cmd_schedule(c),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
