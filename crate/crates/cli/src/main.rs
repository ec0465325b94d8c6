use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use parley_core::experiment::{run_experiment, ExperimentConfig, Method, SignalSourceKind};
use parley_core::metrics::mse_trajectory_csv;
use parley_core::scenario::{feasibility, Scenario};
use parley_core::trace::{beliefs_at, read_trace, render_beliefs, trace_records, write_trace, TraceMeta};

#[derive(Parser)]
#[command(name = "parley", version, about = "Multilateral negotiation simulator with Bayesian opponent modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of negotiations and write reports and traces.
    Run(RunArgs),
    /// Enumerate every deal of a scenario and count feasible ones.
    Feasibility {
        /// Scenario TOML; the bundled scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Show beliefs recorded in a trial trace as of a given round.
    Inspect {
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        round: u32,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core. Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_source)]
    signal_source: Option<SignalSourceKind>,
    /// Standard deviation of the offer likelihood.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    concession_start: Option<f64>,
    #[arg(long)]
    concession_end: Option<f64>,
    #[arg(long)]
    concession_beta: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overwrite results in a non-empty output directory.
    #[arg(long)]
    force: bool,
}

fn parse_source(s: &str) -> Result<SignalSourceKind, String> {
    match s {
        "oracle" => Ok(SignalSourceKind::Oracle),
        "llm" => Ok(SignalSourceKind::Llm),
        _ => Err(format!("unknown signal source `{s}` (expected oracle or llm)")),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: ExperimentConfig =
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            // scenario paths in a config file are relative to that file
            if let (Some(s), Some(dir)) = (&cfg.scenario, path.parent()) {
                if s.is_relative() {
                    cfg.scenario = Some(dir.join(s));
                }
            }
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &args.scenario {
        cfg.scenario = Some(s.clone());
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag { cfg.$($field).+ = v; })*
        };
    }
    set!(
        method => method,
        trials => trials,
        seed => seed,
        workers => workers,
        signal_source => signal_source,
        sigma => sigma,
        concession_start => concession.start,
        concession_end => concession.end,
        concession_beta => concession.beta,
    );
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            bail!("output directory {} is not empty; pass --force to overwrite", dir.display());
        }
        let traces = dir.join("traces");
        if traces.exists() {
            fs::remove_dir_all(&traces).with_context(|| format!("clearing {}", traces.display()))?;
        }
    }
    fs::create_dir_all(dir.join("traces")).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    prepare_out(&args.out, args.force)?;
    log::info!("running {} trials of {}", cfg.trials, cfg.method.name());
    let output = run_experiment(&cfg)?;
    let report = &output.report;
    let scenario = &output.scenario;

    let json = serde_json::to_string_pretty(report)?;
    fs::write(args.out.join("report.json"), json + "\n")?;
    let title = format!("{} on {} (seed {})", cfg.method.name(), scenario.name, cfg.seed);
    let text = report.render_text(&title);
    fs::write(args.out.join("report.txt"), &text)?;
    let csv = mse_trajectory_csv(&output.results, scenario, &scenario.parties[0].id)?;
    fs::write(args.out.join("mse_trajectory.csv"), csv)?;
    for (trial, result) in output.results.iter().enumerate() {
        let meta = TraceMeta {
            trial,
            method: cfg.method.name(),
            fingerprint: &report.fingerprint,
        };
        let path = args.out.join("traces").join(format!("trial_{trial:04}.jsonl"));
        write_trace(&path, &trace_records(scenario, result, &meta))?;
    }
    print!("{text}");
    println!("wrote {}", args.out.display());
    Ok(())
}

fn show_feasibility(path: Option<PathBuf>) -> Result<()> {
    let scenario = match path {
        Some(p) => Scenario::load(&p)?,
        None => Scenario::harbour_sport_park(),
    };
    let f = feasibility(&scenario);
    let pct = |n: usize| 100.0 * n as f64 / f.deal_count as f64;
    println!("scenario: {}", scenario.name);
    println!("deals: {}", f.deal_count);
    println!("partial-feasible: {} ({:.2}%)", f.partial_feasible, pct(f.partial_feasible));
    println!("full-feasible: {} ({:.2}%)", f.full_feasible, pct(f.full_feasible));
    for d in &f.full_deals {
        let utilities: Vec<String> = scenario
            .parties
            .iter()
            .map(|p| format!("{}={}", p.id, p.utility(d)))
            .collect();
        println!("  {}  {}", scenario.render_deal(d), utilities.join(" "));
    }
    Ok(())
}

fn inspect(path: &Path, round: u32) -> Result<()> {
    let records = read_trace(path).with_context(|| format!("reading {}", path.display()))?;
    let view = beliefs_at(&records, round)?;
    print!("{}", render_beliefs(&view));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Feasibility { scenario } => show_feasibility(scenario),
        Command::Inspect { trace, round } => inspect(&trace, round),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
