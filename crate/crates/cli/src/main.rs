//! `advgrid` command-line interface: scenario generation, batch runs,
//! episode evaluation, scoring, weight calibration and report regeneration.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advgrid_core::agents::AgentConfig;
use advgrid_core::bundled;
use advgrid_core::chronics::generate_chronics;
use advgrid_core::env::EpisodeLog;
use advgrid_core::eval::{calibrate_lambda, evaluate_log, records_to_csv, WeightVector};
use advgrid_core::grid::Grid;
use advgrid_core::harness::{
    load_scenario, regenerate_report, run_batch, score_episode, write_outputs,
    write_report_files, ChronicsSource, HarnessError, OpponentSpec, RunConfig, ScoreAnchors,
};

#[derive(Parser)]
#[command(name = "advgrid", version, about = "Adversarial grid robustness harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic chronics CSVs for the bundled grid.
    GenChronics(GenChronicsArgs),
    /// Run a batch of episodes and write episode, eval and report files.
    Run(RunArgs),
    /// Score an episode's N-1 stability step by step.
    Evaluate(EvaluateArgs),
    /// Score an episode against its do_nothing anchor.
    Score(ScoreArgs),
    /// Calibrate the weight decay for a line count.
    CalibrateLambda(CalibrateArgs),
    /// Regenerate the report files from a run's persisted artifacts.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenChronicsArgs {
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    days: u32,
    /// Overall multiplier on the bundled base loads.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.25)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Relative load growth across the scenario (0.1 = +10% by the end).
    #[arg(long, default_value_t = 0.0)]
    trend: f64,
    #[arg(long, default_value_t = 1.0)]
    maintenance_rate: f64,
}

#[derive(Args)]
struct RunArgs {
    /// Batch configuration JSON; omit for a single bundled week.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the configured seeds (repeatable).
    #[arg(long)]
    seed: Vec<u64>,
    /// Replace the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured evaluation stride.
    #[arg(long)]
    stride: Option<usize>,
    /// Replace the configured opponent: do_nothing or weighted_random.
    #[arg(long)]
    opponent: Option<String>,
    /// Replace the configured agents (repeatable): do_nothing,
    /// reco_powerline or greedy_line_switch.
    #[arg(long)]
    agent: Vec<String>,
    /// Weight decay override; calibrated when omitted.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Episode log (JSON lines) to evaluate.
    #[arg(long)]
    episode: PathBuf,
    /// Chronics CSV the episode was run on.
    #[arg(long)]
    chronics: PathBuf,
    /// Grid JSON; bundled grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Weight decay override; calibrated when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Divide weighted rewards by the weight sum for cross-grid comparison.
    #[arg(long, default_value_t = false)]
    normalize: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Episode log to score.
    #[arg(long)]
    episode: PathBuf,
    /// do_nothing episode log on the same scenario and seed.
    #[arg(long)]
    anchor: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    n_lines: usize,
    /// Weight mass carried by the worst outages.
    #[arg(long, default_value_t = 0.95)]
    mass: f64,
    /// Fraction of outages counted as worst.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Run output directory holding episodes/, eval/ and report/.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Config(m),
            HarnessError::Runtime(m) => CliError::Runtime(m),
            HarnessError::Io(e) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not config errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenChronics(args) => gen_chronics(args),
        Command::Run(args) => run(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Score(args) => score(args),
        Command::CalibrateLambda(args) => calibrate(args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn gen_chronics(args: GenChronicsArgs) -> Result<(), CliError> {
    let grid = bundled::grid14();
    let params = advgrid_core::chronics::ProfileParams {
        scale: args.scale,
        amplitude: args.amplitude,
        noise: args.noise,
        trend: args.trend,
        maintenance_rate: args.maintenance_rate,
        ..bundled::default_profile(&grid)
    };
    std::fs::create_dir_all(&args.out)?;
    for i in 0..args.count {
        let seed = args.seed + i as u64;
        let chronics = generate_chronics(&grid, seed, args.days, &params)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let path = args.out.join(format!("{}.csv", chronics.label));
        chronics.write_csv(&grid, &path).map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_agent(name: &str) -> Result<AgentConfig, CliError> {
    match name {
        "do_nothing" => Ok(AgentConfig::DoNothing),
        "reco_powerline" => Ok(AgentConfig::RecoPowerline),
        "greedy_line_switch" => Ok(AgentConfig::GreedyLineSwitch { candidate_cap: None }),
        other => Err(CliError::Config(format!("unknown agent: {other}"))),
    }
}

fn parse_opponent(name: &str) -> Result<OpponentSpec, CliError> {
    match name {
        "do_nothing" => Ok(OpponentSpec::DoNothing),
        "weighted_random" => Ok(OpponentSpec::WeightedRandom {
            d_attack: None,
            t_attack: None,
            attack_cost: None,
            budget_per_step: None,
            initial_budget: None,
        }),
        other => Err(CliError::Config(format!("unknown opponent: {other}"))),
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig {
            grid: None,
            chronics: ChronicsSource::Generate {
                count: 1,
                base_seed: 0,
                days: 7,
                scale: 1.0,
                amplitude: 0.25,
                noise: 0.0,
                trend: 0.0,
                // Maintenance-free so the default do_nothing run completes.
                maintenance_rate: 0.0,
            },
            agents: vec![AgentConfig::DoNothing],
            opponent: OpponentSpec::DoNothing,
            seeds: vec![0],
            stride: 1,
            lambda: None,
            out: PathBuf::from("out"),
        },
    };
    if !args.seed.is_empty() {
        config.seeds = args.seed.clone();
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(stride) = args.stride {
        config.stride = stride;
    }
    if let Some(op) = &args.opponent {
        config.opponent = parse_opponent(op)?;
    }
    if !args.agent.is_empty() {
        config.agents = args.agent.iter().map(|a| parse_agent(a)).collect::<Result<_, _>>()?;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = Some(lambda);
    }
    config.validate()?;

    let batch = run_batch(&config)?;
    write_outputs(&config.out, &batch)?;
    for msg in &batch.failures {
        eprintln!("failed: {msg}");
    }
    for (agent, mean) in batch.report.agents.iter().zip(&batch.report.mean_scores) {
        println!("{agent} score {mean:.2}");
    }
    println!("report written to {}", config.out.join("report").display());
    Ok(())
}

fn load_cli_grid(path: &Option<PathBuf>) -> Result<Grid, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Grid::from_json(&text).map_err(|e| CliError::Config(e.to_string()))
        }
        None => Ok(bundled::grid14()),
    }
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let grid = load_cli_grid(&args.grid)?;
    let (grid, chronics) = load_scenario(&grid, &args.chronics)?;
    if args.stride == 0 {
        return Err(CliError::Config("stride must be >= 1".into()));
    }
    let log_text = std::fs::read_to_string(&args.episode)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.episode.display())))?;
    let log = EpisodeLog::from_jsonl(&log_text)
        .map_err(|e| CliError::Config(format!("bad episode log: {e}")))?;
    let n = grid.attackable.len();
    let lambda = match args.lambda {
        Some(l) => l,
        None => calibrate_lambda(n, 0.95, 0.2).map_err(|e| CliError::Config(e.to_string()))?,
    };
    let weights = WeightVector::new(lambda, n);
    let mut records = evaluate_log(&grid, &chronics, &log, &weights, args.stride)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if args.normalize {
        let sum = weights.sum();
        for r in &mut records {
            r.r_weighted /= sum;
        }
    }
    let csv = records_to_csv(&records, n);
    let len = records.len() as f64;
    let mean = |f: fn(&advgrid_core::eval::EvalRecord) -> f64| {
        if records.is_empty() { 0.0 } else { records.iter().map(f).sum::<f64>() / len }
    };
    let overflow: Vec<f64> = (0..n)
        .map(|pos| {
            if records.is_empty() {
                0.0
            } else {
                records.iter().filter(|r| r.s[pos] == 0).count() as f64 / len
            }
        })
        .collect();
    let summary = serde_json::json!({
        "scenario": log.scenario,
        "agent": log.agent,
        "seed": log.seed,
        "lambda": lambda,
        "weight_sum": weights.sum(),
        "normalized": args.normalize,
        "evaluated_steps": records.len(),
        "mean_r_weighted": mean(|r| r.r_weighted),
        "mean_r_uniform": mean(|r| r.r_uniform),
        "mean_r_worst": mean(|r| r.r_worst),
        "attackable_lines": grid.attackable.iter().map(|&li| grid.lines[li].id.clone()).collect::<Vec<_>>(),
        "overflow_probabilities": overflow,
    });
    match args.out {
        Some(path) => {
            std::fs::write(&path, csv)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary"));
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn score(args: ScoreArgs) -> Result<(), CliError> {
    let read_log = |path: &PathBuf| -> Result<EpisodeLog, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        EpisodeLog::from_jsonl(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    };
    let episode = read_log(&args.episode)?;
    let anchor = read_log(&args.anchor)?;
    if anchor.agent != "do_nothing" {
        return Err(CliError::Config(format!(
            "anchor log must be a do_nothing episode, got {}",
            anchor.agent
        )));
    }
    if anchor.scenario != episode.scenario {
        return Err(CliError::Config(format!(
            "anchor scenario {} does not match episode scenario {}",
            anchor.scenario, episode.scenario
        )));
    }
    let anchors = ScoreAnchors {
        g_dn: anchor.total_reward,
        steps_dn: anchor.steps_survived,
        n_steps: anchor.n_steps,
    };
    let s = score_episode(episode.total_reward, episode.steps_survived, &anchors);
    println!("{s:.4}");
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    if args.n_lines < 2 {
        return Err(CliError::Config("--n-lines must be >= 2".into()));
    }
    if !(0.0 < args.mass && args.mass < 1.0) || !(0.0 < args.fraction && args.fraction < 1.0) {
        return Err(CliError::Config("--mass and --fraction must be in (0, 1)".into()));
    }
    let lambda = calibrate_lambda(args.n_lines, args.mass, args.fraction)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let weights = WeightVector::new(lambda, args.n_lines);
    let m = (args.fraction * args.n_lines as f64).ceil() as usize;
    let ratio = weights.weights[..m].iter().sum::<f64>() / weights.sum();
    println!("lambda {lambda}");
    println!("ratio {ratio}");
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let report = regenerate_report(&args.out)?;
    write_report_files(&args.out, &report)?;
    println!("report written to {}", args.out.join("report").display());
    Ok(())
}
