//! Batch execution, competition-style scoring and report generation.
//!
//! A batch runs every (agent, scenario, seed) triple, always including a
//! do_nothing anchor run per (scenario, seed) used to pin the score scale:
//! -100 for an initial blackout, 0 for the do_nothing return, 80 at the
//! completion anchor, up to 100 at the theoretical maximum return.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentConfig;
use crate::bundled;
use crate::chronics::{generate_chronics, load_chronics, Chronics, ProfileParams};
use crate::env::{run_episode, EpisodeLog, TerminationCause};
use crate::eval::{
    calibrate_lambda, evaluate_log, records_from_csv, records_to_csv, EvalRecord, WeightVector,
};
use crate::grid::Grid;
use crate::opponent::{compute_alpha, DoNothingOpponent, Opponent, OpponentConfig, WeightedRandomOpponent};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::grid::GridError> for HarnessError {
    fn from(e: crate::grid::GridError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<crate::chronics::ChronicsError> for HarnessError {
    fn from(e: crate::chronics::ChronicsError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<crate::env::EnvError> for HarnessError {
    fn from(e: crate::env::EnvError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<crate::eval::EvalError> for HarnessError {
    fn from(e: crate::eval::EvalError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

/// Where the batch's scenarios come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChronicsSource {
    /// Chronics CSV paths, one scenario each.
    Files { files: Vec<PathBuf> },
    /// Seeded synthetic scenarios on the bundled profile.
    Generate {
        count: usize,
        base_seed: u64,
        days: u32,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        trend: f64,
        #[serde(default = "default_maintenance_rate")]
        maintenance_rate: f64,
    },
}

fn default_amplitude() -> f64 {
    0.25
}

fn default_scale() -> f64 {
    1.0
}

fn default_maintenance_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpponentSpec {
    DoNothing,
    WeightedRandom {
        #[serde(default)]
        d_attack: Option<u32>,
        #[serde(default)]
        t_attack: Option<u32>,
        #[serde(default)]
        attack_cost: Option<f64>,
        #[serde(default)]
        budget_per_step: Option<f64>,
        #[serde(default)]
        initial_budget: Option<f64>,
    },
}

impl OpponentSpec {
    pub fn opponent_config(&self, grid: &Grid) -> OpponentConfig {
        let mut config = OpponentConfig::for_grid(grid);
        if let OpponentSpec::WeightedRandom {
            d_attack,
            t_attack,
            attack_cost,
            budget_per_step,
            initial_budget,
        } = self
        {
            if let Some(v) = d_attack {
                config.d_attack = *v;
            }
            if let Some(v) = t_attack {
                config.t_attack = *v;
            }
            if let Some(v) = attack_cost {
                config.attack_cost = *v;
            }
            if let Some(v) = budget_per_step {
                config.budget_per_step = *v;
            }
            if let Some(v) = initial_budget {
                config.initial_budget = *v;
            }
        }
        config
    }

    pub fn build(&self, grid: &Grid, alpha: &[f64]) -> Box<dyn Opponent> {
        match self {
            OpponentSpec::DoNothing => Box::new(DoNothingOpponent),
            OpponentSpec::WeightedRandom { .. } => Box::new(WeightedRandomOpponent::new(
                self.opponent_config(grid),
                alpha.to_vec(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Grid JSON path; None uses the bundled 14-bus grid.
    #[serde(default)]
    pub grid: Option<PathBuf>,
    pub chronics: ChronicsSource,
    pub agents: Vec<AgentConfig>,
    pub opponent: OpponentSpec,
    pub seeds: Vec<u64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Weight decay; None calibrates 95% mass on the worst 20%.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_stride() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, HarnessError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.agents.is_empty() {
            return Err(HarnessError::Config("at least one agent required".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        if self.stride == 0 {
            return Err(HarnessError::Config("stride must be >= 1".into()));
        }
        match &self.chronics {
            ChronicsSource::Files { files } => {
                if files.is_empty() {
                    return Err(HarnessError::Config("at least one scenario required".into()));
                }
                for f in files {
                    if !f.exists() {
                        return Err(HarnessError::Config(format!(
                            "chronics file {} does not exist",
                            f.display()
                        )));
                    }
                }
            }
            ChronicsSource::Generate { count, days, .. } => {
                if *count == 0 || *days == 0 {
                    return Err(HarnessError::Config(
                        "generated scenario count and days must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Anchors pinning the piecewise-linear score for one (scenario, seed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreAnchors {
    /// do_nothing return on this scenario with the same opponent seed.
    pub g_dn: f64,
    pub steps_dn: usize,
    pub n_steps: usize,
}

/// Map an episode return onto [-100, 100].
///
/// -100 at zero survival, 0 at the do_nothing return, 80 at the completion
/// anchor (do_nothing per-step rate extrapolated to completion when
/// do_nothing fails), 100 at the theoretical maximum return. When
/// do_nothing itself completes the 80-anchor collapses and the upper
/// segment interpolates straight to 100.
pub fn score_episode(total_reward: f64, steps_survived: usize, anchors: &ScoreAnchors) -> f64 {
    if steps_survived == 0 {
        return -100.0;
    }
    let g = total_reward;
    let g_dn = anchors.g_dn;
    let g_max = anchors.n_steps as f64;
    let score = if g < g_dn {
        -100.0 + 100.0 * g / g_dn
    } else if anchors.steps_dn >= anchors.n_steps {
        if g_max - g_dn > 1e-9 {
            100.0 * (g - g_dn) / (g_max - g_dn)
        } else {
            0.0
        }
    } else {
        let g_c = if anchors.steps_dn > 0 {
            (g_dn * anchors.n_steps as f64 / anchors.steps_dn as f64).min(g_max)
        } else {
            g_max
        };
        if g <= g_c {
            if g_c - g_dn > 1e-9 {
                80.0 * (g - g_dn) / (g_c - g_dn)
            } else {
                0.0
            }
        } else {
            80.0 + 20.0 * (g - g_c) / (g_max - g_c)
        }
    };
    score.clamp(-100.0, 100.0)
}

// ---------------------------------------------------------------------------
// Series statistics
// ---------------------------------------------------------------------------

/// Centered moving average over a symmetric window (clamped at the ends).
pub fn smooth_centered(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Central-difference derivative, one-sided at the boundaries.
pub fn central_difference(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|i| match i {
            0 => series[1.min(n - 1)] - series[0],
            i if i == n - 1 => series[n - 1] - series[n - 2],
            i => (series[i + 1] - series[i - 1]) / 2.0,
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Correlation between total load and the smoothed derivative of the
/// weighted N-1 reward over one episode's evaluation records.
pub fn load_reward_correlation(records: &[EvalRecord], window: usize) -> Option<f64> {
    if records.len() < 3 {
        return None;
    }
    let reward: Vec<f64> = records.iter().map(|r| r.r_weighted).collect();
    let load: Vec<f64> = records.iter().map(|r| r.total_load).collect();
    let derivative = central_difference(&smooth_centered(&reward, window));
    pearson(&load, &derivative)
}

/// Smoothing window (in evaluated steps) for the load correlation.
pub const CORRELATION_WINDOW: usize = 12;

// ---------------------------------------------------------------------------
// Batch execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub agent: String,
    pub scenario: String,
    pub seed: u64,
    pub cause: TerminationCause,
    pub steps_survived: usize,
    pub total_reward: f64,
    pub score: f64,
    pub anchors: ScoreAnchors,
    pub mean_r_weighted: f64,
    pub load_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub lambda: f64,
    pub weight_sum: f64,
    pub agents: Vec<String>,
    pub scenarios: Vec<String>,
    pub attackable_lines: Vec<String>,
    pub episodes: Vec<EpisodeSummary>,
    /// Mean weighted N-1 reward per [agent][scenario].
    pub matrix: Vec<Vec<f64>>,
    /// Evaluated step times shared by the series rows.
    pub series_t: Vec<usize>,
    /// Per-step mean weighted N-1 reward across scenarios, per [agent][step].
    pub series: Vec<Vec<Option<f64>>>,
    /// Empirical overflow probability per [agent][attackable line].
    pub overflow_probs: Vec<Vec<f64>>,
    /// Mean score per agent.
    pub mean_scores: Vec<f64>,
    /// Mean load correlation per agent (episodes with a defined value).
    pub load_correlations: Vec<Option<f64>>,
}

pub struct BatchReport {
    pub report: Report,
    pub episodes: Vec<(EpisodeLog, Vec<EvalRecord>)>,
    /// Jobs that failed; the batch continues without them.
    pub failures: Vec<String>,
}

struct Job {
    agent: AgentConfig,
    scenario_idx: usize,
    seed: u64,
}

fn load_grid(config_grid: &Option<PathBuf>) -> Result<Grid, HarnessError> {
    match config_grid {
        Some(path) => Ok(Grid::from_json(&std::fs::read_to_string(path)?)?),
        None => Ok(bundled::grid14()),
    }
}

/// Resolve the batch's grid and scenarios; file-based maintenance lines are
/// merged into the attackable set.
pub fn load_inputs(config: &RunConfig) -> Result<(Grid, Vec<Chronics>), HarnessError> {
    let grid = load_grid(&config.grid)?;
    let scenarios: Vec<Chronics> = match &config.chronics {
        ChronicsSource::Files { files } => files
            .iter()
            .map(|f| load_chronics(f, &grid).map_err(HarnessError::from))
            .collect::<Result<_, _>>()?,
        ChronicsSource::Generate {
            count,
            base_seed,
            days,
            scale,
            amplitude,
            noise,
            trend,
            maintenance_rate,
        } => {
            let params = ProfileParams {
                scale: *scale,
                amplitude: *amplitude,
                noise: *noise,
                trend: *trend,
                maintenance_rate: *maintenance_rate,
                ..profile_for(&grid, config)?
            };
            (0..*count)
                .map(|i| {
                    generate_chronics(&grid, base_seed + i as u64, *days, &params)
                        .map_err(HarnessError::from)
                })
                .collect::<Result<_, _>>()?
        }
    };
    let mut extra = BTreeSet::new();
    for c in &scenarios {
        extra.extend(c.maintenance_lines());
    }
    let grid = grid.with_extra_attackable(&extra);
    Ok((grid, scenarios))
}

/// Load one chronics file and return the grid with its maintenance lines
/// merged into the attackable set, mirroring what a batch run does.
pub fn load_scenario(grid: &Grid, path: &Path) -> Result<(Grid, Chronics), HarnessError> {
    let chronics = load_chronics(path, grid)?;
    let grid = grid.with_extra_attackable(&chronics.maintenance_lines());
    Ok((grid, chronics))
}

fn profile_for(grid: &Grid, config: &RunConfig) -> Result<ProfileParams, HarnessError> {
    if config.grid.is_none() {
        Ok(bundled::default_profile(grid))
    } else {
        Err(HarnessError::Config(
            "generated chronics require the bundled grid (base-case profile unknown)".into(),
        ))
    }
}

/// Execute a full batch: anchor runs, agent runs, evaluation, scoring and
/// the aggregate report.
pub fn run_batch(config: &RunConfig) -> Result<BatchReport, HarnessError> {
    config.validate()?;
    let (grid, scenarios) = load_inputs(config)?;
    let n_attackable = grid.attackable.len();
    let lambda = match config.lambda {
        Some(l) => l,
        None => calibrate_lambda(n_attackable, 0.95, 0.2)
            .map_err(|e| HarnessError::Config(e.to_string()))?,
    };
    let weights = WeightVector::new(lambda, n_attackable);

    // Per-scenario alpha normalizers (do_nothing pre-rollout).
    let needs_alpha = matches!(config.opponent, OpponentSpec::WeightedRandom { .. });
    let alphas: Vec<Vec<f64>> = if needs_alpha {
        scenarios
            .par_iter()
            .map(|c| compute_alpha(&grid, c).map_err(HarnessError::from))
            .collect::<Result<_, _>>()?
    } else {
        vec![Vec::new(); scenarios.len()]
    };

    // Anchor agent first, then the configured agents (minus duplicates).
    let anchor = AgentConfig::DoNothing;
    let mut agents = vec![anchor.clone()];
    for a in &config.agents {
        if !agents.contains(a) {
            agents.push(a.clone());
        }
    }

    let mut jobs = Vec::new();
    for agent in &agents {
        for scenario_idx in 0..scenarios.len() {
            for &seed in &config.seeds {
                jobs.push(Job { agent: agent.clone(), scenario_idx, seed });
            }
        }
    }

    let results: Vec<Result<(EpisodeLog, Vec<EvalRecord>), String>> = jobs
        .par_iter()
        .map(|job| {
            let chronics = &scenarios[job.scenario_idx];
            let mut agent = job.agent.build();
            let mut opponent = config.opponent.build(&grid, &alphas[job.scenario_idx]);
            let mut run = || -> Result<_, HarnessError> {
                let log =
                    run_episode(agent.as_mut(), opponent.as_mut(), &grid, chronics, job.seed)?;
                let records = evaluate_log(&grid, chronics, &log, &weights, config.stride)?;
                Ok((log, records))
            };
            run().map_err(|e| {
                format!(
                    "{}/{}/{}: {e}",
                    job.agent.label(),
                    chronics.label,
                    job.seed
                )
            })
        })
        .collect();

    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(pair) => episodes.push(pair),
            Err(msg) => failures.push(msg),
        }
    }
    // Episodes whose do_nothing anchor failed cannot be scored; drop them
    // into the failure list rather than aborting the batch.
    let anchor_keys: BTreeSet<(String, u64)> = episodes
        .iter()
        .filter(|(l, _)| l.agent == "do_nothing")
        .map(|(l, _)| (l.scenario.clone(), l.seed))
        .collect();
    let mut kept = Vec::new();
    for (log, records) in episodes {
        if anchor_keys.contains(&(log.scenario.clone(), log.seed)) {
            kept.push((log, records));
        } else {
            failures.push(format!(
                "{}/{}/{}: missing do_nothing anchor",
                log.agent, log.scenario, log.seed
            ));
        }
    }

    let attackable_lines: Vec<String> =
        grid.attackable.iter().map(|&li| grid.lines[li].id.clone()).collect();
    let report = build_report(lambda, &weights, &attackable_lines, &kept)?;
    Ok(BatchReport { report, episodes: kept, failures })
}

/// Aggregate logs and evaluation records into the report. Anchors are the
/// do_nothing episodes, which every batch contains.
pub fn build_report(
    lambda: f64,
    weights: &WeightVector,
    attackable_lines: &[String],
    episodes: &[(EpisodeLog, Vec<EvalRecord>)],
) -> Result<Report, HarnessError> {
    let mut agents: Vec<String> = episodes.iter().map(|(l, _)| l.agent.clone()).collect();
    agents.sort();
    agents.dedup();
    // do_nothing leads so its score-zero anchor row is easy to spot.
    if let Some(pos) = agents.iter().position(|a| a == "do_nothing") {
        let dn = agents.remove(pos);
        agents.insert(0, dn);
    }
    let mut scenarios: Vec<String> = episodes.iter().map(|(l, _)| l.scenario.clone()).collect();
    scenarios.sort();
    scenarios.dedup();

    let anchor_for = |scenario: &str, seed: u64| -> Result<ScoreAnchors, HarnessError> {
        let (log, _) = episodes
            .iter()
            .find(|(l, _)| l.agent == "do_nothing" && l.scenario == scenario && l.seed == seed)
            .ok_or_else(|| {
                HarnessError::Runtime(format!(
                    "missing do_nothing anchor for scenario {scenario} seed {seed}"
                ))
            })?;
        Ok(ScoreAnchors {
            g_dn: log.total_reward,
            steps_dn: log.steps_survived,
            n_steps: log.n_steps,
        })
    };

    let mut summaries = Vec::new();
    for (log, records) in episodes {
        let anchors = anchor_for(&log.scenario, log.seed)?;
        let mean_r_weighted = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.r_weighted).sum::<f64>() / records.len() as f64
        };
        summaries.push(EpisodeSummary {
            agent: log.agent.clone(),
            scenario: log.scenario.clone(),
            seed: log.seed,
            cause: log.cause,
            steps_survived: log.steps_survived,
            total_reward: log.total_reward,
            score: score_episode(log.total_reward, log.steps_survived, &anchors),
            anchors,
            mean_r_weighted,
            load_correlation: load_reward_correlation(records, CORRELATION_WINDOW),
        });
    }
    summaries.sort_by(|a, b| {
        (&a.agent, &a.scenario, a.seed).cmp(&(&b.agent, &b.scenario, b.seed))
    });

    let mut matrix = vec![vec![0.0; scenarios.len()]; agents.len()];
    for (ai, agent) in agents.iter().enumerate() {
        for (si, scenario) in scenarios.iter().enumerate() {
            let cell: Vec<f64> = summaries
                .iter()
                .filter(|s| &s.agent == agent && &s.scenario == scenario)
                .map(|s| s.mean_r_weighted)
                .collect();
            matrix[ai][si] = if cell.is_empty() {
                0.0
            } else {
                cell.iter().sum::<f64>() / cell.len() as f64
            };
        }
    }

    // Per-step mean weighted reward across scenarios/seeds, aligned on t.
    let mut series_t: Vec<usize> = episodes
        .iter()
        .flat_map(|(_, records)| records.iter().map(|r| r.t))
        .collect();
    series_t.sort_unstable();
    series_t.dedup();
    let t_index: std::collections::BTreeMap<usize, usize> =
        series_t.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut series = Vec::with_capacity(agents.len());
    for agent in &agents {
        let mut sums = vec![0.0; series_t.len()];
        let mut counts = vec![0usize; series_t.len()];
        for (log, records) in episodes {
            if &log.agent != agent {
                continue;
            }
            for r in records {
                let i = t_index[&r.t];
                sums[i] += r.r_weighted;
                counts[i] += 1;
            }
        }
        series.push(
            sums.iter()
                .zip(&counts)
                .map(|(&s, &c)| if c > 0 { Some(s / c as f64) } else { None })
                .collect(),
        );
    }

    let n_attackable = attackable_lines.len();
    let mut overflow_probs = vec![vec![0.0; n_attackable]; agents.len()];
    for (ai, agent) in agents.iter().enumerate() {
        let mut failures = vec![0usize; n_attackable];
        let mut total = 0usize;
        for (log, records) in episodes {
            if &log.agent != agent {
                continue;
            }
            for r in records {
                total += 1;
                for (pos, &s) in r.s.iter().enumerate() {
                    if s == 0 {
                        failures[pos] += 1;
                    }
                }
            }
        }
        for pos in 0..n_attackable {
            overflow_probs[ai][pos] =
                if total > 0 { failures[pos] as f64 / total as f64 } else { 0.0 };
        }
    }

    let mut mean_scores = Vec::new();
    let mut load_correlations = Vec::new();
    for agent in &agents {
        let scores: Vec<f64> =
            summaries.iter().filter(|s| &s.agent == agent).map(|s| s.score).collect();
        mean_scores.push(scores.iter().sum::<f64>() / scores.len().max(1) as f64);
        let corrs: Vec<f64> = summaries
            .iter()
            .filter(|s| &s.agent == agent)
            .filter_map(|s| s.load_correlation)
            .collect();
        load_correlations.push(if corrs.is_empty() {
            None
        } else {
            Some(corrs.iter().sum::<f64>() / corrs.len() as f64)
        });
    }

    Ok(Report {
        lambda,
        weight_sum: weights.sum(),
        agents,
        scenarios,
        attackable_lines: attackable_lines.to_vec(),
        episodes: summaries,
        matrix,
        series_t,
        series,
        overflow_probs,
        mean_scores,
        load_correlations,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

fn episode_stem(log: &EpisodeLog) -> String {
    format!("{}__{}__{}", log.agent, log.scenario, log.seed)
}

/// Write episodes, evaluation CSVs and report files under `out`.
pub fn write_outputs(out: &Path, batch: &BatchReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out.join("episodes"))?;
    std::fs::create_dir_all(out.join("eval"))?;
    std::fs::create_dir_all(out.join("report"))?;
    let n = batch.report.attackable_lines.len();
    for (log, records) in &batch.episodes {
        let stem = episode_stem(log);
        std::fs::write(out.join("episodes").join(format!("{stem}.jsonl")), log.to_jsonl())?;
        std::fs::write(out.join("eval").join(format!("{stem}.csv")), records_to_csv(records, n))?;
    }
    if !batch.failures.is_empty() {
        std::fs::write(
            out.join("report").join("failures.json"),
            serde_json::to_string_pretty(&batch.failures).expect("failure serialization"),
        )?;
    }
    write_report_files(out, &batch.report)
}

pub fn write_report_files(out: &Path, report: &Report) -> Result<(), HarnessError> {
    let dir = out.join("report");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(report).expect("report serialization"),
    )?;

    let mut matrix = String::from("agent");
    for s in &report.scenarios {
        matrix.push_str(&format!(",{s}"));
    }
    matrix.push('\n');
    for (ai, agent) in report.agents.iter().enumerate() {
        matrix.push_str(agent);
        for v in &report.matrix[ai] {
            matrix.push_str(&format!(",{v}"));
        }
        matrix.push('\n');
    }
    std::fs::write(dir.join("matrix.csv"), matrix)?;

    let mut probs = String::from("agent,line,overflow_probability\n");
    for (ai, agent) in report.agents.iter().enumerate() {
        for (pos, line) in report.attackable_lines.iter().enumerate() {
            probs.push_str(&format!("{agent},{line},{}\n", report.overflow_probs[ai][pos]));
        }
    }
    std::fs::write(dir.join("overflow_probs.csv"), probs)?;

    let mut series = String::from("t");
    for agent in &report.agents {
        series.push_str(&format!(",{agent}"));
    }
    series.push('\n');
    for (i, t) in report.series_t.iter().enumerate() {
        series.push_str(&format!("{t}"));
        for row in &report.series {
            match row[i] {
                Some(v) => series.push_str(&format!(",{v}")),
                None => series.push(','),
            }
        }
        series.push('\n');
    }
    std::fs::write(dir.join("series.csv"), series)?;
    Ok(())
}

/// Rebuild the report from the episodes and eval CSVs persisted by a run.
/// λ and the attackable line labels come from the persisted summary so the
/// regeneration matches the original configuration.
pub fn regenerate_report(out: &Path) -> Result<Report, HarnessError> {
    let prior: Report =
        serde_json::from_str(&std::fs::read_to_string(out.join("report/summary.json"))?)
            .map_err(|e| HarnessError::Runtime(format!("bad summary.json: {e}")))?;
    regenerate_report_with(out, prior.lambda, &prior.attackable_lines)
}

/// Rebuild the report with an explicit λ and attackable-line labels.
pub fn regenerate_report_with(
    out: &Path,
    lambda: f64,
    attackable_lines: &[String],
) -> Result<Report, HarnessError> {
    let mut episodes = Vec::new();
    let mut stems: Vec<String> = std::fs::read_dir(out.join("episodes"))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.path().file_stem().map(|s| s.to_string_lossy().into_owned())
        })
        .collect();
    stems.sort();
    for stem in stems {
        let log_text = std::fs::read_to_string(out.join("episodes").join(format!("{stem}.jsonl")))?;
        let log = EpisodeLog::from_jsonl(&log_text)
            .map_err(|e| HarnessError::Runtime(format!("bad episode log {stem}: {e}")))?;
        let eval_text = std::fs::read_to_string(out.join("eval").join(format!("{stem}.csv")))?;
        let records = records_from_csv(&eval_text).map_err(HarnessError::Runtime)?;
        episodes.push((log, records));
    }
    let weights = WeightVector::new(lambda, attackable_lines.len());
    build_report(lambda, &weights, attackable_lines, &episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors(g_dn: f64, steps_dn: usize, n_steps: usize) -> ScoreAnchors {
        ScoreAnchors { g_dn, steps_dn, n_steps }
    }

    #[test]
    fn score_anchor_points() {
        // do_nothing failed mid-scenario.
        let a = anchors(400.0, 600, 1000);
        assert_eq!(score_episode(0.0, 0, &a), -100.0);
        assert!((score_episode(400.0, 700, &a) - 0.0).abs() < 1e-12);
        assert!((score_episode(1000.0, 1000, &a) - 100.0).abs() < 1e-9);
        // Completion anchor: g_c = 400 * 1000/600.
        let g_c = 400.0 * 1000.0 / 600.0;
        assert!((score_episode(g_c, 1000, &a) - 80.0).abs() < 1e-9);
        // Midpoint of the middle branch.
        let mid = (400.0 + g_c) / 2.0;
        assert!((score_episode(mid, 1000, &a) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn score_zero_when_matching_do_nothing() {
        let a = anchors(1800.0, 2016, 2016);
        assert_eq!(score_episode(1800.0, 2016, &a), 0.0);
        assert!((score_episode(2016.0, 2016, &a) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn score_is_monotone_in_return() {
        let a = anchors(400.0, 600, 1000);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let g = i as f64;
            let s = score_episode(g, 500, &a);
            assert!(s >= prev - 1e-12, "g = {g}");
            assert!((-100.0..=100.0).contains(&s));
            prev = s;
        }
    }

    #[test]
    fn smoothing_preserves_constants() {
        let s = vec![3.0; 20];
        assert_eq!(smooth_centered(&s, 12), s);
        let d = central_difference(&s);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_difference_of_line_is_slope() {
        let s: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let d = central_difference(&s);
        for &v in &d {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_signs() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &vec![1.0; 50]).is_none());
    }

    #[test]
    fn config_validation_catches_empties() {
        let config = RunConfig {
            grid: None,
            chronics: ChronicsSource::Generate {
                count: 1,
                base_seed: 0,
                days: 1,
                scale: 1.0,
                amplitude: 0.25,
                noise: 0.0,
                trend: 0.0,
                maintenance_rate: 1.0,
            },
            agents: vec![],
            opponent: OpponentSpec::DoNothing,
            seeds: vec![0],
            stride: 1,
            lambda: None,
            out: PathBuf::from("out"),
        };
        assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn config_round_trips_from_json() {
        let text = r#"{
            "chronics": {"generate": {"count": 2, "base_seed": 7, "days": 1}},
            "agents": [{"kind": "do_nothing"}, {"kind": "reco_powerline"}],
            "opponent": {"kind": "weighted_random"},
            "seeds": [1, 2],
            "out": "runs/demo"
        }"#;
        let config = RunConfig::from_json(text).unwrap();
        assert_eq!(config.seeds, vec![1, 2]);
        assert_eq!(config.stride, 1);
        assert!(config.lambda.is_none());
        assert!(matches!(config.opponent, OpponentSpec::WeightedRandom { .. }));
    }

    #[test]
    fn small_batch_bookkeeping() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            grid: None,
            chronics: ChronicsSource::Generate {
                count: 3,
                base_seed: 100,
                days: 1,
                scale: 1.0,
                amplitude: 0.25,
                noise: 0.0,
                trend: 0.0,
                maintenance_rate: 1.0,
            },
            agents: vec![AgentConfig::DoNothing, AgentConfig::RecoPowerline],
            opponent: OpponentSpec::DoNothing,
            seeds: vec![0],
            stride: 12,
            lambda: None,
            out: dir.path().to_path_buf(),
        };
        let batch = run_batch(&config).unwrap();
        // 2 agents x 3 scenarios x 1 seed.
        assert_eq!(batch.episodes.len(), 6);
        assert_eq!(batch.report.matrix.len(), 2);
        assert_eq!(batch.report.matrix[0].len(), 3);
        // do_nothing scores exactly 0 on every scenario by construction.
        for s in batch.report.episodes.iter().filter(|s| s.agent == "do_nothing") {
            assert!(s.score.abs() < 1e-9);
        }
        write_outputs(dir.path(), &batch).unwrap();
        let regen = regenerate_report(dir.path()).unwrap();
        assert_eq!(regen, batch.report);
    }
}
