//! N-1 evaluation engine: exhaustive single-outage stability scores,
//! exponentially decreasing weight calibration, and the weighted, uniform
//! and worst-case rewards.
//!
//! Weight j (1-based) is exp(-lambda * (j-1) / (n-1)), so the largest
//! weight is always 1. The weighted reward pairs the largest weights with
//! the lowest stability scores.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chronics::Chronics;
use crate::env::EpisodeLog;
use crate::grid::{check_overflow, solve_dc, Grid, InjectionVector, SolveError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("infeasible calibration: mass {mass} <= m/n = {floor}")]
    InfeasibleCalibration { mass: f64, floor: f64 },
    #[error("score vector length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("solver failure during evaluation: {0}")]
    Solver(#[from] SolveError),
    #[error("episode has {log} steps but chronics {label} has {chronics}")]
    ScenarioMismatch { log: usize, chronics: usize, label: String },
}

/// Exponentially decreasing weights, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub lambda: f64,
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(lambda: f64, n_lines: usize) -> WeightVector {
        assert!(n_lines >= 2, "need at least two lines");
        assert!(lambda > 0.0, "lambda must be positive");
        let weights = (1..=n_lines)
            .map(|j| (-lambda * (j - 1) as f64 / (n_lines - 1) as f64).exp())
            .collect();
        WeightVector { lambda, weights }
    }

    pub fn n_lines(&self) -> usize {
        self.weights.len()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Fraction of total weight carried by the first `m` weights at `lambda`.
fn head_mass_ratio(lambda: f64, n: usize, m: usize) -> f64 {
    let head: f64 =
        (1..=m).map(|j| (-lambda * (j - 1) as f64 / (n - 1) as f64).exp()).sum();
    let total: f64 =
        (1..=n).map(|j| (-lambda * (j - 1) as f64 / (n - 1) as f64).exp()).sum();
    head / total
}

/// Solve for lambda so that `mass` of the weight is carried by the worst
/// `ceil(fraction * n)` outages. The ratio is monotone increasing in
/// lambda, so bisection finds the unique root.
pub fn calibrate_lambda(n_lines: usize, mass: f64, fraction: f64) -> Result<f64, EvalError> {
    assert!(n_lines >= 2);
    assert!(mass > 0.0 && mass < 1.0);
    assert!(fraction > 0.0 && fraction < 1.0);
    let m = (fraction * n_lines as f64).ceil() as usize;
    let floor = m as f64 / n_lines as f64;
    if mass <= floor {
        return Err(EvalError::InfeasibleCalibration { mass, floor });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while head_mass_ratio(hi, n_lines, m) < mass {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if head_mass_ratio(mid, n_lines, m) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Weighted N-1 reward: sort scores ascending and pair the j-th smallest
/// with weight j, so the heaviest weights always land on the worst scores.
pub fn weighted_reward(scores: &[f64], weights: &WeightVector) -> Result<f64, EvalError> {
    if scores.len() != weights.n_lines() {
        return Err(EvalError::LengthMismatch {
            got: scores.len(),
            expected: weights.n_lines(),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Ok(sorted.iter().zip(&weights.weights).map(|(s, w)| s * w).sum())
}

pub fn uniform_reward(scores: &[f64]) -> f64 {
    scores.iter().sum()
}

pub fn worst_case_reward(scores: &[f64]) -> f64 {
    scores.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Per attackable line: 1 if removing it (given current injections) leaves
/// no overflow and no islanded load, else 0. Already-disconnected lines
/// score the current state itself.
pub fn stability_scores(
    grid: &Grid,
    connected: &BTreeSet<usize>,
    injections: &InjectionVector,
) -> Result<Vec<u8>, EvalError> {
    let base = solve_dc(grid, injections, connected)?;
    let base_ok = check_overflow(&base).is_empty();
    let mut scores = Vec::with_capacity(grid.attackable.len());
    for &li in &grid.attackable {
        if !connected.contains(&li) {
            scores.push(base_ok as u8);
            continue;
        }
        let mut reduced = connected.clone();
        reduced.remove(&li);
        let s = match solve_dc(grid, injections, &reduced) {
            Ok(sol) => check_overflow(&sol).is_empty() as u8,
            Err(SolveError::IslandedLoad { .. }) => 0,
            Err(e) => return Err(e.into()),
        };
        scores.push(s);
    }
    Ok(scores)
}

/// One evaluated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub t: usize,
    pub s: Vec<u8>,
    pub r_weighted: f64,
    pub r_uniform: f64,
    pub r_worst: f64,
    pub total_load: f64,
}

/// Replay an episode log, scoring every `stride`-th solved state.
pub fn evaluate_log(
    grid: &Grid,
    chronics: &Chronics,
    log: &EpisodeLog,
    weights: &WeightVector,
    stride: usize,
) -> Result<Vec<EvalRecord>, EvalError> {
    assert!(stride >= 1);
    if log.n_steps != chronics.n_steps {
        return Err(EvalError::ScenarioMismatch {
            log: log.n_steps,
            chronics: chronics.n_steps,
            label: chronics.label.clone(),
        });
    }
    let solved = &log.steps[..log.steps_survived.min(log.steps.len())];
    let selected: Vec<&crate::env::StepRecord> =
        solved.iter().filter(|s| s.t % stride == 0).collect();
    selected
        .par_iter()
        .map(|step| {
            let connected: BTreeSet<usize> = step
                .status
                .iter()
                .enumerate()
                .filter(|(_, st)| st.is_connected())
                .map(|(i, _)| i)
                .collect();
            let injections = chronics.injections(grid.slack, step.t);
            let s = stability_scores(grid, &connected, &injections)?;
            let s_f: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            Ok(EvalRecord {
                t: step.t,
                r_weighted: weighted_reward(&s_f, weights)?,
                r_uniform: uniform_reward(&s_f),
                r_worst: worst_case_reward(&s_f),
                total_load: chronics.total_load(step.t).expect("t in range"),
                s,
            })
        })
        .collect()
}

/// Serialize records to the evaluation CSV (t, S_1..S_n, rewards, load).
pub fn records_to_csv(records: &[EvalRecord], n_lines: usize) -> String {
    let mut out = String::from("t");
    for j in 1..=n_lines {
        out.push_str(&format!(",S_{j}"));
    }
    out.push_str(",r_weighted,r_uniform,r_worst,total_load\n");
    for r in records {
        out.push_str(&r.t.to_string());
        for s in &r.s {
            out.push_str(&format!(",{s}"));
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            r.r_weighted, r.r_uniform, r.r_worst, r.total_load
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<EvalRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty eval csv")?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("S_")).count();
    let mut records = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 5 {
            return Err(format!("bad eval row: {line}"));
        }
        let parse =
            |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s}: {e}"));
        records.push(EvalRecord {
            t: fields[0].parse().map_err(|e| format!("bad t: {e}"))?,
            s: fields[1..=n]
                .iter()
                .map(|s| s.parse::<u8>().map_err(|e| format!("bad score: {e}")))
                .collect::<Result<_, _>>()?,
            r_weighted: parse(fields[n + 1])?,
            r_uniform: parse(fields[n + 2])?,
            r_worst: parse(fields[n + 3])?,
            total_load: parse(fields[n + 4])?,
        });
    }
    Ok(records)
}
