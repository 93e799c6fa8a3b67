//! Constrained adversarial actors: budget accounting, attack scheduling,
//! the do-nothing baseline and the loading-weighted random opponent.
//!
//! The weighted opponent attacks once per attack period at a uniformly
//! drawn step (spaced at least one attack duration from the previous
//! attack), picking among attackable connected lines with probability
//! proportional to rho_i / alpha_i, where alpha_i is the per-line time-mean
//! loading from a do-nothing pre-rollout over the scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chronics::Chronics;
use crate::env::{EnvError, Observation, OpponentAction};
use crate::grid::Grid;

/// Floor for the alpha normalizers.
pub const ALPHA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentConfig {
    /// Lines disconnected per attack; fixed to 1 in this artifact.
    pub n_attack: u32,
    /// Attack duration in steps.
    pub d_attack: u32,
    /// Attack period length in steps (at most one attack per period).
    pub t_attack: u32,
    pub attack_cost: f64,
    pub budget_per_step: f64,
    pub initial_budget: f64,
    /// Attackable line indices.
    pub attackable: Vec<usize>,
}

impl OpponentConfig {
    pub fn for_grid(grid: &Grid) -> OpponentConfig {
        OpponentConfig {
            n_attack: 1,
            d_attack: 48,
            t_attack: 288,
            attack_cost: 1.0,
            budget_per_step: 1.0 / 288.0,
            initial_budget: 1.0,
            attackable: grid.attackable.clone(),
        }
    }
}

/// Mutable per-episode opponent bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentState {
    pub budget: f64,
    pub period: usize,
    /// Attack step scheduled for the current period, if any.
    pub scheduled: Option<usize>,
    /// Most recent scheduled attack step across periods.
    pub last_scheduled: Option<usize>,
    /// Per attackable line (config order), times attacked this episode.
    pub attack_counts: Vec<u64>,
    /// Per attackable line (config order), loading normalizers.
    pub alpha: Vec<f64>,
}

impl OpponentState {
    pub fn new(config: &OpponentConfig, alpha: Vec<f64>) -> OpponentState {
        assert_eq!(alpha.len(), config.attackable.len());
        OpponentState {
            budget: config.initial_budget,
            period: 0,
            scheduled: None,
            last_scheduled: None,
            attack_counts: vec![0; config.attackable.len()],
            alpha,
        }
    }
}

/// Budget regeneration, applied every step before the opponent acts.
pub fn tick_budget(state: &mut OpponentState, config: &OpponentConfig) {
    state.budget += config.budget_per_step;
}

/// Draw the attack step for period `k`, uniform over the feasible
/// sub-interval of [k*T, (k+1)*T) given the previous attack time.
pub fn schedule_attack_time(
    state: &mut OpponentState,
    config: &OpponentConfig,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let t_attack = config.t_attack as usize;
    let period_start = k * t_attack;
    let period_end = period_start + t_attack;
    let lo = match state.last_scheduled {
        Some(prev) => period_start.max(prev + config.d_attack as usize),
        None => period_start,
    };
    if lo >= period_end {
        return None;
    }
    let t_k = rng.gen_range(lo..period_end);
    state.last_scheduled = Some(t_k);
    Some(t_k)
}

/// Probability over attackable connected lines, proportional to
/// rho_i / alpha_i; uniform when every candidate has zero loading.
pub fn candidate_distribution(
    obs: &Observation,
    config: &OpponentConfig,
    alpha: &[f64],
) -> Vec<(usize, f64)> {
    let mut weights = Vec::new();
    for (pos, &li) in config.attackable.iter().enumerate() {
        if obs.line_status[li].is_connected() {
            weights.push((li, obs.rho[li] / alpha[pos]));
        }
    }
    if weights.is_empty() {
        return weights;
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        let p = 1.0 / weights.len() as f64;
        for w in &mut weights {
            w.1 = p;
        }
    } else {
        for w in &mut weights {
            w.1 /= total;
        }
    }
    weights
}

/// Sample the attacked line at the scheduled step. On success the budget is
/// spent and the per-line attack count incremented.
pub fn wro_pick_line(
    obs: &Observation,
    state: &mut OpponentState,
    config: &OpponentConfig,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    if state.budget < config.attack_cost {
        return None;
    }
    let dist = candidate_distribution(obs, config, &state.alpha);
    if dist.is_empty() {
        return None;
    }
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = dist[dist.len() - 1].0;
    for &(li, p) in &dist {
        acc += p;
        if draw < acc {
            chosen = li;
            break;
        }
    }
    state.budget -= config.attack_cost;
    let pos = config.attackable.iter().position(|&li| li == chosen).expect("candidate");
    state.attack_counts[pos] += 1;
    Some(chosen)
}

/// Max pairwise difference of per-line attack counts.
pub fn delta_attack(attack_counts: &[u64]) -> u64 {
    match (attack_counts.iter().max(), attack_counts.iter().min()) {
        (Some(max), Some(min)) => max - min,
        _ => 0,
    }
}

/// Per-line time-mean loading over a do-nothing, no-opponent rollout,
/// floored at [`ALPHA_FLOOR`]. One value per `grid.attackable` entry.
pub fn compute_alpha(grid: &Grid, chronics: &Chronics) -> Result<Vec<f64>, EnvError> {
    let log = crate::env::run_episode(
        &mut crate::agents::DoNothingAgent,
        &mut DoNothingOpponent::default(),
        grid,
        chronics,
        0,
    )?;
    let mut sums = vec![0.0; grid.attackable.len()];
    let mut counts = vec![0usize; grid.attackable.len()];
    for step in &log.steps {
        for (pos, &li) in grid.attackable.iter().enumerate() {
            if step.status[li].is_connected() {
                sums[pos] += step.rho[li];
                counts[pos] += 1;
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { (s / c as f64).max(ALPHA_FLOOR) } else { ALPHA_FLOOR })
        .collect())
}

pub trait Opponent {
    fn name(&self) -> &str;
    fn reseed(&mut self, seed: u64);
    fn act(&mut self, obs: &Observation) -> OpponentAction;
}

#[derive(Default)]
pub struct DoNothingOpponent;

impl Opponent for DoNothingOpponent {
    fn name(&self) -> &str {
        "do_nothing"
    }

    fn reseed(&mut self, _seed: u64) {}

    fn act(&mut self, _obs: &Observation) -> OpponentAction {
        OpponentAction::DoNothing
    }
}

pub struct WeightedRandomOpponent {
    config: OpponentConfig,
    alpha: Vec<f64>,
    state: OpponentState,
    rng: ChaCha8Rng,
}

impl WeightedRandomOpponent {
    pub fn new(config: OpponentConfig, alpha: Vec<f64>) -> WeightedRandomOpponent {
        let state = OpponentState::new(&config, alpha.clone());
        WeightedRandomOpponent { config, alpha, state, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn state(&self) -> &OpponentState {
        &self.state
    }
}

impl Opponent for WeightedRandomOpponent {
    fn name(&self) -> &str {
        "weighted_random"
    }

    fn reseed(&mut self, seed: u64) {
        self.state = OpponentState::new(&self.config, self.alpha.clone());
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, obs: &Observation) -> OpponentAction {
        tick_budget(&mut self.state, &self.config);
        let t_attack = self.config.t_attack as usize;
        let k = obs.t / t_attack;
        if obs.t % t_attack == 0 {
            self.state.period = k;
            self.state.scheduled = schedule_attack_time(&mut self.state, &self.config, k, &mut self.rng);
        }
        if self.state.scheduled == Some(obs.t) && obs.attack.is_none() {
            if let Some(line) = wro_pick_line(obs, &mut self.state, &self.config, &mut self.rng) {
                return OpponentAction::Attack { line, duration: self.config.d_attack };
            }
        }
        OpponentAction::DoNothing
    }
}
