//! Sequential decision loop over a grid and a chronics scenario.
//!
//! Each step applies the opponent action, then the agent action, then
//! maintenance transitions, advances the injections, solves the DC flow and
//! applies the overload rules (instant trip above `hard_trip_rho`, trip
//! after `soft_overflow_steps` consecutive overloaded solves, one cascade
//! re-solve per step). Illegal actions are silent no-ops with a notice.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chronics::Chronics;
use crate::grid::{solve_dc, FlowSolution, Grid, InjectionVector, SolveError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("solver failure: {0}")]
    Solver(String),
}

/// Fixed environment rule parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvParams {
    /// Instant-trip loading threshold.
    pub hard_trip_rho: f64,
    /// Consecutive overloaded solves before a soft trip.
    pub soft_overflow_steps: u32,
    /// Steps a line stays non-reconnectable after a disconnection.
    pub cooldown_steps: u32,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams { hard_trip_rho: 2.0, soft_overflow_steps: 3, cooldown_steps: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisconnectCause {
    Agent,
    Opponent,
    Maintenance,
    OverloadTrip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    Connected,
    Disconnected(DisconnectCause),
}

impl LineStatus {
    pub fn is_connected(&self) -> bool {
        matches!(self, LineStatus::Connected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    DoNothing,
    Reconnect(usize),
    Disconnect(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpponentAction {
    DoNothing,
    Attack { line: usize, duration: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackInfo {
    pub line: usize,
    pub remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Completed,
    /// Initial solve failed at reset.
    Blackout,
    /// A loaded bus became islanded mid-episode.
    IslandedLoad,
}

/// Shared state snapshot handed to both the agent and the opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: usize,
    pub rho: Vec<f64>,
    pub flow: Vec<f64>,
    pub line_status: Vec<LineStatus>,
    pub cooldown: Vec<u32>,
    pub in_maintenance: Vec<bool>,
    pub injections: InjectionVector,
    pub attack: Option<AttackInfo>,
    pub total_load: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Lines tripped by the overload rules this step.
    pub trips: Vec<usize>,
    /// Rejected-action notices.
    pub notices: Vec<String>,
    /// Attack applied this step, if any.
    pub attack_started: Option<AttackInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub cause: Option<TerminationCause>,
    pub info: StepInfo,
}

pub struct Environment<'a> {
    grid: &'a Grid,
    chronics: &'a Chronics,
    params: EnvParams,
    t: usize,
    status: Vec<LineStatus>,
    cooldown: Vec<u32>,
    overload_count: Vec<u32>,
    attack: Option<AttackInfo>,
    done: bool,
    cause: Option<TerminationCause>,
    steps_survived: usize,
    last_solution: FlowSolution,
}

impl<'a> Environment<'a> {
    pub fn new(grid: &'a Grid, chronics: &'a Chronics, params: EnvParams) -> Environment<'a> {
        let n = grid.n_lines();
        Environment {
            grid,
            chronics,
            params,
            t: 0,
            status: vec![LineStatus::Connected; n],
            cooldown: vec![0; n],
            overload_count: vec![0; n],
            attack: None,
            done: false,
            cause: None,
            steps_survived: 0,
            last_solution: FlowSolution {
                flow: vec![0.0; n],
                theta: vec![0.0; grid.n_buses()],
                rho: vec![0.0; n],
                islanded_buses: Vec::new(),
            },
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn cause(&self) -> Option<TerminationCause> {
        self.cause
    }

    pub fn steps_survived(&self) -> usize {
        self.steps_survived
    }

    fn connected_set(&self) -> BTreeSet<usize> {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_connected())
            .map(|(i, _)| i)
            .collect()
    }

    fn reward(&self, sol: &FlowSolution) -> f64 {
        let n = self.grid.n_lines() as f64;
        let sum: f64 = self
            .status
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_connected())
            .map(|(i, _)| (1.0 - sol.rho[i] * sol.rho[i]).max(0.0))
            .sum();
        sum / n
    }

    pub fn observation(&self) -> Observation {
        let in_maintenance: Vec<bool> = (0..self.grid.n_lines())
            .map(|li| self.chronics.maintenance[self.t].contains(&li))
            .collect();
        Observation {
            t: self.t,
            rho: self.last_solution.rho.clone(),
            flow: self.last_solution.flow.clone(),
            line_status: self.status.clone(),
            cooldown: self.cooldown.clone(),
            in_maintenance,
            injections: self.chronics.injections(self.grid.slack, self.t),
            attack: self.attack,
            total_load: self.chronics.total_load(self.t).expect("t in range"),
        }
    }

    /// Solve the current topology, trip overloaded lines and re-solve once.
    /// Returns false when a loaded bus is islanded (blackout).
    fn solve_and_trip(&mut self, info: &mut StepInfo, set_this_step: &[bool]) -> Result<bool, EnvError> {
        let inj = self.chronics.injections(self.grid.slack, self.t);
        let sol = match solve_dc(self.grid, &inj, &self.connected_set()) {
            Ok(sol) => sol,
            Err(SolveError::IslandedLoad { .. }) => return Ok(false),
            Err(e) => return Err(EnvError::Solver(e.to_string())),
        };

        let mut trips = Vec::new();
        for li in 0..self.grid.n_lines() {
            if !self.status[li].is_connected() {
                self.overload_count[li] = 0;
                continue;
            }
            if sol.rho[li] > self.params.hard_trip_rho {
                trips.push(li);
            } else if sol.rho[li] > 1.0 {
                self.overload_count[li] += 1;
                if self.overload_count[li] >= self.params.soft_overflow_steps {
                    trips.push(li);
                }
            } else {
                self.overload_count[li] = 0;
            }
        }

        if trips.is_empty() {
            self.last_solution = sol;
            return Ok(true);
        }
        for &li in &trips {
            self.status[li] = LineStatus::Disconnected(DisconnectCause::OverloadTrip);
            self.cooldown[li] = self.params.cooldown_steps;
            self.overload_count[li] = 0;
        }
        info.trips = trips;
        // Single cascade pass: one re-solve, no further trip detection.
        let _ = set_this_step;
        match solve_dc(self.grid, &inj, &self.connected_set()) {
            Ok(sol) => {
                self.last_solution = sol;
                Ok(true)
            }
            Err(SolveError::IslandedLoad { .. }) => Ok(false),
            Err(e) => Err(EnvError::Solver(e.to_string())),
        }
    }

    /// Initialize the episode at t = 0 and solve the initial flow.
    pub fn reset(&mut self) -> Result<StepOutcome, EnvError> {
        let n = self.grid.n_lines();
        self.t = 0;
        self.status = vec![LineStatus::Connected; n];
        self.cooldown = vec![0; n];
        self.overload_count = vec![0; n];
        self.attack = None;
        self.done = false;
        self.cause = None;
        self.steps_survived = 0;

        let mut info = StepInfo::default();
        for &li in &self.chronics.maintenance[0] {
            self.status[li] = LineStatus::Disconnected(DisconnectCause::Maintenance);
            self.cooldown[li] = self.params.cooldown_steps;
        }
        let set_this_step = vec![false; n];
        let alive = self.solve_and_trip(&mut info, &set_this_step)?;
        if !alive {
            self.done = true;
            self.cause = Some(TerminationCause::Blackout);
            return Ok(StepOutcome {
                observation: self.observation(),
                reward: 0.0,
                done: true,
                cause: self.cause,
                info,
            });
        }
        self.steps_survived = 1;
        if self.chronics.n_steps == 1 {
            self.done = true;
            self.cause = Some(TerminationCause::Completed);
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward: self.reward(&self.last_solution.clone()),
            done: self.done,
            cause: self.cause,
            info,
        })
    }

    /// One-step lookahead with frozen injections and no opponent; returns
    /// the max relative loading over connected lines, or None on blackout.
    pub fn simulate_action(&self, action: AgentAction) -> Option<f64> {
        let mut connected = self.connected_set();
        match action {
            AgentAction::DoNothing => {}
            AgentAction::Reconnect(li) => {
                connected.insert(li);
            }
            AgentAction::Disconnect(li) => {
                connected.remove(&li);
            }
        }
        let inj = self.chronics.injections(self.grid.slack, self.t);
        match solve_dc(self.grid, &inj, &connected) {
            Ok(sol) => Some(
                connected.iter().map(|&li| sol.rho[li]).fold(0.0, f64::max),
            ),
            Err(_) => None,
        }
    }

    /// Is `li` a legal reconnect target in the current state?
    pub fn reconnectable(&self, li: usize) -> bool {
        !self.status[li].is_connected()
            && self.cooldown[li] == 0
            && self.attack.map_or(true, |a| a.line != li)
            && !self.chronics.maintenance[self.t].contains(&li)
    }

    pub fn step(
        &mut self,
        agent_action: AgentAction,
        opponent_action: OpponentAction,
    ) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let n = self.grid.n_lines();
        let mut info = StepInfo::default();
        let mut set_this_step = vec![false; n];
        let t_next = self.t + 1;

        // 1. Opponent attack.
        if let OpponentAction::Attack { line, duration } = opponent_action {
            let legal = line < n
                && self.status[line].is_connected()
                && self.grid.attackable.contains(&line)
                && self.attack.is_none();
            if legal {
                self.status[line] = LineStatus::Disconnected(DisconnectCause::Opponent);
                self.cooldown[line] = self.params.cooldown_steps;
                set_this_step[line] = true;
                self.attack = Some(AttackInfo { line, remaining: duration });
                info.attack_started = Some(AttackInfo { line, remaining: duration });
            } else {
                info.notices.push(format!("opponent attack on line {line} rejected"));
            }
        }

        // 2. Agent action.
        match agent_action {
            AgentAction::DoNothing => {}
            AgentAction::Reconnect(li) => {
                let legal = li < n
                    && !self.status[li].is_connected()
                    && self.cooldown[li] == 0
                    && self.attack.map_or(true, |a| a.line != li)
                    && !self.chronics.maintenance[t_next].contains(&li);
                if legal {
                    self.status[li] = LineStatus::Connected;
                } else {
                    info.notices.push(format!("agent reconnect of line {li} rejected"));
                }
            }
            AgentAction::Disconnect(li) => {
                if li < n && self.status[li].is_connected() {
                    self.status[li] = LineStatus::Disconnected(DisconnectCause::Agent);
                    self.cooldown[li] = self.params.cooldown_steps;
                    set_this_step[li] = true;
                } else {
                    info.notices.push(format!("agent disconnect of line {li} rejected"));
                }
            }
        }

        // 3. Maintenance transitions entering at t + 1.
        for &li in &self.chronics.maintenance[t_next] {
            if self.status[li].is_connected() {
                self.status[li] = LineStatus::Disconnected(DisconnectCause::Maintenance);
                self.cooldown[li] = self.params.cooldown_steps;
                set_this_step[li] = true;
            }
        }

        // 4. Advance and solve.
        self.t = t_next;
        let alive = self.solve_and_trip(&mut info, &set_this_step)?;

        // 5. Tick cooldowns (skipping ones set this step) and the attack.
        for li in 0..n {
            if self.cooldown[li] > 0 && !set_this_step[li] {
                self.cooldown[li] -= 1;
            }
        }
        if let Some(a) = &mut self.attack {
            a.remaining = a.remaining.saturating_sub(1);
            if a.remaining == 0 {
                self.attack = None;
            }
        }

        if !alive {
            self.done = true;
            self.cause = Some(TerminationCause::IslandedLoad);
            return Ok(StepOutcome {
                observation: self.observation(),
                reward: 0.0,
                done: true,
                cause: self.cause,
                info,
            });
        }
        self.steps_survived += 1;
        if self.t == self.chronics.n_steps - 1 {
            self.done = true;
            self.cause = Some(TerminationCause::Completed);
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward: self.reward(&self.last_solution.clone()),
            done: self.done,
            cause: self.cause,
            info,
        })
    }
}

// ---------------------------------------------------------------------------
// Episode orchestration and logging
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub line: usize,
    /// First step at which the line is disconnected.
    pub start: usize,
    pub duration: u32,
}

/// Per-step log entry; `t = 0` is the reset record with no actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub reward: f64,
    pub rho: Vec<f64>,
    pub status: Vec<LineStatus>,
    pub agent_action: Option<AgentAction>,
    pub opponent_action: Option<OpponentAction>,
    pub attack: Option<AttackInfo>,
    pub trips: Vec<usize>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub n_steps: usize,
    pub agent: String,
    pub opponent: String,
    pub steps: Vec<StepRecord>,
    pub attacks: Vec<AttackEvent>,
    pub cause: TerminationCause,
    pub total_reward: f64,
    pub steps_survived: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Step(StepRecord),
    Footer {
        scenario: String,
        seed: u64,
        n_steps: usize,
        agent: String,
        opponent: String,
        attacks: Vec<AttackEvent>,
        cause: TerminationCause,
        total_reward: f64,
        steps_survived: usize,
    },
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(&LogLine::Step(step.clone())).unwrap());
            out.push('\n');
        }
        let footer = LogLine::Footer {
            scenario: self.scenario.clone(),
            seed: self.seed,
            n_steps: self.n_steps,
            agent: self.agent.clone(),
            opponent: self.opponent.clone(),
            attacks: self.attacks.clone(),
            cause: self.cause,
            total_reward: self.total_reward,
            steps_survived: self.steps_survived,
        };
        out.push_str(&serde_json::to_string(&footer).unwrap());
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<EpisodeLog, serde_json::Error> {
        let mut steps = Vec::new();
        let mut log = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line)? {
                LogLine::Step(s) => steps.push(s),
                LogLine::Footer {
                    scenario,
                    seed,
                    n_steps,
                    agent,
                    opponent,
                    attacks,
                    cause,
                    total_reward,
                    steps_survived,
                } => {
                    log = Some(EpisodeLog {
                        scenario,
                        seed,
                        n_steps,
                        agent,
                        opponent,
                        steps: Vec::new(),
                        attacks,
                        cause,
                        total_reward,
                        steps_survived,
                    });
                }
            }
        }
        let mut log = log.ok_or_else(|| {
            serde_json::Error::io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "missing footer record",
            ))
        })?;
        log.steps = steps;
        Ok(log)
    }
}

/// Run one full episode and collect its log.
pub fn run_episode(
    agent: &mut dyn crate::agents::Agent,
    opponent: &mut dyn crate::opponent::Opponent,
    grid: &Grid,
    chronics: &Chronics,
    seed: u64,
) -> Result<EpisodeLog, EnvError> {
    let mut env = Environment::new(grid, chronics, EnvParams::default());
    opponent.reseed(seed);

    let mut steps = Vec::new();
    let mut attacks = Vec::new();
    let mut total_reward = 0.0;

    let first = env.reset()?;
    let initial_blackout = first.done && first.cause == Some(TerminationCause::Blackout);
    if !initial_blackout {
        total_reward += first.reward;
    }
    steps.push(StepRecord {
        t: 0,
        reward: first.reward,
        rho: first.observation.rho.clone(),
        status: first.observation.line_status.clone(),
        agent_action: None,
        opponent_action: None,
        attack: first.observation.attack,
        trips: first.info.trips.clone(),
        notices: first.info.notices.clone(),
    });

    while !env.done() {
        let obs = env.observation();
        let opponent_action = opponent.act(&obs);
        let agent_action = agent.act(&obs, &env);
        let out = env.step(agent_action, opponent_action)?;
        if let Some(a) = out.info.attack_started {
            attacks.push(AttackEvent { line: a.line, start: out.observation.t, duration: a.remaining });
        }
        total_reward += out.reward;
        steps.push(StepRecord {
            t: out.observation.t,
            reward: out.reward,
            rho: out.observation.rho.clone(),
            status: out.observation.line_status.clone(),
            agent_action: Some(agent_action),
            opponent_action: Some(opponent_action),
            attack: out.observation.attack,
            trips: out.info.trips.clone(),
            notices: out.info.notices.clone(),
        });
    }

    Ok(EpisodeLog {
        scenario: chronics.label.clone(),
        seed,
        n_steps: chronics.n_steps,
        agent: agent.name().to_string(),
        opponent: opponent.name().to_string(),
        steps,
        attacks,
        cause: env.cause().expect("episode finished"),
        total_reward,
        steps_survived: env.steps_survived(),
    })
}
