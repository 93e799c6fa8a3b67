//! Baseline controllers: do_nothing, reco_powerline and a one-step greedy
//! line switcher. All are deterministic functions of their inputs and only
//! ever emit legal-or-no-op actions.

use serde::{Deserialize, Serialize};

use crate::env::{AgentAction, Environment, LineStatus, Observation};

pub trait Agent {
    fn name(&self) -> &str;
    fn act(&mut self, obs: &Observation, env: &Environment) -> AgentAction;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    DoNothing,
    RecoPowerline,
    GreedyLineSwitch {
        /// Cap on candidate actions evaluated per step (None = all).
        #[serde(default)]
        candidate_cap: Option<usize>,
    },
}

impl AgentConfig {
    pub fn build(&self) -> Box<dyn Agent + Send> {
        match self {
            AgentConfig::DoNothing => Box::new(DoNothingAgent),
            AgentConfig::RecoPowerline => Box::new(RecoPowerlineAgent),
            AgentConfig::GreedyLineSwitch { candidate_cap } => {
                Box::new(GreedyAgent { candidate_cap: *candidate_cap })
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AgentConfig::DoNothing => "do_nothing",
            AgentConfig::RecoPowerline => "reco_powerline",
            AgentConfig::GreedyLineSwitch { .. } => "greedy_line_switch",
        }
    }
}

pub struct DoNothingAgent;

impl Agent for DoNothingAgent {
    fn name(&self) -> &str {
        "do_nothing"
    }

    fn act(&mut self, _obs: &Observation, _env: &Environment) -> AgentAction {
        AgentAction::DoNothing
    }
}

/// Reconnects the lowest-id line that is disconnected and legal to
/// reconnect (out of cooldown, not under attack, not in maintenance).
pub struct RecoPowerlineAgent;

/// Observation-level reconnect legality shared by the baselines.
fn reconnectable(obs: &Observation, li: usize) -> bool {
    matches!(obs.line_status[li], LineStatus::Disconnected(_))
        && obs.cooldown[li] == 0
        && obs.attack.map_or(true, |a| a.line != li)
        && !obs.in_maintenance[li]
}

impl Agent for RecoPowerlineAgent {
    fn name(&self) -> &str {
        "reco_powerline"
    }

    fn act(&mut self, obs: &Observation, _env: &Environment) -> AgentAction {
        (0..obs.line_status.len())
            .find(|&li| reconnectable(obs, li))
            .map_or(AgentAction::DoNothing, AgentAction::Reconnect)
    }
}

/// Simulates every legal single-line switch one step ahead with frozen
/// injections and keeps the action minimizing the max loading. Ties break
/// toward do_nothing, then the lowest line id.
pub struct GreedyAgent {
    pub candidate_cap: Option<usize>,
}

impl Agent for GreedyAgent {
    fn name(&self) -> &str {
        "greedy_line_switch"
    }

    fn act(&mut self, obs: &Observation, env: &Environment) -> AgentAction {
        let n = obs.line_status.len();
        let mut candidates = vec![AgentAction::DoNothing];
        for li in 0..n {
            if reconnectable(obs, li) {
                candidates.push(AgentAction::Reconnect(li));
            }
        }
        for li in 0..n {
            if obs.line_status[li].is_connected() {
                candidates.push(AgentAction::Disconnect(li));
            }
        }
        if let Some(cap) = self.candidate_cap {
            candidates.truncate(cap.max(1));
        }

        let mut best = AgentAction::DoNothing;
        let mut best_rho = match env.simulate_action(AgentAction::DoNothing) {
            Some(r) => r,
            None => f64::INFINITY,
        };
        for &action in &candidates[1..] {
            if let Some(r) = env.simulate_action(action) {
                if r < best_rho {
                    best_rho = r;
                    best = action;
                }
            }
        }
        best
    }
}
