//! Desk-scale adversarial robustness harness for power-grid control.
//!
//! The crate bundles a DC-power-flow grid environment, constrained
//! line-disconnection opponents (including a loading-weighted random
//! attacker), baseline controllers, and an N-1 evaluation engine built on
//! exhaustive single-outage simulation with exponentially decreasing
//! weights on the worst outages.

pub mod agents;
pub mod bundled;
pub mod chronics;
pub mod env;
pub mod eval;
pub mod grid;
pub mod harness;
pub mod opponent;

pub use agents::{Agent, AgentConfig};
pub use chronics::{Chronics, ProfileParams};
pub use env::{AgentAction, Environment, EpisodeLog, Observation, OpponentAction, StepOutcome};
pub use eval::{EvalRecord, WeightVector};
pub use grid::{check_overflow, solve_dc, FlowSolution, Grid, InjectionVector, Line};
pub use harness::{BatchReport, RunConfig, ScoreAnchors};
pub use opponent::{DoNothingOpponent, Opponent, OpponentConfig, WeightedRandomOpponent};
