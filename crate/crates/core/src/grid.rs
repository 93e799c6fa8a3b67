//! Static grid representation and the DC power-flow solver.
//!
//! The grid is a lossless DC surrogate: line flow is `b_l * (theta_from -
//! theta_to) * base_mva`, with the slack bus angle fixed at zero. Islands
//! that do not contain the slack bus are tolerated as long as every bus in
//! them has zero injection; a loaded islanded bus is a blackout condition
//! reported as [`SolveError::IslandedLoad`].

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// MW per per-unit susceptance-angle product.
pub const BASE_MVA: f64 = 100.0;

/// Injections below this magnitude count as zero when checking islands.
const ISLAND_INJECTION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid schema error: {0}")]
    Schema(String),
    #[error("grid inconsistency: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("islanded load: bus {bus} has nonzero injection in a component without the slack bus")]
    IslandedLoad { bus: String },
    #[error("singular susceptance system")]
    SingularSystem,
}

/// A transmission line between two buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    /// Index into `Grid::buses`.
    pub from: usize,
    /// Index into `Grid::buses`.
    pub to: usize,
    /// Per-unit susceptance, > 0.
    pub susceptance: f64,
    /// Thermal limit in MW, > 0.
    pub limit_mw: f64,
}

/// Immutable network description. Buses and lines are referenced by dense
/// index internally; ids are kept for files and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub buses: Vec<String>,
    pub slack: usize,
    pub lines: Vec<Line>,
    /// Sorted line indices the opponent may disconnect.
    pub attackable: Vec<usize>,
}

/// On-disk schema for a grid file.
#[derive(Debug, Serialize, Deserialize)]
struct GridFile {
    buses: Vec<String>,
    slack: String,
    lines: Vec<GridFileLine>,
    attackable: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridFileLine {
    id: String,
    from: String,
    to: String,
    susceptance: f64,
    limit_mw: f64,
}

impl Grid {
    pub fn from_json(text: &str) -> Result<Grid, GridError> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| GridError::Schema(e.to_string()))?;
        let mut bus_index = HashMap::new();
        for (i, b) in file.buses.iter().enumerate() {
            if bus_index.insert(b.clone(), i).is_some() {
                return Err(GridError::Inconsistent(format!("duplicate bus {b}")));
            }
        }
        let slack = *bus_index
            .get(&file.slack)
            .ok_or_else(|| GridError::Inconsistent(format!("unknown slack bus {}", file.slack)))?;
        let mut lines = Vec::with_capacity(file.lines.len());
        let mut line_index = HashMap::new();
        for l in &file.lines {
            let from = *bus_index
                .get(&l.from)
                .ok_or_else(|| GridError::Inconsistent(format!("unknown bus {}", l.from)))?;
            let to = *bus_index
                .get(&l.to)
                .ok_or_else(|| GridError::Inconsistent(format!("unknown bus {}", l.to)))?;
            if line_index.insert(l.id.clone(), lines.len()).is_some() {
                return Err(GridError::Inconsistent(format!("duplicate line {}", l.id)));
            }
            lines.push(Line {
                id: l.id.clone(),
                from,
                to,
                susceptance: l.susceptance,
                limit_mw: l.limit_mw,
            });
        }
        let mut attackable = BTreeSet::new();
        for id in &file.attackable {
            let idx = *line_index
                .get(id)
                .ok_or_else(|| GridError::Inconsistent(format!("unknown attackable line {id}")))?;
            attackable.insert(idx);
        }
        let grid = Grid {
            buses: file.buses,
            slack,
            lines,
            attackable: attackable.into_iter().collect(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        let file = GridFile {
            buses: self.buses.clone(),
            slack: self.buses[self.slack].clone(),
            lines: self
                .lines
                .iter()
                .map(|l| GridFileLine {
                    id: l.id.clone(),
                    from: self.buses[l.from].clone(),
                    to: self.buses[l.to].clone(),
                    susceptance: l.susceptance,
                    limit_mw: l.limit_mw,
                })
                .collect(),
            attackable: self.attackable.iter().map(|&i| self.lines[i].id.clone()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("grid serialization")
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.slack >= self.buses.len() {
            return Err(GridError::Inconsistent("slack bus out of range".into()));
        }
        for l in &self.lines {
            if l.from >= self.buses.len() || l.to >= self.buses.len() {
                return Err(GridError::Inconsistent(format!("line {} endpoint out of range", l.id)));
            }
            if l.from == l.to {
                return Err(GridError::Inconsistent(format!("line {} is a self-loop", l.id)));
            }
            if !(l.susceptance > 0.0) {
                return Err(GridError::Inconsistent(format!(
                    "line {} susceptance must be > 0",
                    l.id
                )));
            }
            if !(l.limit_mw > 0.0) {
                return Err(GridError::Inconsistent(format!(
                    "line {} thermal limit must be > 0",
                    l.id
                )));
            }
        }
        for &i in &self.attackable {
            if i >= self.lines.len() {
                return Err(GridError::Inconsistent("attackable line out of range".into()));
            }
        }
        if self.attackable.is_empty() {
            return Err(GridError::Inconsistent("attackable set must not be empty".into()));
        }
        // Full-topology connectivity.
        let all: BTreeSet<usize> = (0..self.lines.len()).collect();
        let comp = components(self, &all);
        if comp.iter().any(|&c| c != comp[self.slack]) {
            return Err(GridError::Inconsistent(
                "grid is not connected with all lines in service".into(),
            ));
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_index(&self, name: &str) -> Option<usize> {
        self.buses.iter().position(|b| b == name)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// Clone with extra lines merged into the attackable set.
    pub fn with_extra_attackable(&self, extra: &BTreeSet<usize>) -> Grid {
        let mut set: BTreeSet<usize> = self.attackable.iter().copied().collect();
        set.extend(extra.iter().copied());
        Grid { attackable: set.into_iter().collect(), ..self.clone() }
    }
}

/// Per-bus net injection in MW (generation positive, load negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionVector(pub Vec<f64>);

impl InjectionVector {
    /// Shift the slack bus so the vector sums to exactly zero.
    pub fn balanced(mut values: Vec<f64>, slack: usize) -> InjectionVector {
        let sum: f64 = values.iter().sum();
        values[slack] -= sum;
        InjectionVector(values)
    }
}

/// Result of a DC solve over a given connected-line set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Signed MW flow from `from` to `to`; 0 for disconnected lines.
    pub flow: Vec<f64>,
    /// Bus angles in radians, slack fixed at 0; 0 in islanded components.
    pub theta: Vec<f64>,
    /// |flow| / limit; 0 for disconnected lines.
    pub rho: Vec<f64>,
    /// Buses outside the slack component (all with zero injection).
    pub islanded_buses: Vec<usize>,
}

fn components(grid: &Grid, connected: &BTreeSet<usize>) -> Vec<usize> {
    let n = grid.n_buses();
    let mut comp = vec![usize::MAX; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &li in connected {
        let l = &grid.lines[li];
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(b) = stack.pop() {
            for &nb in &adj[b] {
                if comp[nb] == usize::MAX {
                    comp[nb] = next;
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Solve the DC power flow for the given connected-line set.
///
/// Buses in the slack component get angles from the reduced susceptance
/// system; the slack bus absorbs the component imbalance. Other components
/// must carry zero injection on every bus.
pub fn solve_dc(
    grid: &Grid,
    injections: &InjectionVector,
    connected: &BTreeSet<usize>,
) -> Result<FlowSolution, SolveError> {
    let n = grid.n_buses();
    assert_eq!(injections.0.len(), n, "injection vector length");
    let comp = components(grid, connected);
    let slack_comp = comp[grid.slack];

    let mut islanded_buses = Vec::new();
    for b in 0..n {
        if comp[b] != slack_comp {
            if injections.0[b].abs() > ISLAND_INJECTION_TOL {
                return Err(SolveError::IslandedLoad { bus: grid.buses[b].clone() });
            }
            islanded_buses.push(b);
        }
    }

    // Reduced system over non-slack buses of the slack component.
    let members: Vec<usize> =
        (0..n).filter(|&b| comp[b] == slack_comp && b != grid.slack).collect();
    let pos: HashMap<usize, usize> =
        members.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let m = members.len();
    let mut theta = vec![0.0; n];
    if m > 0 {
        let mut b_mat = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, &b) in members.iter().enumerate() {
            rhs[i] = injections.0[b];
        }
        for &li in connected {
            let l = &grid.lines[li];
            if comp[l.from] != slack_comp {
                continue;
            }
            let b = l.susceptance * BASE_MVA;
            match (pos.get(&l.from), pos.get(&l.to)) {
                (Some(&i), Some(&j)) => {
                    b_mat[(i, i)] += b;
                    b_mat[(j, j)] += b;
                    b_mat[(i, j)] -= b;
                    b_mat[(j, i)] -= b;
                }
                (Some(&i), None) => b_mat[(i, i)] += b,
                (None, Some(&j)) => b_mat[(j, j)] += b,
                (None, None) => {}
            }
        }
        let lu = b_mat.lu();
        let sol = lu.solve(&rhs).ok_or(SolveError::SingularSystem)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::SingularSystem);
        }
        for (i, &b) in members.iter().enumerate() {
            theta[b] = sol[i];
        }
    }

    let mut flow = vec![0.0; grid.n_lines()];
    let mut rho = vec![0.0; grid.n_lines()];
    for &li in connected {
        let l = &grid.lines[li];
        flow[li] = l.susceptance * BASE_MVA * (theta[l.from] - theta[l.to]);
        rho[li] = flow[li].abs() / l.limit_mw;
    }
    Ok(FlowSolution { flow, theta, rho, islanded_buses })
}

/// Lines whose relative loading strictly exceeds 1.
pub fn check_overflow(sol: &FlowSolution) -> BTreeSet<usize> {
    sol.rho
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 1.0)
        .map(|(i, _)| i)
        .collect()
}
