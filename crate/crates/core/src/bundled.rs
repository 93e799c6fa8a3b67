//! Bundled 14-bus, 20-line network and its base-case injections.
//!
//! Thermal limits in the data file are 1.3x the base-case flow magnitude
//! with a 10 MW floor, so the intact base case clears every limit with
//! margin. Ten lines are attackable.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::chronics::ProfileParams;
use crate::grid::{Grid, InjectionVector};

pub const GRID14_JSON: &str = include_str!("../data/grid14.json");
pub const BASE_CASE_JSON: &str = include_str!("../data/base_case.json");

#[derive(Debug, Deserialize)]
struct BaseCaseFile {
    loads: BTreeMap<String, f64>,
    gens: BTreeMap<String, f64>,
}

/// The bundled 14-bus grid.
pub fn grid14() -> Grid {
    Grid::from_json(GRID14_JSON).expect("bundled grid is valid")
}

/// Base-case per-bus loads and non-slack generation (MW), bus-indexed.
pub fn base_case(grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let file: BaseCaseFile =
        serde_json::from_str(BASE_CASE_JSON).expect("bundled base case is valid");
    let mut loads = vec![0.0; grid.n_buses()];
    let mut gens = vec![0.0; grid.n_buses()];
    for (bus, mw) in &file.loads {
        loads[grid.bus_index(bus).expect("base-case bus")] = *mw;
    }
    for (bus, mw) in &file.gens {
        gens[grid.bus_index(bus).expect("base-case bus")] = *mw;
    }
    (loads, gens)
}

/// Base-case net injections with the slack bus balancing the system.
pub fn base_injections(grid: &Grid) -> InjectionVector {
    let (loads, gens) = base_case(grid);
    let net: Vec<f64> = gens.iter().zip(&loads).map(|(g, l)| g - l).collect();
    InjectionVector::balanced(net, grid.slack)
}

/// Default synthetic-scenario profile for the bundled grid.
pub fn default_profile(grid: &Grid) -> ProfileParams {
    let (base_loads, base_gens) = base_case(grid);
    ProfileParams { base_loads, base_gens, ..ProfileParams::default() }
}

/// Strong-daily-cycle profile: moderate loading with a pronounced peak and
/// no noise or maintenance, so the load trace is a clean deterministic
/// cycle. Used by the opponent-stress checks.
pub fn strong_cycle_profile(grid: &Grid) -> ProfileParams {
    ProfileParams {
        scale: 0.65,
        amplitude: 0.25,
        noise: 0.0,
        trend: 0.0,
        maintenance_rate: 0.0,
        ..default_profile(grid)
    }
}
