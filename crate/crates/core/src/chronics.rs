//! Scenario time series: per-step injections and maintenance schedules.
//!
//! Chronics come either from a CSV file or from the seeded synthetic
//! generator, which drives per-bus loads through a daily cycle (peak around
//! 19:00, trough around 04:00) and schedules 4-hour maintenance windows on
//! attackable lines at an average rate of one per line per week.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{check_overflow, solve_dc, Grid, InjectionVector};

#[derive(Debug, Error)]
pub enum ChronicsError {
    #[error("chronics schema error: {0}")]
    Schema(String),
    #[error("chronics inconsistency: {0}")]
    Consistency(String),
    #[error("infeasible profile: base case overflows at every step")]
    InfeasibleProfile,
    #[error("step {0} out of range (n_steps = {1})")]
    OutOfRange(usize, usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters for the synthetic scenario generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileParams {
    /// Per-bus base load, MW (positive).
    pub base_loads: Vec<f64>,
    /// Per-bus base generation for non-slack units, MW.
    pub base_gens: Vec<f64>,
    /// Overall multiplier on the base loads (scenario loading level).
    pub scale: f64,
    /// Relative swing of the daily cycle around the base load.
    pub amplitude: f64,
    /// Std-dev of per-bus multiplicative load noise.
    pub noise: f64,
    /// Relative load growth across the scenario (0.1 = +10% by the end).
    pub trend: f64,
    pub step_minutes: u32,
    /// Average maintenance windows per attackable line per week.
    pub maintenance_rate: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            base_loads: Vec::new(),
            base_gens: Vec::new(),
            scale: 1.0,
            amplitude: 0.25,
            noise: 0.0,
            trend: 0.0,
            step_minutes: 5,
            maintenance_rate: 1.0,
        }
    }
}

/// Immutable per-scenario time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chronics {
    pub label: String,
    pub step_minutes: u32,
    pub n_steps: usize,
    /// Per step, per bus load in MW (stored positive).
    pub loads: Vec<Vec<f64>>,
    /// Per step, per bus generation in MW (slack holds the residual).
    pub gens: Vec<Vec<f64>>,
    /// Per step, sorted line indices forced disconnected.
    pub maintenance: Vec<Vec<usize>>,
}

impl Chronics {
    /// Net injections at step `t`, slack-balanced to sum exactly zero.
    pub fn injections(&self, slack: usize, t: usize) -> InjectionVector {
        let net: Vec<f64> =
            self.gens[t].iter().zip(&self.loads[t]).map(|(g, l)| g - l).collect();
        InjectionVector::balanced(net, slack)
    }

    /// Sum of load-side injections at step `t`, MW.
    pub fn total_load(&self, t: usize) -> Result<f64, ChronicsError> {
        if t >= self.n_steps {
            return Err(ChronicsError::OutOfRange(t, self.n_steps));
        }
        Ok(self.loads[t].iter().sum())
    }

    /// Every line that appears in any maintenance window.
    pub fn maintenance_lines(&self) -> BTreeSet<usize> {
        self.maintenance.iter().flatten().copied().collect()
    }

    pub fn to_csv_string(&self, grid: &Grid) -> String {
        let mut out = String::from("step");
        for b in &grid.buses {
            out.push_str(&format!(",load_{b}"));
        }
        for b in &grid.buses {
            out.push_str(&format!(",gen_{b}"));
        }
        out.push_str(",maint\n");
        for t in 0..self.n_steps {
            out.push_str(&t.to_string());
            for v in &self.loads[t] {
                out.push_str(&format!(",{v}"));
            }
            for v in &self.gens[t] {
                out.push_str(&format!(",{v}"));
            }
            let maint: Vec<&str> =
                self.maintenance[t].iter().map(|&li| grid.lines[li].id.as_str()).collect();
            out.push(',');
            out.push_str(&maint.join(";"));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, grid: &Grid, path: &Path) -> Result<(), ChronicsError> {
        std::fs::write(path, self.to_csv_string(grid))?;
        Ok(())
    }
}

/// Load and validate a chronics CSV against a grid.
pub fn load_chronics(path: &Path, grid: &Grid) -> Result<Chronics, ChronicsError> {
    let text = std::fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "chronics".into());
    parse_chronics(&text, grid, &label)
}

pub fn parse_chronics(text: &str, grid: &Grid, label: &str) -> Result<Chronics, ChronicsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ChronicsError::Schema(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"step") || cols.last() != Some(&"maint") {
        return Err(ChronicsError::Schema(
            "header must start with `step` and end with `maint`".into(),
        ));
    }
    // Map each load_/gen_ column to a bus index.
    enum Col {
        Load(usize),
        Gen(usize),
    }
    let mut mapping = Vec::new();
    for name in &cols[1..cols.len() - 1] {
        if let Some(bus) = name.strip_prefix("load_") {
            let idx = grid
                .bus_index(bus)
                .ok_or_else(|| ChronicsError::Consistency(format!("unknown bus {bus}")))?;
            mapping.push(Col::Load(idx));
        } else if let Some(bus) = name.strip_prefix("gen_") {
            let idx = grid
                .bus_index(bus)
                .ok_or_else(|| ChronicsError::Consistency(format!("unknown bus {bus}")))?;
            mapping.push(Col::Gen(idx));
        } else {
            return Err(ChronicsError::Schema(format!("unrecognized column {name}")));
        }
    }

    let mut loads = Vec::new();
    let mut gens = Vec::new();
    let mut maintenance = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ChronicsError::Schema(e.to_string()))?;
        let step: usize = record[0]
            .parse()
            .map_err(|_| ChronicsError::Schema(format!("bad step value `{}`", &record[0])))?;
        if step != row_no {
            return Err(ChronicsError::Consistency(format!(
                "non-uniform timestamps: expected step {row_no}, got {step}"
            )));
        }
        let mut load_row = vec![0.0; grid.n_buses()];
        let mut gen_row = vec![0.0; grid.n_buses()];
        for (field, col) in record.iter().skip(1).take(mapping.len()).zip(&mapping) {
            let value: f64 = field
                .parse()
                .map_err(|_| ChronicsError::Schema(format!("bad number `{field}`")))?;
            match col {
                Col::Load(b) => {
                    if value < 0.0 {
                        return Err(ChronicsError::Schema(format!(
                            "negative load {value} at step {step}"
                        )));
                    }
                    load_row[*b] = value;
                }
                Col::Gen(b) => gen_row[*b] = value,
            }
        }
        let maint_field = &record[record.len() - 1];
        let mut maint_row = Vec::new();
        if !maint_field.is_empty() {
            for id in maint_field.split(';') {
                let li = grid
                    .line_index(id)
                    .ok_or_else(|| ChronicsError::Consistency(format!("unknown line {id}")))?;
                maint_row.push(li);
            }
            maint_row.sort_unstable();
            maint_row.dedup();
        }
        loads.push(load_row);
        gens.push(gen_row);
        maintenance.push(maint_row);
    }
    if loads.is_empty() {
        return Err(ChronicsError::Consistency("chronics must have at least one step".into()));
    }
    Ok(Chronics {
        label: label.to_string(),
        step_minutes: 5,
        n_steps: loads.len(),
        loads,
        gens,
        maintenance,
    })
}

/// Daily load shape: peak near 19:00, trough near 04:00, zero mean-ish.
fn daily_shape(hour_of_day: f64) -> f64 {
    use std::f64::consts::PI;
    0.7 * (2.0 * PI * (hour_of_day - 13.0) / 24.0).sin()
        + 0.3 * (4.0 * PI * (hour_of_day - 19.0) / 24.0).cos()
}

/// Standard normal via Box-Muller, driven by the scenario RNG.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    use std::f64::consts::PI;
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    let limit = (-lambda).exp();
    let mut product: f64 = rng.gen();
    let mut count = 0;
    while product > limit && count < 20 {
        product *= rng.gen::<f64>();
        count += 1;
    }
    count
}

/// Generate a seeded synthetic scenario for `grid`.
///
/// Deterministic for a fixed (seed, params). Loads follow the daily shape
/// scaled by `amplitude` plus per-bus Gaussian noise; non-slack generation
/// tracks total load proportionally and the slack absorbs the residual.
pub fn generate_chronics(
    grid: &Grid,
    seed: u64,
    days: u32,
    params: &ProfileParams,
) -> Result<Chronics, ChronicsError> {
    if days == 0 {
        return Err(ChronicsError::Consistency("days must be >= 1".into()));
    }
    if params.base_loads.len() != grid.n_buses() || params.base_gens.len() != grid.n_buses() {
        return Err(ChronicsError::Consistency(
            "profile base vectors must match the grid bus count".into(),
        ));
    }
    let steps_per_day = (24 * 60 / params.step_minutes) as usize;
    let n_steps = steps_per_day * days as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base_total: f64 = params.base_loads.iter().sum();
    let mut loads = Vec::with_capacity(n_steps);
    let mut gens = Vec::with_capacity(n_steps);
    for t in 0..n_steps {
        let hour = (t % steps_per_day) as f64 * params.step_minutes as f64 / 60.0;
        let growth = if n_steps > 1 {
            1.0 + params.trend * t as f64 / (n_steps - 1) as f64
        } else {
            1.0
        };
        let factor = params.scale * (1.0 + params.amplitude * daily_shape(hour)) * growth;
        let mut load_row = Vec::with_capacity(grid.n_buses());
        for &base in &params.base_loads {
            let eps = if params.noise > 0.0 { params.noise * normal(&mut rng) } else { 0.0 };
            load_row.push((base * (factor + eps)).max(0.0));
        }
        let total: f64 = load_row.iter().sum();
        let scale = if base_total > 0.0 { total / base_total } else { 0.0 };
        let mut gen_row: Vec<f64> = params.base_gens.iter().map(|&g| g * scale).collect();
        let nonslack: f64 = gen_row
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != grid.slack)
            .map(|(_, g)| g)
            .sum();
        gen_row[grid.slack] = total - nonslack;
        loads.push(load_row);
        gens.push(gen_row);
    }

    // Maintenance: per attackable line, per week, Poisson(rate) windows of
    // 4 hours, placed uniformly without overlap on the same line.
    let window = (4 * 60 / params.step_minutes) as usize;
    let steps_per_week = steps_per_day * 7;
    let n_weeks = n_steps.div_ceil(steps_per_week);
    let mut maintenance = vec![Vec::new(); n_steps];
    for &li in &grid.attackable {
        let mut placed: Vec<(usize, usize)> = Vec::new();
        for week in 0..n_weeks {
            let week_start = week * steps_per_week;
            let week_end = (week_start + steps_per_week).min(n_steps);
            if week_end - week_start < window {
                continue;
            }
            let count = poisson(&mut rng, params.maintenance_rate);
            for _ in 0..count {
                for _attempt in 0..200 {
                    let start = rng.gen_range(week_start..=week_end - window);
                    let end = start + window;
                    if placed.iter().all(|&(s, e)| end <= s || start >= e) {
                        placed.push((start, end));
                        break;
                    }
                }
            }
        }
        for (s, e) in placed {
            for slot in maintenance.iter_mut().take(e).skip(s) {
                slot.push(li);
            }
        }
    }
    for row in &mut maintenance {
        row.sort_unstable();
    }

    let chronics = Chronics {
        label: format!("gen-{seed}"),
        step_minutes: params.step_minutes,
        n_steps,
        loads,
        gens,
        maintenance,
    };

    // The profile is usable only if at least one step is overflow-free in
    // the intact topology.
    let connected: BTreeSet<usize> = (0..grid.n_lines()).collect();
    let mut any_clean = false;
    for t in 0..n_steps {
        let inj = chronics.injections(grid.slack, t);
        match solve_dc(grid, &inj, &connected) {
            Ok(sol) if check_overflow(&sol).is_empty() => {
                any_clean = true;
                break;
            }
            _ => {}
        }
    }
    if !any_clean {
        return Err(ChronicsError::InfeasibleProfile);
    }
    Ok(chronics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn generated_week_has_2016_steps() {
        let grid = bundled::grid14();
        let params = bundled::default_profile(&grid);
        let c = generate_chronics(&grid, 1, 7, &params).unwrap();
        assert_eq!(c.n_steps, 2016);
    }

    #[test]
    fn generation_is_deterministic() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        params.noise = 0.02;
        let a = generate_chronics(&grid, 7, 2, &params).unwrap();
        let b = generate_chronics(&grid, 7, 2, &params).unwrap();
        assert_eq!(a.to_csv_string(&grid), b.to_csv_string(&grid));
    }

    #[test]
    fn zero_amplitude_is_constant_base_case() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        params.amplitude = 0.0;
        params.maintenance_rate = 0.0;
        let c = generate_chronics(&grid, 3, 1, &params).unwrap();
        for t in 0..c.n_steps {
            assert_eq!(c.loads[t], params.base_loads);
        }
    }

    #[test]
    fn generation_balances_load_each_step() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        params.noise = 0.03;
        let c = generate_chronics(&grid, 11, 1, &params).unwrap();
        for t in 0..c.n_steps {
            let gen: f64 = c.gens[t].iter().sum();
            let load: f64 = c.loads[t].iter().sum();
            assert!((gen - load).abs() < 1e-9, "step {t}: {gen} vs {load}");
        }
    }

    #[test]
    fn peak_load_exceeds_trough() {
        let grid = bundled::grid14();
        let params = bundled::default_profile(&grid);
        let c = generate_chronics(&grid, 5, 7, &params).unwrap();
        let series: Vec<f64> = (0..c.n_steps).map(|t| c.total_load(t).unwrap()).collect();
        let peak = series.iter().cloned().fold(f64::MIN, f64::max);
        let trough = series.iter().cloned().fold(f64::MAX, f64::min);
        assert!(peak > trough);
    }

    #[test]
    fn maintenance_windows_never_overlap_per_line() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        params.maintenance_rate = 3.0;
        let c = generate_chronics(&grid, 2, 14, &params).unwrap();
        for t in 0..c.n_steps {
            let mut sorted = c.maintenance[t].clone();
            sorted.dedup();
            assert_eq!(sorted.len(), c.maintenance[t].len());
        }
    }

    #[test]
    fn infeasible_profile_rejected() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        for l in &mut params.base_loads {
            *l *= 10.0;
        }
        assert!(matches!(
            generate_chronics(&grid, 1, 1, &params),
            Err(ChronicsError::InfeasibleProfile)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let grid = bundled::grid14();
        let mut params = bundled::default_profile(&grid);
        params.noise = 0.01;
        let c = generate_chronics(&grid, 9, 1, &params).unwrap();
        let text = c.to_csv_string(&grid);
        let back = parse_chronics(&text, &grid, &c.label).unwrap();
        assert_eq!(c.loads, back.loads);
        assert_eq!(c.gens, back.gens);
        assert_eq!(c.maintenance, back.maintenance);
    }

    #[test]
    fn unknown_bus_rejected() {
        let grid = bundled::grid14();
        let text = "step,load_B99,maint\n0,10.0,\n";
        assert!(matches!(
            parse_chronics(text, &grid, "bad"),
            Err(ChronicsError::Consistency(_))
        ));
    }

    #[test]
    fn non_uniform_steps_rejected() {
        let grid = bundled::grid14();
        let text = "step,load_B2,maint\n0,10.0,\n2,10.0,\n";
        assert!(matches!(
            parse_chronics(text, &grid, "bad"),
            Err(ChronicsError::Consistency(_))
        ));
    }

    #[test]
    fn maintenance_window_parses_exactly() {
        let grid = bundled::grid14();
        let li = grid.line_index("L8").unwrap();
        let mut text = String::from("step,load_B2,maint\n");
        for t in 0..200 {
            let maint = if (100..148).contains(&t) { "L8" } else { "" };
            text.push_str(&format!("{t},5.0,{maint}\n"));
        }
        let c = parse_chronics(&text, &grid, "m").unwrap();
        for t in 0..200 {
            let expect = (100..148).contains(&t);
            assert_eq!(c.maintenance[t].contains(&li), expect, "step {t}");
        }
    }

    #[test]
    fn total_load_out_of_range() {
        let grid = bundled::grid14();
        let c = parse_chronics("step,load_B2,maint\n0,5.0,\n", &grid, "x").unwrap();
        assert!((c.total_load(0).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(c.total_load(1), Err(ChronicsError::OutOfRange(1, 1))));
    }
}
