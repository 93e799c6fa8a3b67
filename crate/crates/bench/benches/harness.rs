use criterion::{black_box, criterion_group, criterion_main, Criterion};

use advgrid_core::agents::DoNothingAgent;
use advgrid_core::bundled;
use advgrid_core::chronics::generate_chronics;
use advgrid_core::env::{run_episode, AgentAction, EnvParams, Environment, OpponentAction};
use advgrid_core::eval::{calibrate_lambda, evaluate_log, stability_scores, WeightVector};
use advgrid_core::grid::solve_dc;
use advgrid_core::opponent::DoNothingOpponent;

fn bench_solve_dc(c: &mut Criterion) {
    let grid = bundled::grid14();
    let injections = bundled::base_injections(&grid);
    let connected = (0..grid.n_lines()).collect();
    c.bench_function("solve_dc_14bus", |b| {
        b.iter(|| solve_dc(black_box(&grid), black_box(&injections), &connected).unwrap())
    });
}

fn bench_stability_scores(c: &mut Criterion) {
    let grid = bundled::grid14();
    let injections = bundled::base_injections(&grid);
    let connected = (0..grid.n_lines()).collect();
    c.bench_function("stability_scores_14bus", |b| {
        b.iter(|| stability_scores(black_box(&grid), &connected, &injections).unwrap())
    });
}

fn bench_calibrate_lambda(c: &mut Criterion) {
    c.bench_function("calibrate_lambda_n10", |b| {
        b.iter(|| calibrate_lambda(black_box(10), 0.95, 0.2).unwrap())
    });
}

fn bench_env_step(c: &mut Criterion) {
    let grid = bundled::grid14();
    let mut params = bundled::default_profile(&grid);
    params.maintenance_rate = 0.0;
    let chronics = generate_chronics(&grid, 42, 7, &params).unwrap();
    c.bench_function("env_step", |b| {
        let mut env = Environment::new(&grid, &chronics, EnvParams::default());
        env.reset().unwrap();
        b.iter(|| {
            if env.done() {
                env.reset().unwrap();
            }
            env.step(AgentAction::DoNothing, OpponentAction::DoNothing).unwrap()
        })
    });
}

fn bench_week_episode_with_eval(c: &mut Criterion) {
    let grid = bundled::grid14();
    let mut params = bundled::default_profile(&grid);
    params.maintenance_rate = 0.0;
    let chronics = generate_chronics(&grid, 42, 7, &params).unwrap();
    let lambda = calibrate_lambda(grid.attackable.len(), 0.95, 0.2).unwrap();
    let weights = WeightVector::new(lambda, grid.attackable.len());
    c.bench_function("week_episode_eval_stride48", |b| {
        b.iter(|| {
            let log = run_episode(
                &mut DoNothingAgent,
                &mut DoNothingOpponent::default(),
                &grid,
                &chronics,
                0,
            )
            .unwrap();
            evaluate_log(&grid, &chronics, &log, &weights, 48).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_solve_dc,
    bench_stability_scores,
    bench_calibrate_lambda,
    bench_env_step,
    bench_week_episode_with_eval
);
criterion_main!(benches);
