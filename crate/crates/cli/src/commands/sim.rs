//! Equilibrium solving, complementarity probes, and assumption checks
//! for the conspicuous-consumption model.

use std::path::Path;
use std::process::ExitCode;

use veblen::pipeline::SimParams;
use veblen::plot::{line_chart, Series};
use veblen::sim::{
    assumption_check, complementarity_probe, default_grids, AgentPopulation, EquilibriumOptions,
    EquilibriumState, ProfileShift,
};

use crate::context::{csv_table, parse_config_file, CliError, Ctx};

fn load_params(path: Option<&Path>) -> Result<SimParams, CliError> {
    match path {
        Some(path) => parse_config_file(path),
        None => Ok(SimParams::default()),
    }
}

fn solve(params: &SimParams) -> Result<(EquilibriumState, EquilibriumOptions), CliError> {
    let population = AgentPopulation::uniform_grid(params.z_min, params.z_max, params.points)?;
    let options = EquilibriumOptions {
        tol: params.tol,
        max_iters: params.max_iters,
        damping: params.damping,
        ..EquilibriumOptions::default()
    };
    let state = equilibrium(&population, &params.params, &options)?;
    Ok((state, options))
}

pub fn equilibrium_cmd_alias() {}

pub fn equilibrium(ctx: &Ctx, params_path: Option<&Path>) -> Result<ExitCode, CliError> {
    let params = load_params(params_path)?;
    let (state, _) = solve(&params)?;
    ctx.write_json("equilibrium.json", &state)?;
    let mut points = Vec::with_capacity(state.population.len());
    let mut rows = Vec::with_capacity(state.population.len());
    for (&z, &x) in state
        .population
        .incomes()
        .iter()
        .zip(state.population.profile())
    {
        rows.push(vec![format!("{z:.9}"), format!("{x:.9}")]);
        points.push((z, x));
    }
    let table = csv_table(&["income", "consumption"], rows)?;
    ctx.write_bytes("profile.csv", &table)?;
    let svg = line_chart(
        "Equilibrium visible consumption",
        "income z",
        "consumption x*(z)",
        &[Series {
            name: "x*(z)".to_string(),
            points,
        }],
    )?;
    ctx.write_bytes("profile.svg", svg.as_bytes())?;
    if state.converged {
        println!(
            "converged in {} sweeps; residual {:.3e}",
            state.iterations, state.residual,
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!(
            "DID NOT converge after {} sweeps; residual {:.3e}",
            state.iterations, state.residual,
        );
        Ok(ExitCode::FAILURE)
    }
}

pub fn probe(
    ctx: &Ctx,
    params_path: Option<&Path>,
    mass: Option<f64>,
    level: Option<f64>,
) -> Result<ExitCode, CliError> {
    let mut params = load_params(params_path)?;
    if let Some(mass) = mass {
        params.probe_mass = mass;
    }
    if let Some(level) = level {
        params.probe_level = level;
    }
    let (state, options) = solve(&params)?;
    if !state.converged {
        return Err(format!(
            "equilibrium did not converge (residual {:.3e}); the probe needs a fixed point",
            state.residual
        )
        .into());
    }
    let report = complementarity_probe(
        &state,
        &params.params,
        &ProfileShift {
            mass: params.probe_mass,
            level: params.probe_level,
        },
        options.br_tol,
    )?;
    ctx.write_json("probe.json", &report)?;
    println!(
        "mean best-response shift {:+.4e} after adding mass {} at level {}; network share {:.3} at low consumption vs {:.3} at high",
        report.mean_delta,
        params.probe_mass,
        params.probe_level,
        report.low_consumption.network_share,
        report.high_consumption.network_share,
    );
    Ok(ExitCode::SUCCESS)
}

pub fn check_assumptions(ctx: &Ctx, params_path: Option<&Path>) -> Result<ExitCode, CliError> {
    let params = load_params(params_path)?;
    let (z_grid, x_grid, s_grid) = default_grids();
    let report = assumption_check(&params.params, &z_grid, &x_grid, &s_grid);
    ctx.write_json("assumptions.json", &report)?;
    for check in &report.checks {
        if check.passed() {
            println!("{}: pass ({} points)", check.name, check.evaluated);
        } else {
            println!(
                "{}: {} violations out of {} points",
                check.name,
                check.violations.len(),
                check.evaluated,
            );
        }
    }
    if report.all_pass() {
        println!("every assumption holds on the default grids");
    } else {
        println!("some assumptions fail on the default grids; details in assumptions.json");
    }
    Ok(ExitCode::SUCCESS)
}
