//! The three experiment runners behind the subcommands.

use std::collections::BTreeMap;

use becgrape::gp::{propagate_gp_rk4, DvrTransform};
use becgrape::grape::{beta_scan, optimize};
use becgrape::states::{fidelity, population_distribution};
use becgrape::{ComplexVector, ControlGrid, GPParams, Lattice1DParams, Problem, TerminationReason};
use serde::Serialize;

use crate::config::{ProblemConfig, PulseSource, RunConfig};
use crate::error::CliError;
use crate::output::{read_pulse, Basis, OutputDir};

/// How a finished run should be reported to the shell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    BelowGoal,
}

fn basis(cfg: &RunConfig) -> Basis {
    match cfg.problem {
        ProblemConfig::Lattice2d { s, m_max, n_max, .. } => {
            Basis::Pairs(becgrape::Lattice2DParams { s, m_max, n_max }.index_map().pairs().collect())
        }
        _ => Basis::Orders(cfg.lattice1d().expect("1D family").orders().collect()),
    }
}

/// Step indices written to time series: every `every`-th plus the last.
fn sample_indices(n_steps: usize, every: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..=n_steps).step_by(every).collect();
    if idx.last() != Some(&n_steps) {
        idx.push(n_steps);
    }
    idx
}

fn overlap(a: &ComplexVector, b: &ComplexVector) -> f64 {
    fidelity(a, b).expect("states of one run share a dimension")
}

fn norm(v: &ComplexVector) -> f64 {
    becgrape::numkernel::norm(v)
}

#[derive(Serialize)]
struct PropagateSummary {
    family: &'static str,
    t_f: f64,
    n_steps: usize,
    final_norm: f64,
    final_projections: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    max_rk4_gap: BTreeMap<String, f64>,
}

pub fn run_propagate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let prep = cfg.prepare()?;
    let control = &prep.control;
    let states = prep.problem.forward(&prep.psi0, control)?.states;

    let mut projections: Vec<(String, ComplexVector)> = Vec::new();
    for p in &cfg.propagate.projections {
        projections.push((p.label.clone(), cfg.realize(&p.state, "projection")?));
    }
    if let Some(t) = &prep.target {
        if !projections.iter().any(|(l, _)| l == "target") {
            projections.push(("target".into(), t.clone()));
        }
    }

    let n = control.n_steps();
    let samples = sample_indices(n, cfg.propagate.sample_every);

    let rk4 = match (&prep.problem, cfg.propagate.compare_rk4) {
        (Problem::Gp { params, .. }, true) => {
            let sub = cfg.propagate.rk4_substeps;
            let traj = propagate_gp_rk4(params, &prep.psi0, control, n * sub)?;
            Some(samples.iter().map(|&k| traj.states[k * sub].clone()).collect::<Vec<_>>())
        }
        _ => None,
    };
    let mut extra: Vec<(f64, Vec<ComplexVector>)> = Vec::new();
    if let Problem::Gp { params, freezing, adjoint } = &prep.problem {
        for &beta in &cfg.propagate.extra_betas {
            let p = GPParams::new(params.lattice, beta).map_err(|e| CliError::Config(format!("extra_betas: {e}")))?;
            let alt = Problem::Gp { params: p, freezing: *freezing, adjoint: *adjoint };
            extra.push((beta, alt.forward(&prep.psi0, control)?.states));
        }
    }

    let mut header = vec!["t".to_string(), "norm".to_string()];
    for (label, _) in &projections {
        header.push(format!("proj_{label}"));
        if rk4.is_some() {
            header.push(format!("proj_{label}_rk4"));
        }
        for (beta, _) in &extra {
            header.push(format!("proj_{label}_beta{beta}"));
        }
    }
    let mut gaps: BTreeMap<String, f64> = BTreeMap::new();
    let mut rows = Vec::with_capacity(samples.len());
    for (i, &k) in samples.iter().enumerate() {
        let mut row = vec![control.t_start(k), norm(&states[k])];
        for (label, phi) in &projections {
            let f = overlap(phi, &states[k]);
            row.push(f);
            if let Some(r) = &rk4 {
                let g = overlap(phi, &r[i]);
                row.push(g);
                let gap = gaps.entry(label.clone()).or_insert(0.0);
                *gap = gap.max((f - g).abs());
            }
            for (_, alt) in &extra {
                row.push(overlap(phi, &alt[k]));
            }
        }
        rows.push(row);
    }
    out.write_table("observables.csv", &header, &rows)?;

    let basis = basis(cfg);
    let mut pop_header = vec!["t".to_string()];
    pop_header.extend(basis.column_names());
    let pop_rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&k| {
            let mut row = vec![control.t_start(k)];
            row.extend(population_distribution(&states[k]));
            row
        })
        .collect();
    out.write_table("populations.csv", &pop_header, &pop_rows)?;

    if let (Some(lattice), true) = (cfg.lattice1d(), cfg.propagate.write_density) {
        write_density(out, &lattice, control, &states, &samples)?;
    }

    let final_projections = projections.iter().map(|(l, phi)| (l.clone(), overlap(phi, &states[n]))).collect();
    out.write_json(
        "summary.json",
        &PropagateSummary {
            family: cfg.family_name(),
            t_f: control.t_f(),
            n_steps: n,
            final_norm: norm(&states[n]),
            final_projections,
            max_rk4_gap: gaps,
        },
    )?;
    Ok(Outcome::Success)
}

/// Position density `|psi(x_j)|^2` on the grid, normalized to integrate to one.
fn write_density(
    out: &mut OutputDir,
    lattice: &Lattice1DParams,
    control: &ControlGrid,
    states: &[ComplexVector],
    samples: &[usize],
) -> Result<(), CliError> {
    let dvr = DvrTransform::new(lattice);
    let mut header = vec!["t".to_string()];
    header.extend(dvr.grid_points().iter().map(|x| format!("x={x:.10}")));
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&k| {
            let mut row = vec![control.t_start(k)];
            row.extend(dvr.density(&states[k]).iter().copied());
            row
        })
        .collect();
    out.write_table("density.csv", &header, &rows)
}

#[derive(Serialize)]
struct OptimizeSummary {
    family: &'static str,
    fidelity: f64,
    fidelity_goal: f64,
    goal_reached: bool,
    iterations: usize,
    termination: TerminationReason,
    restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_edge_population: Option<f64>,
    seed: Option<u64>,
    t_f: f64,
    n_steps: usize,
    wall_seconds: f64,
}

pub fn run_optimize(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let prep = cfg.prepare()?;
    let target = prep.target.as_ref().ok_or_else(|| CliError::Config("optimize needs a target".into()))?;
    if !prep.control.any_optimized() {
        return Err(CliError::Config("control.optimize flags every channel off".into()));
    }
    let start = std::time::Instant::now();
    let result = optimize(&prep.problem, &prep.psi0, target, &prep.control, &cfg.optimizer)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    log::info!("F = {:.6} after {} iterations ({:?})", result.fidelity, result.iterations, result.termination);

    out.write_pulse("pulse.csv", &result.control)?;
    out.write_trace("trace.csv", &result)?;
    out.write_populations("populations.csv", &basis(cfg), &population_distribution(&result.final_state))?;
    let goal_reached = result.fidelity >= cfg.optimizer.fidelity_goal;
    out.write_json(
        "summary.json",
        &OptimizeSummary {
            family: cfg.family_name(),
            fidelity: result.fidelity,
            fidelity_goal: cfg.optimizer.fidelity_goal,
            goal_reached,
            iterations: result.iterations,
            termination: result.termination,
            restarts: result.restarts,
            max_edge_population: result.max_edge_population,
            seed: cfg.seed(),
            t_f: prep.control.t_f(),
            n_steps: prep.control.n_steps(),
            wall_seconds,
        },
    )?;
    Ok(if goal_reached { Outcome::Success } else { Outcome::BelowGoal })
}

#[derive(Serialize)]
struct BetaScanSummary {
    pulse_source: PulseSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimized_fidelity: Option<f64>,
    fidelities: Vec<(f64, f64)>,
}

pub fn run_beta_scan(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scan = cfg
        .beta_scan
        .as_ref()
        .ok_or_else(|| CliError::Config("beta-scan needs a beta_scan section with a pulse source".into()))?;
    let (lattice, freezing, adjoint) = match cfg.problem {
        ProblemConfig::Gp1d { s, q, n_max, freezing, adjoint, .. } => {
            (Lattice1DParams { s, q, n_max }, freezing, adjoint)
        }
        ProblemConfig::Linear1d { s, q, n_max } => {
            (Lattice1DParams { s, q, n_max }, Default::default(), Default::default())
        }
        ProblemConfig::Lattice2d { .. } => {
            return Err(CliError::Config("beta-scan applies to the 1D families only".into()))
        }
    };
    let betas = scan.betas.values();
    if betas.is_empty() {
        return Err(CliError::Config("beta_scan.betas is empty".into()));
    }
    let prep = cfg.prepare()?;
    let target = prep.target.as_ref().ok_or_else(|| CliError::Config("beta-scan needs a target".into()))?;

    let mut optimized_fidelity = None;
    let mut outcome = Outcome::Success;
    let control = match &scan.pulse {
        PulseSource::Control => prep.control.clone(),
        PulseSource::PulseFile { path } => {
            let values = read_pulse(path)?;
            if values.len() != 1 {
                return Err(CliError::Config(format!("{} is not a single-channel pulse", path.display())));
            }
            ControlGrid::new(prep.control.t_f(), values, vec![true])
                .map_err(|e| CliError::Config(format!("beta_scan.pulse: {e}")))?
        }
        PulseSource::Optimize { beta } => {
            let params =
                GPParams::new(lattice, *beta).map_err(|e| CliError::Config(format!("beta_scan.pulse: {e}")))?;
            let problem = Problem::Gp { params, freezing, adjoint };
            let result = optimize(&problem, &prep.psi0, target, &prep.control, &cfg.optimizer)?;
            out.write_pulse("pulse.csv", &result.control)?;
            out.write_trace("trace.csv", &result)?;
            if result.fidelity < cfg.optimizer.fidelity_goal {
                outcome = Outcome::BelowGoal;
            }
            optimized_fidelity = Some(result.fidelity);
            result.control
        }
    };
    let table = beta_scan(&lattice, &betas, &prep.psi0, target, &control, freezing)?;
    let rows: Vec<Vec<f64>> = table.iter().map(|(b, f)| vec![*b, *f]).collect();
    out.write_table("beta_scan.csv", &["beta".into(), "fidelity".into()], &rows)?;
    out.write_json(
        "summary.json",
        &BetaScanSummary { pulse_source: scan.pulse.clone(), optimized_fidelity, fidelities: table },
    )?;
    Ok(outcome)
}
