use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Forward, Problem};
use crate::control::{ControlGrid, InitStrategy};
use crate::error::{Error, Result};
use crate::gp::{DensityFreezing, GPParams, GpPropagator};
use crate::lattice1d::Lattice1DParams;
use crate::numkernel::{inner, ComplexVector};

/// Step control for the ascent `phi <- phi + epsilon g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub enabled: bool,
    /// Factor applied to `epsilon` after a rejected trial step.
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Factor applied to `epsilon` after an accepted step. `1.0` keeps the
    /// step fixed once found.
    pub growth: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { enabled: true, backtrack: 0.5, max_halvings: 40, growth: 1.25 }
    }
}

/// How the ascent direction is built from successive gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    /// The gradient itself.
    #[default]
    Steepest,
    /// Polak-Ribiere conjugate directions, reset to the gradient whenever
    /// the combination stops being an ascent direction.
    ConjugateGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub fidelity_goal: f64,
    pub chi0: f64,
    pub line_search: LineSearch,
    pub direction: SearchDirection,
    pub init: InitStrategy,
    /// Gradient norm under which the run counts as stalled.
    pub stall_tolerance: f64,
    /// Noise added when the run starts on an exactly orthogonal state.
    pub restart_amplitude: f64,
    pub max_restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            max_iterations: 2000,
            fidelity_goal: 0.999,
            chi0: 0.5,
            line_search: LineSearch::default(),
            direction: SearchDirection::default(),
            init: InitStrategy::default(),
            stall_tolerance: 1e-10,
            restart_amplitude: 0.05,
            max_restarts: 5,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.fidelity_goal > 0.0 && self.fidelity_goal <= 1.0) {
            return bad(format!("fidelity_goal must lie in (0, 1], got {}", self.fidelity_goal));
        }
        if !(self.chi0.is_finite() && self.chi0 > 0.0) {
            return bad(format!("chi0 must be positive, got {}", self.chi0));
        }
        let ls = &self.line_search;
        if ls.enabled && !(ls.backtrack > 0.0 && ls.backtrack < 1.0) {
            return bad(format!("line-search backtrack must lie in (0, 1), got {}", ls.backtrack));
        }
        if ls.enabled && !(ls.growth >= 1.0 && ls.growth.is_finite()) {
            return bad(format!("line-search growth must be at least 1, got {}", ls.growth));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GoalReached,
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub control: ControlGrid,
    /// Fidelity after every accepted iteration; entry 0 is the start.
    pub fidelity_trace: Vec<f64>,
    /// Gradient norm over the optimized channels at every trace entry.
    pub grad_norm_trace: Vec<f64>,
    pub final_state: ComplexVector,
    pub fidelity: f64,
    pub iterations: usize,
    pub termination: TerminationReason,
    /// Random restarts taken to leave an orthogonal start.
    pub restarts: usize,
    /// Largest edge population of the final 2D trajectory.
    pub max_edge_population: Option<f64>,
}

/// Gradient ascent from `control0` after applying the initialization
/// strategy to its optimizable channels.
pub fn optimize(
    problem: &Problem,
    psi0: &ComplexVector,
    target: &ComplexVector,
    control0: &ControlGrid,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    problem.check(psi0, target, control0)?;
    if !control0.any_optimized() {
        return Err(Error::InvalidParameter("no control channel is flagged for optimization".into()));
    }
    let mask = control0.optimize_flags().to_vec();
    let mut control = control0.clone();
    control.initialize(&settings.init);
    let restart_seed = match settings.init {
        InitStrategy::UniformRandom { seed, .. } => seed.wrapping_add(1),
        _ => 1,
    };
    let mut restart_rng = ChaCha8Rng::seed_from_u64(restart_seed);

    let mut fwd: Forward = problem.forward(psi0, &control)?;
    let mut fidelity = fwd.fidelity(target);
    let mut epsilon = settings.epsilon;
    let mut fidelity_trace = vec![fidelity];
    let mut grad_norm_trace = Vec::new();
    let mut restarts = 0;
    let mut iterations = 0;
    // Gradient and direction of the last accepted step.
    let mut previous: Option<(Controls, Controls)> = None;

    let termination = loop {
        if fidelity >= settings.fidelity_goal {
            grad_norm_trace.push(0.0);
            break TerminationReason::GoalReached;
        }
        let grad = problem.gradient_from(&fwd, &control, target, settings.chi0)?;
        let gnorm = grad.norm(&mask);
        grad_norm_trace.push(gnorm);
        if iterations >= settings.max_iterations {
            break TerminationReason::MaxIterations;
        }
        if gnorm < settings.stall_tolerance {
            if fidelity < 1e-12 && restarts < settings.max_restarts {
                restarts += 1;
                log::info!("zero overlap with the target; restart {restarts} with fresh noise");
                control.perturb(settings.restart_amplitude, &mut restart_rng);
                fwd = problem.forward(psi0, &control)?;
                fidelity = fwd.fidelity(target);
                grad_norm_trace.pop();
                previous = None;
                continue;
            }
            break TerminationReason::Stalled;
        }

        let g = masked(&grad.pmp, &mask);
        let direction = match (settings.direction, previous.take()) {
            (SearchDirection::ConjugateGradient, Some((g_prev, d_prev))) => conjugate_direction(&g, &g_prev, &d_prev),
            _ => g.clone(),
        };
        let mut accepted = None;
        let trials = if settings.line_search.enabled { settings.line_search.max_halvings + 1 } else { 1 };
        for _ in 0..trials {
            let candidate = control.ascend(&direction, epsilon);
            let cand_fwd = problem.forward(psi0, &candidate)?;
            let f = cand_fwd.fidelity(target);
            if !settings.line_search.enabled || f >= fidelity {
                accepted = Some((candidate, cand_fwd, f));
                break;
            }
            epsilon *= settings.line_search.backtrack;
        }
        match accepted {
            Some((c, f_rec, f)) => {
                control = c;
                fwd = f_rec;
                fidelity = f;
                if settings.line_search.enabled {
                    epsilon *= settings.line_search.growth;
                }
                iterations += 1;
                fidelity_trace.push(fidelity);
                previous = Some((g, direction));
            }
            None => break TerminationReason::Stalled,
        }
    };

    log::debug!("optimization finished after {iterations} iterations: F = {fidelity:.6}, {termination:?}");
    Ok(OptimizationResult {
        control,
        fidelity_trace,
        grad_norm_trace,
        final_state: fwd.final_state().clone(),
        fidelity,
        iterations,
        termination,
        restarts,
        max_edge_population: fwd.check_truncation(),
    })
}

type Controls = Vec<Vec<f64>>;

fn masked(g: &[Vec<f64>], mask: &[bool]) -> Vec<Vec<f64>> {
    g.iter().zip(mask).map(|(ch, &m)| if m { ch.clone() } else { vec![0.0; ch.len()] }).collect()
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

fn conjugate_direction(g: &[Vec<f64>], g_prev: &[Vec<f64>], d_prev: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let denom = dot(g_prev, g_prev);
    let beta = if denom > 0.0 { ((dot(g, g) - dot(g, g_prev)) / denom).max(0.0) } else { 0.0 };
    let d: Vec<Vec<f64>> =
        g.iter().zip(d_prev).map(|(gc, dc)| gc.iter().zip(dc).map(|(x, y)| x + beta * y).collect()).collect();
    if dot(&d, g) > 0.0 {
        d
    } else {
        g.to_vec()
    }
}

/// Fidelity of one fixed pulse under GP dynamics for every `beta`.
pub fn beta_scan(
    lattice: &Lattice1DParams,
    betas: &[f64],
    psi0: &ComplexVector,
    target: &ComplexVector,
    control: &ControlGrid,
    freezing: DensityFreezing,
) -> Result<Vec<(f64, f64)>> {
    if betas.is_empty() {
        return Err(Error::InvalidParameter("beta grid is empty".into()));
    }
    control.expect_channels(1)?;
    betas
        .iter()
        .map(|&beta| {
            let params = GPParams::new(*lattice, beta)?;
            let prop = GpPropagator::new(&params, control.dt(), freezing)?;
            let run = prop.run(psi0, control.channel(0))?;
            let f = inner(target, run.states.last().expect("nonempty")).norm_sqr();
            Ok((beta, f))
        })
        .collect()
}
