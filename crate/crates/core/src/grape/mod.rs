//! Gradient ascent pulse engineering.
//!
//! For a target `psi_t` the objective is `F = |<psi_t|psi(t_f)>|^2`. The
//! adjoint starts from `chi(t_f) = 2 chi0 <psi_t|psi(t_f)> psi_t` and is
//! carried back through the exact adjoint of every discrete step. Per step and
//! channel the ascent direction is
//!
//! `g_k = Re <chi_{k+1}| dU_k/dphi_k |psi_k> / dt`,
//!
//! which tends to `Im <chi|dH/dphi|psi>` for small steps and satisfies
//! `dF/dphi_k = g_k dt / chi0` exactly for the discretized dynamics.

mod optimizer;

pub use optimizer::{
    beta_scan, optimize, LineSearch, OptimizationResult, OptimizerSettings, SearchDirection, TerminationReason,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::ControlGrid;
use crate::error::{Error, Result};
use crate::gp::{backward_extended, DensityFreezing, GPParams, GpPropagator};
use crate::lattice1d::{control_derivative_at, Lattice1DParams, LinearPropagator};
use crate::lattice2d::{Channel, DerivativeForm, Lattice2DModel, Lattice2DParams, PhaseTriple, StepKernel2D};
use crate::numkernel::{inner, ComplexMatrix, ComplexVector, HermitianEigen};

/// How the GP adjoint is carried backward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMode {
    /// Exact adjoint of the discrete frozen-density map, including the
    /// dependence of the frozen density on the states.
    #[default]
    Exact,
    /// The `2N` extended system with the overlap term frozen per step. Its
    /// gradient is only first-order accurate in the step.
    Extended,
}

/// A control problem: which dynamics and how their gradient is formed.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Linear1D(Lattice1DParams),
    Gp { params: GPParams, freezing: DensityFreezing, adjoint: AdjointMode },
    Lattice2D { params: Lattice2DParams, form: DerivativeForm },
}

impl Problem {
    pub fn gp(params: GPParams) -> Self {
        Problem::Gp { params, freezing: DensityFreezing::default(), adjoint: AdjointMode::default() }
    }

    pub fn lattice2d(params: Lattice2DParams) -> Self {
        Problem::Lattice2D { params, form: DerivativeForm::default() }
    }

    pub fn n_channels(&self) -> usize {
        match self {
            Problem::Lattice2D { .. } => 3,
            _ => 1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Linear1D(p) => p.dim(),
            Problem::Gp { params, .. } => params.lattice.dim(),
            Problem::Lattice2D { params, .. } => params.dim(),
        }
    }

    /// Checks that states and control fit the problem.
    pub fn check(&self, psi0: &ComplexVector, target: &ComplexVector, control: &ControlGrid) -> Result<()> {
        for v in [psi0, target] {
            if v.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
            }
        }
        control.expect_channels(self.n_channels())
    }

    /// GP problems at zero nonlinearity run on the linear fast path.
    fn effective(&self) -> std::borrow::Cow<'_, Problem> {
        match self {
            Problem::Gp { params, .. } if params.beta == 0.0 => {
                std::borrow::Cow::Owned(Problem::Linear1D(params.lattice))
            }
            _ => std::borrow::Cow::Borrowed(self),
        }
    }

    /// Forward propagation keeping what the gradient needs.
    pub fn forward(&self, psi0: &ComplexVector, control: &ControlGrid) -> Result<Forward> {
        control.expect_channels(self.n_channels())?;
        let dt = control.dt();
        match self.effective().as_ref() {
            Problem::Linear1D(p) => {
                p.check_state(psi0)?;
                let prop = LinearPropagator::new(p, dt)?;
                let states = prop.run(psi0, control.channel(0));
                Ok(Forward { states, data: ForwardData::Linear(prop) })
            }
            Problem::Gp { params, freezing, .. } => {
                let prop = GpPropagator::new(params, dt, *freezing)?;
                let run = prop.run(psi0, control.channel(0))?;
                Ok(Forward { states: run.states, data: ForwardData::Gp { prop, eigens: run.eigens } })
            }
            Problem::Lattice2D { params, .. } => {
                let model = Lattice2DModel::new(params)?;
                let states = model.run(psi0, control)?;
                let kernel = model.step_kernel(dt)?;
                Ok(Forward { states, data: ForwardData::Lattice2D { model, kernel } })
            }
        }
    }

    pub fn final_state(&self, psi0: &ComplexVector, control: &ControlGrid) -> Result<ComplexVector> {
        Ok(self.forward(psi0, control)?.final_state().clone())
    }

    pub fn fidelity(&self, psi0: &ComplexVector, target: &ComplexVector, control: &ControlGrid) -> Result<f64> {
        Ok(self.forward(psi0, control)?.fidelity(target))
    }

    /// Gradient from a finished forward pass.
    pub fn gradient_from(
        &self,
        fwd: &Forward,
        control: &ControlGrid,
        target: &ComplexVector,
        chi0: f64,
    ) -> Result<Gradient> {
        let dt = control.dt();
        let steps = control.n_steps();
        let chi_f = adjoint_final(fwd.final_state(), target, chi0)?;
        let fidelity = fwd.fidelity(target);
        let mut pmp = vec![vec![0.0; steps]; self.n_channels()];

        match (&fwd.data, self.effective().as_ref()) {
            (ForwardData::Linear(prop), _) => {
                let n_op = prop.orders();
                let n_expect = |chi: &ComplexVector, psi: &ComplexVector| -> Complex64 {
                    chi.iter().zip(psi.iter()).zip(n_op).map(|((c, p), n)| c.conj() * p * *n).sum()
                };
                let mut chi = chi_f;
                let mut upper = n_expect(&chi, &fwd.states[steps]);
                for k in (0..steps).rev() {
                    let chi_k = prop.step_adjoint(&chi, control.value(0, k));
                    let lower = n_expect(&chi_k, &fwd.states[k]);
                    // dU/dphi = i [n, U]
                    pmp[0][k] = (Complex64::new(0.0, 1.0) * (upper - lower)).re / dt;
                    upper = lower;
                    chi = chi_k;
                }
            }
            (ForwardData::Gp { prop, eigens }, Problem::Gp { params, adjoint, .. }) => match adjoint {
                AdjointMode::Exact => {
                    let mut chi = chi_f;
                    for k in (0..steps).rev() {
                        let (chi_k, t) = prop.adjoint_step(&eigens[k], &fwd.states[k], &fwd.states[k + 1], &chi)?;
                        let dh = control_derivative_at(&params.lattice, control.value(0, k));
                        pmp[0][k] = contract_tridiagonal(&dh, &t).re / dt;
                        chi = chi_k;
                    }
                }
                AdjointMode::Extended => {
                    let ext = backward_extended(params, fwd.final_state(), &chi_f, control, prop.freezing())?;
                    for k in 0..steps {
                        let t = ext.eigens[k].step_sensitivity(dt, &ext.adjoints[k + 1], &ext.states[k]);
                        let dh = control_derivative_at(&params.lattice, control.value(0, k));
                        pmp[0][k] = contract_tridiagonal(&dh, &t).re / dt;
                    }
                }
            },
            (ForwardData::Lattice2D { model, kernel }, Problem::Lattice2D { form, .. }) => {
                let mut chi = chi_f;
                for k in (0..steps).rev() {
                    let phases = PhaseTriple::from_control(control, k);
                    let r = model.step_response(kernel, &phases, *form, &chi, &fwd.states[k]);
                    for c in Channel::ALL {
                        pmp[c.index()][k] = r[c.index()].re / dt;
                    }
                    chi = model.step_adjoint(kernel, &phases, &chi);
                }
            }
            _ => unreachable!("forward record built by a different problem"),
        }
        Ok(Gradient { pmp, dt, chi0, fidelity })
    }

    pub fn gradient(
        &self,
        control: &ControlGrid,
        psi0: &ComplexVector,
        target: &ComplexVector,
        chi0: f64,
    ) -> Result<Gradient> {
        self.check(psi0, target, control)?;
        let fwd = self.forward(psi0, control)?;
        self.gradient_from(&fwd, control, target, chi0)
    }
}

/// `sum_ij D_ij T_ij` over the three central diagonals of `D`.
fn contract_tridiagonal(d: &ComplexMatrix, t: &ComplexMatrix) -> Complex64 {
    let n = d.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in i.saturating_sub(1)..(i + 2).min(n) {
            acc += d[[i, j]] * t[[i, j]];
        }
    }
    acc
}

/// States of a forward pass and the step data needed for the adjoint.
#[derive(Clone, Debug)]
pub struct Forward {
    pub states: Vec<ComplexVector>,
    data: ForwardData,
}

#[derive(Clone, Debug)]
enum ForwardData {
    Linear(LinearPropagator),
    Gp { prop: GpPropagator, eigens: Vec<HermitianEigen> },
    Lattice2D { model: Lattice2DModel, kernel: StepKernel2D },
}

impl Forward {
    pub fn final_state(&self) -> &ComplexVector {
        self.states.last().expect("forward pass holds the initial state")
    }

    pub fn fidelity(&self, target: &ComplexVector) -> f64 {
        inner(target, self.final_state()).norm_sqr()
    }

    /// Largest population on the 2D momentum-window edge along the pass,
    /// warning when it is not negligible. `None` for the 1D families.
    pub fn check_truncation(&self) -> Option<f64> {
        match &self.data {
            ForwardData::Lattice2D { model, .. } => Some(model.check_truncation(&self.states)),
            _ => None,
        }
    }
}

/// Per-step, per-channel ascent direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    /// `g[c][k]`, the step-integrated `Im <chi|dH/dphi|psi>`.
    pub pmp: Vec<Vec<f64>>,
    pub dt: f64,
    pub chi0: f64,
    /// Fidelity of the forward pass the gradient belongs to.
    pub fidelity: f64,
}

impl Gradient {
    /// `dF/dphi[c][k] = g[c][k] dt / chi0`.
    pub fn fidelity_derivative(&self) -> Vec<Vec<f64>> {
        let s = self.dt / self.chi0;
        self.pmp.iter().map(|ch| ch.iter().map(|g| g * s).collect()).collect()
    }

    /// Euclidean norm over the channels flagged in `mask`.
    pub fn norm(&self, mask: &[bool]) -> f64 {
        self.pmp.iter().zip(mask).filter(|(_, &m)| m).flat_map(|(ch, _)| ch.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `chi(t_f) = 2 chi0 <target|psi_f> target`.
pub fn adjoint_final(psi_f: &ComplexVector, target: &ComplexVector, chi0: f64) -> Result<ComplexVector> {
    if psi_f.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), found: psi_f.len() });
    }
    let overlap = inner(target, psi_f);
    Ok(target.mapv(|z| z * overlap * (2.0 * chi0)))
}

pub fn gradient_linear(
    p: &Lattice1DParams,
    control: &ControlGrid,
    psi0: &ComplexVector,
    target: &ComplexVector,
    chi0: f64,
) -> Result<Gradient> {
    Problem::Linear1D(*p).gradient(control, psi0, target, chi0)
}

pub fn gradient_gp(
    p: &GPParams,
    control: &ControlGrid,
    psi0: &ComplexVector,
    target: &ComplexVector,
    chi0: f64,
) -> Result<Gradient> {
    Problem::gp(*p).gradient(control, psi0, target, chi0)
}

pub fn gradient_2d(
    p: &Lattice2DParams,
    control: &ControlGrid,
    psi0: &ComplexVector,
    target: &ComplexVector,
    chi0: f64,
) -> Result<Gradient> {
    Problem::lattice2d(*p).gradient(control, psi0, target, chi0)
}

/// Central differences `dF/dphi[c][k]` over every control sample.
pub fn finite_difference_gradient(
    problem: &Problem,
    control: &ControlGrid,
    psi0: &ComplexVector,
    target: &ComplexVector,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step h = {h}")));
    }
    problem.check(psi0, target, control)?;
    let mut out = vec![vec![0.0; control.n_steps()]; control.n_channels()];
    for (c, row) in out.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            let mut up = control.clone();
            up.set(c, k, control.value(c, k) + h);
            let mut dn = control.clone();
            dn.set(c, k, control.value(c, k) - h);
            *slot = (problem.fidelity(psi0, target, &up)? - problem.fidelity(psi0, target, &dn)?) / (2.0 * h);
        }
    }
    Ok(out)
}
