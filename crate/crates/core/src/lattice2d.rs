//! The triangular lattice at zero quasi-momentum.
//!
//! States are expanded on reciprocal-lattice momenta `m b1 + n b2` with
//! `|m| <= M`, `|n| <= N`, flattened row-major (`m` outer, `n` inner). The
//! three relative beam phases `phi12`, `phi23`, `phi31` each drive one pair of
//! nearest-neighbour shifts:
//!
//! | channel | `+` shift couples | `-` shift couples |
//! |---------|-------------------|-------------------|
//! | 12      | `(m,n) <- (m,n+1)`   | `(m,n) <- (m,n-1)`   |
//! | 23      | `(m,n) <- (m-1,n-1)` | `(m,n) <- (m+1,n+1)` |
//! | 31      | `(m,n) <- (m+1,n)`   | `(m,n) <- (m-1,n)`   |
//!
//! and `H = H0 + sum_l (e^{i phi_l} H_l^+ + e^{-i phi_l} H_l^-)` with every
//! shift entry equal to `-s/4`. Couplings leaving the window are dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::control::{ControlGrid, Trajectory};
use crate::error::{Error, Result};
use crate::numkernel::{ChebyshevExpansion, ComplexMatrix, ComplexVector};

/// Population on the outermost momenta above which a propagation warns that
/// the truncation window is too small.
pub const EDGE_POPULATION_WARN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice2DParams {
    pub s: f64,
    pub m_max: usize,
    pub n_max: usize,
}

impl Lattice2DParams {
    pub const DEFAULT_TRUNCATION: usize = 5;

    pub fn new(s: f64, m_max: usize, n_max: usize) -> Result<Self> {
        let p = Self { s, m_max, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s >= 0.0) {
            return Err(Error::InvalidParameter(format!("lattice depth s = {}", self.s)));
        }
        if self.m_max < 1 || self.n_max < 1 {
            return Err(Error::InvalidParameter(format!(
                "truncation M = {}, N = {} must both be at least 1",
                self.m_max, self.n_max
            )));
        }
        Ok(())
    }

    pub fn index_map(&self) -> IndexMap2D {
        IndexMap2D { m_max: self.m_max, n_max: self.n_max }
    }

    pub fn dim(&self) -> usize {
        (2 * self.m_max + 1) * (2 * self.n_max + 1)
    }

    pub fn check_state(&self, psi: &ComplexVector) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi.len() });
        }
        Ok(())
    }
}

/// Row-major bijection between `(m, n)` and flat indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexMap2D {
    pub m_max: usize,
    pub n_max: usize,
}

impl IndexMap2D {
    pub fn dim(&self) -> usize {
        (2 * self.m_max + 1) * (2 * self.n_max + 1)
    }

    fn width(&self) -> usize {
        2 * self.n_max + 1
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        m.unsigned_abs() as usize <= self.m_max && n.unsigned_abs() as usize <= self.n_max
    }

    pub fn flatten(&self, m: i64, n: i64) -> Result<usize> {
        if !self.contains(m, n) {
            return Err(Error::IndexOutOfRange(format!(
                "({m}, {n}) outside |m| <= {}, |n| <= {}",
                self.m_max, self.n_max
            )));
        }
        let row = (m + self.m_max as i64) as usize;
        let col = (n + self.n_max as i64) as usize;
        Ok(row * self.width() + col)
    }

    pub fn unflatten(&self, k: usize) -> Result<(i64, i64)> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange(format!("flat index {k} >= {}", self.dim())));
        }
        let (row, col) = (k / self.width(), k % self.width());
        Ok((row as i64 - self.m_max as i64, col as i64 - self.n_max as i64))
    }

    /// All `(m, n)` pairs in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.dim()).map(|k| self.unflatten(k).expect("in range"))
    }

    /// Whether `(m, n)` lies on the boundary of the window.
    pub fn is_edge(&self, m: i64, n: i64) -> bool {
        m.unsigned_abs() as usize == self.m_max || n.unsigned_abs() as usize == self.n_max
    }
}

/// One of the three relative beam phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "12")]
    Phi12,
    #[serde(rename = "23")]
    Phi23,
    #[serde(rename = "31")]
    Phi31,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Phi12, Channel::Phi23, Channel::Phi31];

    /// Position of the channel in a three-channel control grid.
    pub fn index(self) -> usize {
        match self {
            Channel::Phi12 => 0,
            Channel::Phi23 => 1,
            Channel::Phi31 => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Phi12 => "12",
            Channel::Phi23 => "23",
            Channel::Phi31 => "31",
        }
    }

    /// Momentum shift `(dm, dn)` picked up by `H_l^+`: row `(m,n)` couples
    /// to column `(m+dm, n+dn)`.
    fn plus_shift(self) -> (i64, i64) {
        match self {
            Channel::Phi12 => (0, 1),
            Channel::Phi23 => (-1, -1),
            Channel::Phi31 => (1, 0),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("phi") {
            "12" => Ok(Channel::Phi12),
            "23" => Ok(Channel::Phi23),
            "31" => Ok(Channel::Phi31),
            other => Err(Error::InvalidParameter(format!("unknown channel {other:?}, expected 12, 23 or 31"))),
        }
    }
}

/// Instantaneous values of the three phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTriple {
    pub phi12: f64,
    pub phi23: f64,
    pub phi31: f64,
}

impl PhaseTriple {
    pub fn new(phi12: f64, phi23: f64, phi31: f64) -> Self {
        Self { phi12, phi23, phi31 }
    }

    /// Phases applied on step `k` of a three-channel grid.
    pub fn from_control(control: &ControlGrid, k: usize) -> Self {
        Self::new(control.value(0, k), control.value(1, k), control.value(2, k))
    }

    pub fn get(&self, c: Channel) -> f64 {
        match c {
            Channel::Phi12 => self.phi12,
            Channel::Phi23 => self.phi23,
            Channel::Phi31 => self.phi31,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.phi12.is_finite() && self.phi23.is_finite() && self.phi31.is_finite()
    }
}

/// `H0 = diag(m^2 + n^2 - mn)`.
pub fn build_kinetic2d(p: &Lattice2DParams) -> ComplexMatrix {
    let map = p.index_map();
    let d: Vec<Complex64> = map.pairs().map(|(m, n)| Complex64::new((m * m + n * n - m * n) as f64, 0.0)).collect();
    ComplexMatrix::from_diag(&ndarray::Array1::from(d))
}

/// The six shift operators, indexed by [`Channel::index`].
#[derive(Clone, Debug)]
pub struct ShiftOperators {
    pub plus: [ComplexMatrix; 3],
    pub minus: [ComplexMatrix; 3],
}

impl ShiftOperators {
    pub fn plus(&self, c: Channel) -> &ComplexMatrix {
        &self.plus[c.index()]
    }

    pub fn minus(&self, c: Channel) -> &ComplexMatrix {
        &self.minus[c.index()]
    }
}

/// In-window `(row, col)` pairs of `H_l^+`.
fn plus_links(map: &IndexMap2D, c: Channel) -> Vec<(usize, usize)> {
    let (dm, dn) = c.plus_shift();
    map.pairs()
        .filter_map(|(m, n)| {
            let col = map.flatten(m + dm, n + dn).ok()?;
            Some((map.flatten(m, n).ok()?, col))
        })
        .collect()
}

pub fn build_shift_operators(p: &Lattice2DParams) -> ShiftOperators {
    let map = p.index_map();
    let d = map.dim();
    let v = Complex64::new(-p.s / 4.0, 0.0);
    let build = |c: Channel, transpose: bool| {
        let mut h = ComplexMatrix::zeros((d, d));
        for (r, col) in plus_links(&map, c) {
            if transpose {
                h[[col, r]] = v;
            } else {
                h[[r, col]] = v;
            }
        }
        h
    };
    ShiftOperators { plus: Channel::ALL.map(|c| build(c, false)), minus: Channel::ALL.map(|c| build(c, true)) }
}

/// Hamiltonian assembler that keeps the sparse structure of the couplings.
#[derive(Clone, Debug)]
pub struct Lattice2DModel {
    params: Lattice2DParams,
    kinetic: Vec<f64>,
    links: [Vec<(usize, usize)>; 3],
}

impl Lattice2DModel {
    pub fn new(params: &Lattice2DParams) -> Result<Self> {
        params.validate()?;
        let map = params.index_map();
        Ok(Self {
            params: *params,
            kinetic: map.pairs().map(|(m, n)| (m * m + n * n - m * n) as f64).collect(),
            links: Channel::ALL.map(|c| plus_links(&map, c)),
        })
    }

    pub fn params(&self) -> &Lattice2DParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.kinetic.len()
    }

    pub fn hamiltonian(&self, phases: &PhaseTriple) -> ComplexMatrix {
        let d = self.dim();
        let mut h = ComplexMatrix::zeros((d, d));
        for (k, e) in self.kinetic.iter().enumerate() {
            h[[k, k]] = Complex64::new(*e, 0.0);
        }
        for c in Channel::ALL {
            let w = Complex64::from_polar(-self.params.s / 4.0, phases.get(c));
            for &(r, col) in &self.links[c.index()] {
                h[[r, col]] += w;
                h[[col, r]] += w.conj();
            }
        }
        h
    }

    pub fn derivative(&self, phases: &PhaseTriple, channel: Channel, form: DerivativeForm) -> ComplexMatrix {
        let d = self.dim();
        let mut h = ComplexMatrix::zeros((d, d));
        let phase = match form {
            DerivativeForm::Exact => phases.get(channel),
            DerivativeForm::Printed => 0.0,
        };
        // d/dphi of e^{i phi} (-s/4) is i e^{i phi} (-s/4)
        let w = Complex64::new(0.0, 1.0) * Complex64::from_polar(-self.params.s / 4.0, phase);
        for &(r, col) in &self.links[channel.index()] {
            h[[r, col]] = w;
            h[[col, r]] = w.conj();
        }
        h
    }

    /// `sum_ij D_ij T_ij` for `D` the phase derivative in `channel`, using
    /// only the nonzero entries of `D`.
    pub fn contract_derivative(
        &self,
        phases: &PhaseTriple,
        channel: Channel,
        form: DerivativeForm,
        t: &ComplexMatrix,
    ) -> Complex64 {
        let phase = match form {
            DerivativeForm::Exact => phases.get(channel),
            DerivativeForm::Printed => 0.0,
        };
        let w = Complex64::new(0.0, 1.0) * Complex64::from_polar(-self.params.s / 4.0, phase);
        self.links[channel.index()].iter().map(|&(r, c)| w * t[[r, c]] + w.conj() * t[[c, r]]).sum()
    }

    /// Total population on the boundary of the momentum window.
    pub fn edge_population(&self, psi: &ComplexVector) -> f64 {
        let map = self.params.index_map();
        map.pairs().zip(psi.iter()).filter(|((m, n), _)| map.is_edge(*m, *n)).map(|(_, z)| z.norm_sqr()).sum()
    }

    /// Largest edge population along a trajectory, logged as a warning when
    /// it exceeds [`EDGE_POPULATION_WARN`].
    pub fn check_truncation(&self, states: &[ComplexVector]) -> f64 {
        let edge = states.iter().map(|s| self.edge_population(s)).fold(0.0, f64::max);
        if edge > EDGE_POPULATION_WARN {
            log::warn!(
                "population {edge:.3e} reached the edge of the {}x{} momentum window; consider a larger truncation",
                2 * self.params.m_max + 1,
                2 * self.params.n_max + 1
            );
        }
        edge
    }
}

/// Which matrix multiplies `Im<chi|.|psi>` in the 2D gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeForm {
    /// `dH/dphi_l = i e^{i phi_l} H_l^+ - i e^{-i phi_l} H_l^-`.
    #[default]
    Exact,
    /// `i (H_l^+ - H_l^-)`, the exact derivative only at `phi_l = 0`. Kept
    /// for comparison runs.
    Printed,
}

pub fn hamiltonian2d_at(p: &Lattice2DParams, phases: &PhaseTriple) -> Result<ComplexMatrix> {
    if !phases.is_finite() {
        return Err(Error::NonFinite("phases"));
    }
    Ok(Lattice2DModel::new(p)?.hamiltonian(phases))
}

pub fn control_derivative_2d(p: &Lattice2DParams, phases: &PhaseTriple, channel: Channel) -> Result<ComplexMatrix> {
    control_derivative_2d_with(p, phases, channel, DerivativeForm::Exact)
}

pub fn control_derivative_2d_with(
    p: &Lattice2DParams,
    phases: &PhaseTriple,
    channel: Channel,
    form: DerivativeForm,
) -> Result<ComplexMatrix> {
    Ok(Lattice2DModel::new(p)?.derivative(phases, channel, form))
}

/// Step propagators of one run. The sparse Hamiltonian is never
/// diagonalized: products with it drive a Chebyshev expansion whose
/// interval covers the spectrum for every phase setting.
#[derive(Clone, Debug)]
pub struct StepKernel2D {
    forward: ChebyshevExpansion,
    backward: ChebyshevExpansion,
}

impl Lattice2DModel {
    /// Interval containing the spectrum of `H(phases)` for all phases.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        // at most six links per row, each of magnitude s/4
        let radius = 1.5 * self.params.s;
        let lo = self.kinetic.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.kinetic.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - radius, hi + radius)
    }

    pub fn step_kernel(&self, dt: f64) -> Result<StepKernel2D> {
        let (lo, hi) = self.spectral_bounds();
        Ok(StepKernel2D {
            forward: ChebyshevExpansion::new(lo, hi, dt)?,
            backward: ChebyshevExpansion::new(lo, hi, -dt)?,
        })
    }

    fn link_weights(&self, phases: &PhaseTriple) -> [Complex64; 3] {
        Channel::ALL.map(|c| Complex64::from_polar(-self.params.s / 4.0, phases.get(c)))
    }

    /// `y = H x` from the kinetic diagonal and the link lists.
    fn apply_h(&self, w: &[Complex64; 3], x: &[Complex64], y: &mut [Complex64]) {
        for ((yi, xi), e) in y.iter_mut().zip(x).zip(&self.kinetic) {
            *yi = xi * e;
        }
        for (links, wc) in self.links.iter().zip(w) {
            apply_links(links, *wc, x, y);
        }
    }

    fn derivative_weight(&self, phases: &PhaseTriple, channel: Channel, form: DerivativeForm) -> Complex64 {
        let phase = match form {
            DerivativeForm::Exact => phases.get(channel),
            DerivativeForm::Printed => 0.0,
        };
        Complex64::new(0.0, 1.0) * Complex64::from_polar(-self.params.s / 4.0, phase)
    }

    /// `exp(-i H(phases) dt) psi`.
    pub fn step(&self, kernel: &StepKernel2D, phases: &PhaseTriple, psi: &ComplexVector) -> ComplexVector {
        let w = self.link_weights(phases);
        kernel.forward.apply(|x: &[Complex64], y: &mut [Complex64]| self.apply_h(&w, x, y), psi)
    }

    /// `exp(+i H(phases) dt) chi`, the adjoint of [`Self::step`].
    pub fn step_adjoint(&self, kernel: &StepKernel2D, phases: &PhaseTriple, chi: &ComplexVector) -> ComplexVector {
        let w = self.link_weights(phases);
        kernel.backward.apply(|x: &[Complex64], y: &mut [Complex64]| self.apply_h(&w, x, y), chi)
    }

    /// `<lambda| dU/dphi_c |psi>` for the three channels, where `U` is the
    /// step propagator at `phases`.
    pub fn step_response(
        &self,
        kernel: &StepKernel2D,
        phases: &PhaseTriple,
        form: DerivativeForm,
        lambda: &ComplexVector,
        psi: &ComplexVector,
    ) -> [Complex64; 3] {
        let w = self.link_weights(phases);
        let dirs = Channel::ALL.map(|c| {
            let links = &self.links[c.index()];
            let wd = self.derivative_weight(phases, c, form);
            move |x: &[Complex64], y: &mut [Complex64]| {
                y.fill(Complex64::new(0.0, 0.0));
                apply_links(links, wd, x, y);
            }
        });
        let r =
            kernel.forward.response(|x: &[Complex64], y: &mut [Complex64]| self.apply_h(&w, x, y), &dirs, lambda, psi);
        [r[0], r[1], r[2]]
    }

    /// Propagates through a three-channel grid.
    pub fn run(&self, psi0: &ComplexVector, control: &ControlGrid) -> Result<Vec<ComplexVector>> {
        self.params.check_state(psi0)?;
        control.expect_channels(3)?;
        if control.values().iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phases"));
        }
        let kernel = self.step_kernel(control.dt())?;
        let mut states = Vec::with_capacity(control.n_steps() + 1);
        states.push(psi0.clone());
        for k in 0..control.n_steps() {
            let next = self.step(&kernel, &PhaseTriple::from_control(control, k), &states[k]);
            states.push(next);
        }
        Ok(states)
    }
}

/// `y[r] += w x[c]` and `y[c] += conj(w) x[r]` over the links `(r, c)`.
fn apply_links(links: &[(usize, usize)], w: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    let wc = w.conj();
    for &(r, c) in links {
        y[r] += w * x[c];
        y[c] += wc * x[r];
    }
}

pub fn propagate_2d(p: &Lattice2DParams, psi0: &ComplexVector, control: &ControlGrid) -> Result<Trajectory> {
    let model = Lattice2DModel::new(p)?;
    let states = model.run(psi0, control)?;
    model.check_truncation(&states);
    let times = (0..=control.n_steps()).map(|k| control.t_start(k)).collect();
    Ok(Trajectory { times, states })
}
