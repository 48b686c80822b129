//! The linear 1D lattice in a truncated plane-wave basis.
//!
//! Coefficients are ordered by increasing momentum order `n = -n_max..=n_max`.
//! In the subspace of quasi-momentum `q` the dimensionless dynamics read
//!
//! `i dc_n/dt = (n+q)^2 c_n - (s/4) (e^{i phi} c_{n-1} + e^{-i phi} c_{n+1})`,
//!
//! i.e. `H(phi) = H0 + cos(phi) H1 + sin(phi) H2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{ControlGrid, Trajectory};
use crate::error::{Error, Result};
use crate::numkernel::{ComplexMatrix, ComplexVector, HermitianEigen};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice1DParams {
    /// Lattice depth.
    pub s: f64,
    /// Quasi-momentum in `[-0.5, 0.5]`.
    pub q: f64,
    pub n_max: usize,
}

impl Lattice1DParams {
    pub const DEFAULT_N_MAX: usize = 10;

    /// `s = 0` is accepted to model the free particle.
    pub fn new(s: f64, q: f64, n_max: usize) -> Result<Self> {
        let p = Self { s, q, n_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s >= 0.0) {
            return Err(Error::InvalidParameter(format!("lattice depth s = {}", self.s)));
        }
        if !(self.q.is_finite() && self.q.abs() <= 0.5) {
            return Err(Error::InvalidParameter(format!("quasi-momentum q = {} outside [-0.5, 0.5]", self.q)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    /// Momentum orders in storage order.
    pub fn orders(&self) -> impl Iterator<Item = i64> {
        let m = self.n_max as i64;
        -m..=m
    }

    /// Storage position of momentum order `n`.
    pub fn index_of(&self, n: i64) -> Result<usize> {
        if n.unsigned_abs() as usize > self.n_max {
            return Err(Error::IndexOutOfRange(format!("momentum order {n} outside |n| <= {}", self.n_max)));
        }
        Ok((n + self.n_max as i64) as usize)
    }

    pub fn check_state(&self, psi: &ComplexVector) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: psi.len() });
        }
        Ok(())
    }
}

/// `H0 = diag((n+q)^2)`.
pub fn build_kinetic(p: &Lattice1DParams) -> ComplexMatrix {
    let diag: Vec<Complex64> = p.orders().map(|n| Complex64::new((n as f64 + p.q).powi(2), 0.0)).collect();
    ComplexMatrix::from_diag(&ndarray::Array1::from(diag))
}

/// `H1`: `-s/4` on both first off-diagonals.
pub fn build_cos_coupling(p: &Lattice1DParams) -> ComplexMatrix {
    let n = p.dim();
    let mut h = ComplexMatrix::zeros((n, n));
    let c = Complex64::new(-p.s / 4.0, 0.0);
    for k in 1..n {
        h[[k, k - 1]] = c;
        h[[k - 1, k]] = c;
    }
    h
}

/// `H2`: `-i s/4` below the diagonal, `+i s/4` above.
pub fn build_sin_coupling(p: &Lattice1DParams) -> ComplexMatrix {
    let n = p.dim();
    let mut h = ComplexMatrix::zeros((n, n));
    let c = Complex64::new(0.0, p.s / 4.0);
    for k in 1..n {
        h[[k, k - 1]] = -c;
        h[[k - 1, k]] = c;
    }
    h
}

/// `H(phi) = H0 + cos(phi) H1 + sin(phi) H2`.
pub fn hamiltonian_at(p: &Lattice1DParams, phi: f64) -> ComplexMatrix {
    let mut h = build_kinetic(p);
    let n = p.dim();
    // row n couples to n-1 with -(s/4) e^{i phi}
    let lower = Complex64::from_polar(p.s / 4.0, phi) * -1.0;
    for k in 1..n {
        h[[k, k - 1]] = lower;
        h[[k - 1, k]] = lower.conj();
    }
    h
}

/// `dH/dphi = -sin(phi) H1 + cos(phi) H2`.
pub fn control_derivative_at(p: &Lattice1DParams, phi: f64) -> ComplexMatrix {
    let n = p.dim();
    let mut h = ComplexMatrix::zeros((n, n));
    let lower = Complex64::from_polar(p.s / 4.0, phi) * Complex64::new(0.0, -1.0);
    for k in 1..n {
        h[[k, k - 1]] = lower;
        h[[k - 1, k]] = lower.conj();
    }
    h
}

/// Step propagator for the linear lattice.
///
/// A phase shift of the lattice is a translation: with
/// `D(phi) = diag(e^{i n phi})` one has `H(phi) = D H(0) D^dagger`, so every
/// step `exp(-i H(phi) dt)` reuses a single eigendecomposition of `H(0)`.
#[derive(Clone, Debug)]
pub struct LinearPropagator {
    params: Lattice1DParams,
    dt: f64,
    u0: ComplexMatrix,
    orders: Vec<f64>,
}

impl LinearPropagator {
    pub fn new(params: &Lattice1DParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !dt.is_finite() {
            return Err(Error::NonFinite("time step"));
        }
        let eig = HermitianEigen::new(&hamiltonian_at(params, 0.0))?;
        Ok(Self { params: *params, dt, u0: eig.propagator(dt), orders: params.orders().map(|n| n as f64).collect() })
    }

    pub fn params(&self) -> &Lattice1DParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Momentum orders `n` as the diagonal of the translation generator.
    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    /// `exp(-i H(phi) dt) psi`.
    pub fn step(&self, psi: &ComplexVector, phi: f64) -> ComplexVector {
        let shifted: ComplexVector =
            psi.iter().zip(&self.orders).map(|(c, n)| c * Complex64::from_polar(1.0, -n * phi)).collect();
        let mut out = self.u0.dot(&shifted);
        for (c, n) in out.iter_mut().zip(&self.orders) {
            *c *= Complex64::from_polar(1.0, n * phi);
        }
        out
    }

    /// `exp(-i H(phi) dt)^dagger chi`.
    pub fn step_adjoint(&self, chi: &ComplexVector, phi: f64) -> ComplexVector {
        let shifted: ComplexVector =
            chi.iter().zip(&self.orders).map(|(c, n)| c * Complex64::from_polar(1.0, -n * phi)).collect();
        let mut out = ComplexVector::zeros(shifted.len());
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.u0.column(j).iter().zip(shifted.iter()).map(|(u, c)| u.conj() * c).sum();
        }
        for (c, n) in out.iter_mut().zip(&self.orders) {
            *c *= Complex64::from_polar(1.0, n * phi);
        }
        out
    }

    /// States after every step for the phase sequence `phases`.
    pub fn run(&self, psi0: &ComplexVector, phases: &[f64]) -> Vec<ComplexVector> {
        let mut states = Vec::with_capacity(phases.len() + 1);
        states.push(psi0.clone());
        for &phi in phases {
            let next = self.step(states.last().unwrap(), phi);
            states.push(next);
        }
        states
    }
}

/// Propagates `psi0` through the piecewise-constant single-channel control.
pub fn propagate_linear(p: &Lattice1DParams, psi0: &ComplexVector, control: &ControlGrid) -> Result<Trajectory> {
    p.check_state(psi0)?;
    control.expect_channels(1)?;
    let prop = LinearPropagator::new(p, control.dt())?;
    let states = prop.run(psi0, control.channel(0));
    let times = (0..=control.n_steps()).map(|k| control.t_start(k)).collect();
    Ok(Trajectory { times, states })
}
