//! Gross-Pitaevskii dynamics in the 1D lattice.
//!
//! The mean-field term `beta |psi(x)|^2` is diagonal on the grid
//! `x_j = 2 pi j / N`, which is reached from the plane-wave coefficients
//! through the unitary transform `R` (see [`DvrTransform`]). In the momentum
//! basis the nonlinear operator is `beta R^dagger diag(G) R` with
//! `G_j = |psi(x_j)|^2`.
//!
//! Each step applies `exp(-i H_GP dt)` with the density frozen over the step.
//! Two freezing rules are available, see [`DensityFreezing`].

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::control::{ControlGrid, Trajectory};
use crate::error::{Error, Result};
use crate::lattice1d::{hamiltonian_at, Lattice1DParams};
use crate::numkernel::{general_expm, matmul, ComplexMatrix, ComplexVector, HermitianEigen};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Convergence threshold on the frozen density for the implicit rule.
const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPParams {
    pub lattice: Lattice1DParams,
    /// Nonlinearity strength, `beta >= 0`.
    pub beta: f64,
}

impl GPParams {
    pub fn new(lattice: Lattice1DParams, beta: f64) -> Result<Self> {
        let p = Self { lattice, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {}", self.beta)));
        }
        Ok(())
    }
}

/// Which density the nonlinear term sees during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFreezing {
    /// Density of the state at the start of the step. Explicit and first
    /// order; the mean-field energy drifts by `O(dt)` per unit time.
    StepStart,
    /// Mean of the densities at both ends of the step, found by fixed-point
    /// iteration. Second order, and conserves norm and GP energy exactly
    /// for constant controls.
    #[default]
    StepAverage,
}

impl DensityFreezing {
    /// Weight of the step-start density in the frozen density.
    fn start_weight(self) -> f64 {
        match self {
            DensityFreezing::StepStart => 1.0,
            DensityFreezing::StepAverage => 0.5,
        }
    }
}

/// Unitary map `R` between plane-wave coefficients and grid values,
/// `R_{j,n} = e^{i 2 pi (q+n) j / N} / sqrt(N)`.
#[derive(Clone, Debug)]
pub struct DvrTransform {
    matrix: ComplexMatrix,
    q: f64,
    /// `exp(2 pi i m / n)` for `m = 0..n`.
    roots: Vec<Complex64>,
}

pub fn build_dvr_transform(p: &Lattice1DParams) -> DvrTransform {
    DvrTransform::new(p)
}

impl DvrTransform {
    pub fn new(p: &Lattice1DParams) -> Self {
        let n = p.dim();
        let scale = 1.0 / (n as f64).sqrt();
        let orders: Vec<i64> = p.orders().collect();
        let matrix = ComplexMatrix::from_shape_fn((n, n), |(j, col)| {
            let k = p.q + orders[col] as f64;
            Complex64::from_polar(scale, 2.0 * PI * k * j as f64 / n as f64)
        });
        let roots = (0..n).map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)).collect();
        Self { matrix, q: p.q, roots }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn grid_points(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
    }

    /// Quadrature weight `2 pi / N` of the grid.
    pub fn weight(&self) -> f64 {
        2.0 * PI / self.dim() as f64
    }

    /// `R c`
    pub fn to_grid(&self, c: &ComplexVector) -> ComplexVector {
        self.matrix.dot(c)
    }

    /// `R^dagger g`
    pub fn from_grid(&self, g: &ComplexVector) -> ComplexVector {
        let n = self.dim();
        ComplexVector::from_shape_fn(n, |col| (0..n).map(|j| self.matrix[[j, col]].conj() * g[j]).sum())
    }

    /// Wave function on the grid, `psi(x_j) = sqrt(N / 2 pi) (R c)_j`.
    pub fn wavefunction(&self, c: &ComplexVector) -> ComplexVector {
        let s = (self.dim() as f64 / (2.0 * PI)).sqrt();
        self.to_grid(c).mapv(|z| z * s)
    }

    /// `G_j = |psi(x_j)|^2`.
    pub fn density(&self, psi: &ComplexVector) -> Array1<f64> {
        let s = self.dim() as f64 / (2.0 * PI);
        self.to_grid(psi).mapv(|z| z.norm_sqr() * s)
    }

    /// `I_j = Im[conj(chi(x_j)) psi(x_j)]`.
    pub fn overlap_imag(&self, chi: &ComplexVector, psi: &ComplexVector) -> Array1<f64> {
        let s = self.dim() as f64 / (2.0 * PI);
        let (a, b) = (self.to_grid(chi), self.to_grid(psi));
        a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).im * s).collect()
    }

    /// `R^dagger diag(d) R`, a grid-diagonal operator in the momentum basis.
    ///
    /// Entry `(a, b)` only depends on `b - a`: it is the discrete Fourier
    /// coefficient `(1/N) sum_j d_j e^{i 2 pi (b - a) j / N}`.
    pub fn grid_operator(&self, d: &Array1<f64>) -> ComplexMatrix {
        let n = self.dim();
        let ni = n as i64;
        // coefficients for b - a = k - (n - 1)
        let coeffs: Vec<Complex64> = (0..2 * ni - 1)
            .map(|k| {
                let shift = k - (ni - 1);
                d.iter()
                    .enumerate()
                    .map(|(j, &w)| self.roots[(shift * j as i64).rem_euclid(ni) as usize] * w)
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect();
        ComplexMatrix::from_shape_fn((n, n), |(a, b)| coeffs[b + n - 1 - a])
    }

    /// `R^dagger (a ∘ R v)` without forming the operator.
    fn apply_grid(&self, a: &Array1<f64>, v: &ComplexVector) -> ComplexVector {
        let mut g = self.to_grid(v);
        for (z, w) in g.iter_mut().zip(a.iter()) {
            *z *= *w;
        }
        self.from_grid(&g)
    }

    /// Diagonal entries of `conj(R) T R^T`, i.e. `sum_ij T_ij conj(R_li) R_lj`.
    fn project_diagonal(&self, t: &ComplexMatrix) -> Array1<Complex64> {
        let n = self.dim();
        let m = matmul(t, &self.matrix.t().to_owned());
        Array1::from_shape_fn(n, |l| (0..n).map(|i| self.matrix[[l, i]].conj() * m[[i, l]]).sum())
    }
}

fn diag_matrix(d: &Array1<f64>) -> ComplexMatrix {
    ComplexMatrix::from_diag(&d.mapv(|x| Complex64::new(x, 0.0)))
}

/// Grid-diagonal density matrix `diag(G_j)`.
pub fn density_dvr(t: &DvrTransform, psi: &ComplexVector) -> ComplexMatrix {
    diag_matrix(&t.density(psi))
}

/// Grid-diagonal matrix `diag(Im[conj(chi) psi](x_j))`.
pub fn overlap_imag_dvr(t: &DvrTransform, chi: &ComplexVector, psi: &ComplexVector) -> ComplexMatrix {
    diag_matrix(&t.overlap_imag(chi, psi))
}

/// `H_GP = H(phi) + beta R^dagger diag(G(psi)) R`.
pub fn gp_hamiltonian(p: &GPParams, psi: &ComplexVector, phi: f64) -> Result<ComplexMatrix> {
    p.validate()?;
    p.lattice.check_state(psi)?;
    let t = DvrTransform::new(&p.lattice);
    let nl = t.grid_operator(&t.density(psi)).mapv(|z| z * p.beta);
    Ok(hamiltonian_at(&p.lattice, phi) + nl)
}

/// `E = <psi|H(phi)|psi> + (beta/2) (2 pi/N) sum_j G_j^2`, conserved by the
/// continuous dynamics at constant `phi`.
pub fn gp_energy(p: &GPParams, psi: &ComplexVector, phi: f64) -> Result<f64> {
    p.lattice.check_state(psi)?;
    let t = DvrTransform::new(&p.lattice);
    let h = hamiltonian_at(&p.lattice, phi);
    let lin = crate::numkernel::inner(psi, &h.dot(psi)).re;
    let g = t.density(psi);
    Ok(lin + 0.5 * p.beta * t.weight() * g.iter().map(|x| x * x).sum::<f64>())
}

/// One frozen-density step: the state reached, the spectral decomposition of
/// the frozen Hamiltonian and the density used.
#[derive(Clone, Debug)]
pub struct GpStep {
    pub state: ComplexVector,
    pub eigen: HermitianEigen,
    pub frozen_density: Array1<f64>,
    pub iterations: usize,
}

/// Forward states with the frozen Hamiltonians of every step.
#[derive(Clone, Debug)]
pub struct GpRun {
    pub states: Vec<ComplexVector>,
    pub eigens: Vec<HermitianEigen>,
}

/// Frozen-density stepper for fixed parameters and time step.
#[derive(Clone, Debug)]
pub struct GpPropagator {
    params: GPParams,
    dvr: DvrTransform,
    freezing: DensityFreezing,
    dt: f64,
}

impl GpPropagator {
    pub fn new(params: &GPParams, dt: f64, freezing: DensityFreezing) -> Result<Self> {
        params.validate()?;
        if !dt.is_finite() {
            return Err(Error::NonFinite("time step"));
        }
        Ok(Self { params: *params, dvr: DvrTransform::new(&params.lattice), freezing, dt })
    }

    pub fn params(&self) -> &GPParams {
        &self.params
    }

    pub fn dvr(&self) -> &DvrTransform {
        &self.dvr
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn freezing(&self) -> DensityFreezing {
        self.freezing
    }

    /// `H(phi) + beta R^dagger diag(g) R`.
    pub fn hamiltonian(&self, g: &Array1<f64>, phi: f64) -> ComplexMatrix {
        let mut h = hamiltonian_at(&self.params.lattice, phi);
        if self.params.beta != 0.0 {
            h.scaled_add(Complex64::new(self.params.beta, 0.0), &self.dvr.grid_operator(g));
        }
        h
    }

    /// Advances `psi` by one step at phase `phi`. `guess` seeds the
    /// fixed-point iteration of the implicit rule.
    pub fn step(&self, psi: &ComplexVector, phi: f64, guess: Option<&Array1<f64>>) -> Result<GpStep> {
        let g0 = self.dvr.density(psi);
        let theta = self.freezing.start_weight();
        let mut gbar = match guess {
            Some(g) if theta < 1.0 => g.clone(),
            _ => g0.clone(),
        };
        let mut residual = f64::INFINITY;
        for it in 1..=FIXED_POINT_MAX_ITER {
            let eigen = HermitianEigen::new(&self.hamiltonian(&gbar, phi))?;
            let state = eigen.evolve(psi, self.dt);
            if theta == 1.0 || self.params.beta == 0.0 {
                return Ok(GpStep { state, eigen, frozen_density: gbar, iterations: it });
            }
            let g1 = self.dvr.density(&state);
            let next = &g0 * theta + &g1 * (1.0 - theta);
            residual = next.iter().zip(gbar.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if residual < FIXED_POINT_TOL {
                return Ok(GpStep { state, eigen, frozen_density: gbar, iterations: it });
            }
            gbar = next;
        }
        Err(Error::FixedPoint { step: 0, residual })
    }

    /// Inverse of [`step`](Self::step): the state whose forward step lands
    /// on `psi_next`.
    pub fn step_back(&self, psi_next: &ComplexVector, phi: f64) -> Result<GpStep> {
        let g1 = self.dvr.density(psi_next);
        let theta = self.freezing.start_weight();
        // with theta = 1 the frozen density belongs to the unknown state
        let mut gbar = g1.clone();
        let mut residual = f64::INFINITY;
        for it in 1..=FIXED_POINT_MAX_ITER {
            let eigen = HermitianEigen::new(&self.hamiltonian(&gbar, phi))?;
            let state = eigen.evolve(psi_next, -self.dt);
            if self.params.beta == 0.0 {
                return Ok(GpStep { state, eigen, frozen_density: gbar, iterations: it });
            }
            let g0 = self.dvr.density(&state);
            let next = &g0 * theta + &g1 * (1.0 - theta);
            residual = next.iter().zip(gbar.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if residual < FIXED_POINT_TOL {
                return Ok(GpStep { state, eigen, frozen_density: gbar, iterations: it });
            }
            gbar = next;
        }
        Err(Error::FixedPoint { step: 0, residual })
    }

    /// Propagates through `phases`, keeping every frozen decomposition.
    pub fn run(&self, psi0: &ComplexVector, phases: &[f64]) -> Result<GpRun> {
        self.params.lattice.check_state(psi0)?;
        let mut states = Vec::with_capacity(phases.len() + 1);
        let mut eigens = Vec::with_capacity(phases.len());
        states.push(psi0.clone());
        // the offset between frozen and start density changes slowly
        let mut offset: Option<Array1<f64>> = None;
        for (k, &phi) in phases.iter().enumerate() {
            let psi = &states[k];
            let guess = offset.as_ref().map(|o| self.dvr.density(psi) + o);
            let step = self.step(psi, phi, guess.as_ref()).map_err(|e| match e {
                Error::FixedPoint { residual, .. } => Error::FixedPoint { step: k, residual },
                other => other,
            })?;
            offset = Some(&step.frozen_density - &self.dvr.density(psi));
            states.push(step.state);
            eigens.push(step.eigen);
        }
        Ok(GpRun { states, eigens })
    }

    /// Exact discrete adjoint of one step.
    ///
    /// Given the adjoint `chi_next` at the end of step `k` (the gradient of
    /// the objective with respect to `psi_next`), returns the adjoint at the
    /// start of the step and the sensitivity matrix `T` such that the
    /// objective changes by `Re sum_ij B_ij T_ij` when the frozen
    /// Hamiltonian is perturbed by `B` at fixed density.
    pub fn adjoint_step(
        &self,
        eigen: &HermitianEigen,
        psi: &ComplexVector,
        psi_next: &ComplexVector,
        chi_next: &ComplexVector,
    ) -> Result<(ComplexVector, ComplexMatrix)> {
        let beta = self.params.beta;
        let theta = self.freezing.start_weight();
        let n = self.dvr.dim();
        let scale = beta * n as f64 / PI;

        let mut nu = chi_next.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..FIXED_POINT_MAX_ITER {
            let t = eigen.step_sensitivity(self.dt, &nu, psi);
            if beta == 0.0 {
                return Ok((eigen.evolve(&nu, -self.dt), t));
            }
            let a = self.dvr.project_diagonal(&t).mapv(|z| z.re * scale);
            let next_nu = if theta < 1.0 {
                chi_next + &self.dvr.apply_grid(&a, psi_next).mapv(|z| z * (1.0 - theta))
            } else {
                chi_next.clone()
            };
            residual = (&next_nu - &nu).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale_ref = nu.iter().map(|z| z.norm()).fold(1e-300, f64::max);
            nu = next_nu;
            if theta == 1.0 || residual <= 1e-14 * scale_ref {
                let chi = eigen.evolve(&nu, -self.dt) + self.dvr.apply_grid(&a, psi).mapv(|z| z * theta);
                let t = if theta == 1.0 { t } else { eigen.step_sensitivity(self.dt, &nu, psi) };
                return Ok((chi, t));
            }
        }
        Err(Error::FixedPoint { step: 0, residual })
    }
}

/// Forward GP propagation with the default step-averaged density.
pub fn propagate_gp(p: &GPParams, psi0: &ComplexVector, control: &ControlGrid) -> Result<Trajectory> {
    propagate_gp_with(p, psi0, control, DensityFreezing::default())
}

pub fn propagate_gp_with(
    p: &GPParams,
    psi0: &ComplexVector,
    control: &ControlGrid,
    freezing: DensityFreezing,
) -> Result<Trajectory> {
    control.expect_channels(1)?;
    let prop = GpPropagator::new(p, control.dt(), freezing)?;
    let run = prop.run(psi0, control.channel(0))?;
    let times = (0..=control.n_steps()).map(|k| control.t_start(k)).collect();
    Ok(Trajectory { times, states: run.states })
}

/// Right-hand side of the momentum-space GP equation,
/// `-i [H(phi) c + (beta / 2 pi) sum_{m,l} conj(c_m) c_l c_{n+m-l}]`, with
/// coefficients outside the truncation taken as zero.
fn gp_rhs(p: &GPParams, h: &ComplexMatrix, c: &ComplexVector) -> ComplexVector {
    let dim = c.len() as i64;
    let mut out = h.dot(c);
    if p.beta != 0.0 {
        let pref = p.beta / (2.0 * PI);
        for n in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..dim {
                let cm = c[m as usize].conj();
                for l in 0..dim {
                    let k = n + m - l;
                    if (0..dim).contains(&k) {
                        acc += cm * c[l as usize] * c[k as usize];
                    }
                }
            }
            out[n as usize] += acc * pref;
        }
    }
    out.mapv(|z| -I * z)
}

/// RK4 integration of the momentum-space convolution form, used as an
/// independent check of [`propagate_gp`]. `n_steps` must be a multiple of
/// the number of control steps; the returned trajectory holds the state at
/// every RK4 step.
pub fn propagate_gp_rk4(
    p: &GPParams,
    psi0: &ComplexVector,
    control: &ControlGrid,
    n_steps: usize,
) -> Result<Trajectory> {
    p.validate()?;
    p.lattice.check_state(psi0)?;
    control.expect_channels(1)?;
    if n_steps == 0 || n_steps % control.n_steps() != 0 {
        return Err(Error::InvalidParameter(format!(
            "RK4 step count {n_steps} is not a multiple of {} control steps",
            control.n_steps()
        )));
    }
    let sub = n_steps / control.n_steps();
    let dt = control.t_f() / n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(psi0.clone());
    let mut y = psi0.clone();
    for k in 0..control.n_steps() {
        let h = hamiltonian_at(&p.lattice, control.value(0, k));
        let f = |_t: f64, c: &ComplexVector| gp_rhs(p, &h, c);
        for j in 0..sub {
            let step = k * sub + j;
            y = crate::numkernel::rk4_step(f, &y, step as f64 * dt, dt);
            times.push((step + 1) as f64 * dt);
            states.push(y.clone());
        }
    }
    Ok(Trajectory { times, states })
}

/// Paired state and adjoint trajectories from the extended backward pass.
#[derive(Clone, Debug)]
pub struct ExtendedBackward {
    /// `psi_k`, `k = 0..=n_steps`.
    pub states: Vec<ComplexVector>,
    /// `chi_k`, `k = 0..=n_steps`.
    pub adjoints: Vec<ComplexVector>,
    /// Frozen Hamiltonian of every step.
    pub eigens: Vec<HermitianEigen>,
}

/// Propagates the state and its adjoint backward together with the
/// `2N x 2N` generator
///
/// `[[H_GP, 0], [-2 i beta R^dagger diag(I) R, H_GP]]`,
///
/// where `I_j = Im[conj(chi) psi](x_j)` is frozen at the step end and
/// `H_GP` uses the same density as the forward step, so the state component
/// retraces the forward trajectory.
pub fn backward_extended(
    p: &GPParams,
    psi_f: &ComplexVector,
    chi_f: &ComplexVector,
    control: &ControlGrid,
    freezing: DensityFreezing,
) -> Result<ExtendedBackward> {
    p.lattice.check_state(psi_f)?;
    p.lattice.check_state(chi_f)?;
    control.expect_channels(1)?;
    let prop = GpPropagator::new(p, control.dt(), freezing)?;
    let n = p.lattice.dim();
    let dt = control.dt();
    let steps = control.n_steps();

    let mut states = vec![psi_f.clone()];
    let mut adjoints = vec![chi_f.clone()];
    let mut eigens = Vec::with_capacity(steps);
    for k in (0..steps).rev() {
        let phi = control.value(0, k);
        let (psi1, chi1) = (states.last().unwrap(), adjoints.last().unwrap());
        let back = prop.step_back(psi1, phi).map_err(|e| match e {
            Error::FixedPoint { residual, .. } => Error::FixedPoint { step: k, residual },
            other => other,
        })?;
        let h = prop.hamiltonian(&back.frozen_density, phi);
        let coupling = prop.dvr().grid_operator(&prop.dvr().overlap_imag(chi1, psi1)).mapv(|z| z * (-2.0 * I * p.beta));
        let mut gen = ComplexMatrix::zeros((2 * n, 2 * n));
        gen.slice_mut(ndarray::s![..n, ..n]).assign(&h);
        gen.slice_mut(ndarray::s![n.., n..]).assign(&h);
        gen.slice_mut(ndarray::s![n.., ..n]).assign(&coupling);
        let prop_back = general_expm(&gen.mapv(|z| I * dt * z))?;
        let mut stacked = ComplexVector::zeros(2 * n);
        stacked.slice_mut(ndarray::s![..n]).assign(psi1);
        stacked.slice_mut(ndarray::s![n..]).assign(chi1);
        let out = prop_back.dot(&stacked);
        states.push(out.slice(ndarray::s![..n]).to_owned());
        adjoints.push(out.slice(ndarray::s![n..]).to_owned());
        eigens.push(back.eigen);
    }
    states.reverse();
    adjoints.reverse();
    eigens.reverse();
    Ok(ExtendedBackward { states, adjoints, eigens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice1d::propagate_linear;
    use crate::numkernel::{adjoint, hermiticity_defect, identity, max_abs_diff, norm, test_support::random_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lattice(s: f64, q: f64, n_max: usize) -> Lattice1DParams {
        Lattice1DParams::new(s, q, n_max).unwrap()
    }

    fn basis(p: &Lattice1DParams, n: i64) -> ComplexVector {
        let mut v = ComplexVector::zeros(p.dim());
        v[p.index_of(n).unwrap()] = Complex64::new(1.0, 0.0);
        v
    }

    /// Smooth state concentrated on low momenta, so the grid and the
    /// truncated convolution treat the cubic term alike.
    fn smooth_state(p: &Lattice1DParams) -> ComplexVector {
        let v: ComplexVector =
            p.orders().map(|n| Complex64::from_polar((-(n as f64).powi(2) / 2.0).exp(), 0.3 * n as f64)).collect();
        let nv = norm(&v);
        v.mapv(|z| z / nv)
    }

    #[test]
    fn transform_single_point() {
        let t = DvrTransform::new(&lattice(5.0, 0.0, 0));
        assert!((t.matrix()[[0, 0]] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn transform_is_unitary() {
        for (n_max, q, tol) in [(1, 0.0, 1e-14), (10, 0.25, 1e-12), (100, -0.4, 1e-12)] {
            let t = DvrTransform::new(&lattice(5.0, q, n_max));
            let r = t.matrix();
            assert!(max_abs_diff(&matmul(&adjoint(r), r), &identity(r.nrows())) < tol);
            assert!(max_abs_diff(&matmul(r, &adjoint(r)), &identity(r.nrows())) < tol);
        }
    }

    #[test]
    fn plane_wave_density_is_uniform() {
        let p = lattice(5.0, 0.0, 10);
        let t = DvrTransform::new(&p);
        for n in [0, 1] {
            let g = t.density(&basis(&p, n));
            assert!(g.iter().all(|x| (x - 1.0 / (2.0 * PI)).abs() < 1e-14));
        }
    }

    #[test]
    fn two_mode_density() {
        let p = lattice(5.0, 0.0, 10);
        let t = DvrTransform::new(&p);
        let psi = (basis(&p, 0) + basis(&p, 1)).mapv(|z| z / 2f64.sqrt());
        let g = t.density(&psi);
        for (gj, x) in g.iter().zip(t.grid_points()) {
            assert!((gj - (1.0 + x.cos()) / (2.0 * PI)).abs() < 1e-14);
        }
        let dm = density_dvr(&t, &psi);
        assert_eq!(dm.nrows(), p.dim());
        assert!(dm.diag().iter().all(|z| z.im == 0.0 && z.re >= 0.0));
    }

    #[test]
    fn quadrature_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in [0.0, 0.3] {
            let p = lattice(5.0, q, 10);
            let t = DvrTransform::new(&p);
            let psi = random_state(p.dim(), &mut rng);
            let total: f64 = t.density(&psi).sum() * t.weight();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_reductions() {
        let l = lattice(5.0, 0.1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_state(l.dim(), &mut rng);
        let h0 = gp_hamiltonian(&GPParams::new(l, 0.0).unwrap(), &psi, 0.4).unwrap();
        assert!(max_abs_diff(&h0, &hamiltonian_at(&l, 0.4)) < 1e-15);

        let h1 = gp_hamiltonian(&GPParams::new(l, 1.0).unwrap(), &psi, 0.4).unwrap();
        assert!(hermiticity_defect(&h1).0 < 1e-12);

        let l0 = lattice(5.0, 0.0, 10);
        let flat = gp_hamiltonian(&GPParams::new(l0, 0.7).unwrap(), &basis(&l0, 0), 0.0).unwrap();
        let shift = identity(l0.dim()).mapv(|z| z * (0.7 / (2.0 * PI)));
        assert!(max_abs_diff(&flat, &(hamiltonian_at(&l0, 0.0) + shift)) < 1e-14);
    }

    #[test]
    fn overlap_cases() {
        let p = lattice(5.0, 0.2, 6);
        let t = DvrTransform::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(p.dim(), &mut rng);
        assert!(t.overlap_imag(&psi, &psi).iter().all(|x| x.abs() < 1e-15));
        let rotated = psi.mapv(|z| z * I);
        let g = t.density(&psi);
        for (a, b) in t.overlap_imag(&rotated, &psi).iter().zip(g.iter()) {
            assert!((a + b).abs() < 1e-14);
        }
        // direct evaluation of the plane-wave sums on the grid
        let chi = random_state(p.dim(), &mut rng);
        let eval = |c: &ComplexVector, x: f64| -> Complex64 {
            p.orders()
                .zip(c.iter())
                .map(|(n, z)| z * Complex64::from_polar(1.0, (n as f64 + p.q) * x))
                .sum::<Complex64>()
                / (2.0 * PI).sqrt()
        };
        let got = overlap_imag_dvr(&t, &chi, &psi);
        for (j, x) in t.grid_points().into_iter().enumerate() {
            let expected = (eval(&chi, x).conj() * eval(&psi, x)).im;
            assert!((got[[j, j]].re - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_beta_matches_linear_propagation() {
        let l = lattice(5.0, 0.0, 10);
        let p = GPParams::new(l, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi0 = random_state(l.dim(), &mut rng);
        let values: Vec<f64> = (0..100).map(|k| (k as f64 * 0.1).sin()).collect();
        let control = ControlGrid::new(2.0, vec![values], vec![true]).unwrap();
        let lin = propagate_linear(&l, &psi0, &control).unwrap();
        for freezing in [DensityFreezing::StepStart, DensityFreezing::StepAverage] {
            let gp = propagate_gp_with(&p, &psi0, &control, freezing).unwrap();
            let dev = (gp.final_state() - lin.final_state()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "{freezing:?}: {dev}");
        }
    }

    #[test]
    fn uniform_density_only_adds_a_phase() {
        // Without a lattice a plane wave keeps its flat density, so the
        // nonlinear term is a constant shift beta / 2 pi.
        let l = lattice(0.0, 0.0, 10);
        let psi0 = basis(&l, 0);
        let control = ControlGrid::constant(7.6, 200, 1, 0.0).unwrap();
        let lin = propagate_linear(&l, &psi0, &control).unwrap();
        let gp = propagate_gp(&GPParams::new(l, 1.0).unwrap(), &psi0, &control).unwrap();
        let phase = Complex64::from_polar(1.0, -7.6 / (2.0 * PI));
        for (a, b) in gp.final_state().iter().zip(lin.final_state().iter()) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-10);
            assert!((a - b * phase).norm() < 1e-10);
        }
    }

    #[test]
    fn norm_and_energy_are_conserved() {
        let l = lattice(5.0, 0.0, 10);
        let p = GPParams::new(l, 1.0).unwrap();
        let psi0 = smooth_state(&l);
        let control = ControlGrid::constant(7.6, 1520, 1, 0.3).unwrap();
        let traj = propagate_gp(&p, &psi0, &control).unwrap();
        let e0 = gp_energy(&p, &psi0, 0.3).unwrap();
        for s in &traj.states {
            assert!((norm(s) - 1.0).abs() < 1e-10);
        }
        let drift = (gp_energy(&p, traj.final_state(), 0.3).unwrap() - e0).abs();
        assert!(drift < 1e-9, "energy drift {drift}");
    }

    #[test]
    fn explicit_freezing_drifts_in_energy() {
        let l = lattice(5.0, 0.0, 10);
        let p = GPParams::new(l, 1.0).unwrap();
        let psi0 = smooth_state(&l);
        let control = ControlGrid::constant(7.6, 1520, 1, 0.3).unwrap();
        let traj = propagate_gp_with(&p, &psi0, &control, DensityFreezing::StepStart).unwrap();
        let e0 = gp_energy(&p, &psi0, 0.3).unwrap();
        let drift = (gp_energy(&p, traj.final_state(), 0.3).unwrap() - e0).abs();
        assert!(drift > 1e-6);
        assert!(traj.states.iter().all(|s| (norm(s) - 1.0).abs() < 1e-10));
    }

    #[test]
    fn rk4_oracle_single_step() {
        let l = lattice(5.0, 0.0, 10);
        let p = GPParams::new(l, 1.0).unwrap();
        let psi0 = smooth_state(&l);
        let control = ControlGrid::constant(1e-3, 1, 1, 0.2).unwrap();
        let a = propagate_gp(&p, &psi0, &control).unwrap();
        let b = propagate_gp_rk4(&p, &psi0, &control, 1).unwrap();
        let dev = (a.final_state() - b.final_state()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn rk4_oracle_zero_beta_is_linear() {
        let l = lattice(5.0, 0.0, 4);
        let p = GPParams::new(l, 0.0).unwrap();
        let psi0 = smooth_state(&l);
        let control = ControlGrid::constant(1.0, 10, 1, 0.5).unwrap();
        let a = propagate_gp_rk4(&p, &psi0, &control, 1000).unwrap();
        let b = propagate_linear(&l, &psi0, &control).unwrap();
        let dev = (a.final_state() - b.final_state()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-10);
        assert!(propagate_gp_rk4(&p, &psi0, &control, 15).is_err());
    }

    #[test]
    fn step_back_inverts_step() {
        let l = lattice(5.0, 0.0, 6);
        let p = GPParams::new(l, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_state(l.dim(), &mut rng);
        for freezing in [DensityFreezing::StepStart, DensityFreezing::StepAverage] {
            let prop = GpPropagator::new(&p, 0.02, freezing).unwrap();
            let fwd = prop.step(&psi, 0.7, None).unwrap();
            let back = prop.step_back(&fwd.state, 0.7).unwrap();
            let dev = (&back.state - &psi).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-11, "{freezing:?}: {dev}");
        }
    }

    #[test]
    fn extended_backward_retraces_and_reduces() {
        let l = lattice(5.0, 0.0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let psi0 = random_state(l.dim(), &mut rng);
        let chi_f = random_state(l.dim(), &mut rng);
        let values: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).cos()).collect();
        let control = ControlGrid::new(1.0, vec![values], vec![true]).unwrap();

        // beta = 0: both components see the same linear propagator
        let p0 = GPParams::new(l, 0.0).unwrap();
        let fwd = propagate_gp(&p0, &psi0, &control).unwrap();
        let ext = backward_extended(&p0, fwd.final_state(), &chi_f, &control, DensityFreezing::default()).unwrap();
        let dev = (&ext.states[0] - &psi0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9);
        let chi_fwd = propagate_linear(&l, &ext.adjoints[0], &control).unwrap();
        let dev = (chi_fwd.final_state() - &chi_f).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9);

        let p = GPParams::new(l, 0.5).unwrap();
        let fwd = propagate_gp(&p, &psi0, &control).unwrap();
        let ext = backward_extended(&p, fwd.final_state(), &chi_f, &control, DensityFreezing::default()).unwrap();
        for (a, b) in ext.states.iter().zip(fwd.states.iter()) {
            assert!((a - b).iter().all(|z| z.norm() < 1e-6));
        }
    }

    #[test]
    fn real_proportional_adjoint_has_no_coupling() {
        let l = lattice(5.0, 0.0, 4);
        let t = DvrTransform::new(&l);
        let psi = smooth_state(&l);
        let chi = psi.mapv(|z| z * 0.8);
        let coupling = t.grid_operator(&t.overlap_imag(&chi, &psi));
        assert!(coupling.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn adjoint_step_matches_finite_difference() {
        let l = lattice(5.0, 0.0, 4);
        let p = GPParams::new(l, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = random_state(l.dim(), &mut rng);
        let target = random_state(l.dim(), &mut rng);
        for freezing in [DensityFreezing::StepStart, DensityFreezing::StepAverage] {
            let prop = GpPropagator::new(&p, 0.1, freezing).unwrap();
            let fwd = prop.step(&psi, 0.4, None).unwrap();
            // objective Re<target|psi_next>, so chi_next = target
            let (chi, _) = prop.adjoint_step(&fwd.eigen, &psi, &fwd.state, &target).unwrap();
            let dir = random_state(l.dim(), &mut rng);
            let eps = 1e-6;
            let f = |x: &ComplexVector| crate::numkernel::inner(&target, &prop.step(x, 0.4, None).unwrap().state).re;
            let fd = (f(&(&psi + &dir.mapv(|z| z * eps))) - f(&(&psi - &dir.mapv(|z| z * eps)))) / (2.0 * eps);
            let analytic = crate::numkernel::inner(&chi, &dir).re;
            assert!((fd - analytic).abs() < 1e-7, "{freezing:?}: {fd} vs {analytic}");
        }
    }
}
