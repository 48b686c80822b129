//! Dense complex kernels: Hermitian propagators, the general matrix
//! exponential, exact step sensitivities and a fixed-step RK4 integrator.
//!
//! Matrices and vectors are plain `ndarray` containers. Eigendecompositions,
//! large products and LU solves go through `faer`.

use faer::linalg::solvers::Solve;
use faer::{MatRef, Side};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

mod chebyshev;

pub use chebyshev::{bessel_j_sequence, ChebyshevExpansion};

pub type ComplexMatrix = Array2<Complex64>;
pub type ComplexVector = Array1<Complex64>;

/// Entrywise tolerance on `|H - H^dagger|` accepted by the Hermitian kernels.
pub const HERMITICITY_TOL: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn as_faer(a: &ComplexMatrix) -> MatRef<'_, Complex64> {
    let (r, c) = a.dim();
    let slice = a.as_slice().expect("kernel matrices are kept in standard layout");
    MatRef::from_row_major_slice(slice, r, c)
}

fn from_faer(m: MatRef<'_, Complex64>) -> ComplexMatrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn standard(a: &ComplexMatrix) -> std::borrow::Cow<'_, ComplexMatrix> {
    if a.is_standard_layout() {
        std::borrow::Cow::Borrowed(a)
    } else {
        std::borrow::Cow::Owned(a.as_standard_layout().to_owned())
    }
}

/// Dense product `a * b`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let (a, b) = (standard(a), standard(b));
    let (fa, fb) = (as_faer(&a), as_faer(&b));
    from_faer((fa * fb).as_ref())
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> ComplexMatrix {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

/// `<a|b>`, antilinear in the first argument.
pub fn inner(a: &ComplexVector, b: &ComplexVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &ComplexVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entrywise `|H - H^dagger|` and where it occurs.
pub fn hermiticity_defect(h: &ComplexMatrix) -> (f64, (usize, usize)) {
    let n = h.nrows();
    let mut worst = (0.0, (0, 0));
    for i in 0..n {
        for j in i..n {
            let d = (h[[i, j]] - h[[j, i]].conj()).norm();
            if d > worst.0 {
                worst = (d, (i, j));
            }
        }
    }
    worst
}

/// `max |U^dagger U - I|` entrywise.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    max_abs_diff(&matmul(&adjoint(u), u), &identity(u.ncols()))
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn check_square(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(())
}

fn check_hermitian(h: &ComplexMatrix) -> Result<()> {
    check_square(h)?;
    let (defect, (row, col)) = hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(Error::NotHermitian { defect, row, col });
    }
    Ok(())
}

/// Magnitudes below which kernel entries are set to zero. Eigenvectors of
/// banded Hamiltonians decay super-exponentially, and products of such
/// tails otherwise land in the subnormal range where arithmetic is very slow.
const FLUSH_BELOW: f64 = 1e-60;

fn flush(z: Complex64) -> Complex64 {
    if z.re.abs() < FLUSH_BELOW && z.im.abs() < FLUSH_BELOW {
        Complex64::new(0.0, 0.0)
    } else {
        z
    }
}

/// `sin(x)/x` with the removable singularity filled in.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Spectral decomposition `H = V diag(values) V^dagger` of a Hermitian matrix.
///
/// Besides the propagator itself this carries everything needed to
/// differentiate `exp(-i H dt)` with respect to a perturbation of `H`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Array1<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        check_hermitian(h)?;
        let h = standard(h);
        let evd = as_faer(&h).self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
        let s = evd.S().column_vector();
        let values = Array1::from_iter((0..s.nrows()).map(|i| s[i].re));
        let mut vectors = from_faer(evd.U());
        vectors.mapv_inplace(flush);
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V^dagger v`
    pub fn to_eigenbasis(&self, v: &ComplexVector) -> ComplexVector {
        let n = self.dim();
        let mut out = ComplexVector::zeros(n);
        for a in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += self.vectors[[i, a]].conj() * v[i];
            }
            out[a] = acc;
        }
        out
    }

    /// `V w`
    pub fn from_eigenbasis(&self, w: &ComplexVector) -> ComplexVector {
        self.vectors.dot(w)
    }

    /// `exp(-i H dt)` as a dense matrix.
    pub fn propagator(&self, dt: f64) -> ComplexMatrix {
        let phases = self.values.mapv(|l| (-I * l * dt).exp());
        let scaled = &self.vectors * &phases.view().insert_axis(ndarray::Axis(0));
        matmul(&scaled, &adjoint(&self.vectors))
    }

    /// `exp(-i H dt) v` without forming the propagator.
    pub fn evolve(&self, v: &ComplexVector, dt: f64) -> ComplexVector {
        let mut w = self.to_eigenbasis(v);
        for (wa, l) in w.iter_mut().zip(self.values.iter()) {
            *wa *= (-I * l * dt).exp();
        }
        self.from_eigenbasis(&w)
    }

    /// Sensitivity of one propagation step.
    ///
    /// Returns the matrix `T` such that, for `U = exp(-i H dt)` and any
    /// perturbation `H -> H + B`,
    /// `<lambda| dU[B] |psi> = sum_ij B_ij T_ij` holds exactly (first order
    /// in `B`). Built from the divided differences of `exp(-i x dt)` over
    /// the spectrum.
    pub fn step_sensitivity(&self, dt: f64, lambda: &ComplexVector, psi: &ComplexVector) -> ComplexMatrix {
        let n = self.dim();
        let lt = self.to_eigenbasis(lambda).mapv(flush);
        let pt = self.to_eigenbasis(psi).mapv(flush);
        let half: Vec<f64> = self.values.iter().map(|l| 0.5 * dt * l).collect();
        // exp(-i dt (la + lb)/2) factorizes into a row and a column phase.
        let left: Vec<Complex64> = (0..n).map(|a| lt[a].conj() * Complex64::from_polar(1.0, -half[a])).collect();
        let right: Vec<Complex64> = (0..n).map(|b| pt[b] * Complex64::from_polar(-dt, -half[b])).collect();
        let x = Array2::from_shape_fn((n, n), |(a, b)| left[a] * right[b] * sinc(half[a] - half[b]));
        let vconj = self.vectors.mapv(|z| z.conj());
        let vt = self.vectors.t().as_standard_layout().into_owned();
        let mut t = matmul(&matmul(&vconj, &x), &vt);
        t.mapv_inplace(|z| I * z);
        t
    }
}

/// `exp(-i H dt)` for Hermitian `H`, through the eigendecomposition.
pub fn hermitian_propagator(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !dt.is_finite() {
        return Err(Error::NonFinite("time step"));
    }
    Ok(HermitianEigen::new(h)?.propagator(dt))
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norms for which the [m/m] approximant is accurate to unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

fn norm1(a: &ComplexMatrix) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn scaled_sum(terms: &[(f64, &ComplexMatrix)], n: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros((n, n));
    for (c, m) in terms {
        out.scaled_add(Complex64::new(*c, 0.0), *m);
    }
    out
}

/// Low-order Pade numerator/denominator halves `(U, V)` for `m` in {3,5,7,9}.
fn pade_low(a: &ComplexMatrix, b: &[f64]) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.nrows();
    let eye = identity(n);
    let a2 = matmul(a, a);
    let mut powers = vec![eye, a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = matmul(powers.last().unwrap(), &a2);
        powers.push(next);
    }
    let mut odd = ComplexMatrix::zeros((n, n));
    let mut even = ComplexMatrix::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        even.scaled_add(Complex64::new(b[2 * k], 0.0), p);
        odd.scaled_add(Complex64::new(b[2 * k + 1], 0.0), p);
    }
    (matmul(a, &odd), even)
}

fn pade13(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let b = &PADE13;
    let n = a.nrows();
    let eye = identity(n);
    let a2 = matmul(a, a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);
    let inner_u = scaled_sum(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let u = matmul(a, &(matmul(&a6, &inner_u) + scaled_sum(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &eye)], n)));
    let inner_v = scaled_sum(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let v = matmul(&a6, &inner_v) + scaled_sum(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &eye)], n);
    (u, v)
}

/// `exp(A)` for a general square matrix by scaling and squaring with a
/// diagonal Pade approximant (orders 3 to 13 selected from the 1-norm).
pub fn general_expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(ComplexMatrix::zeros((0, 0)));
    }
    let a = standard(a).into_owned();
    let nrm = norm1(&a);

    let (u, v, squarings) = if nrm <= THETA3 {
        let (u, v) = pade_low(&a, &PADE3);
        (u, v, 0)
    } else if nrm <= THETA5 {
        let (u, v) = pade_low(&a, &PADE5);
        (u, v, 0)
    } else if nrm <= THETA7 {
        let (u, v) = pade_low(&a, &PADE7);
        (u, v, 0)
    } else if nrm <= THETA9 {
        let (u, v) = pade_low(&a, &PADE9);
        (u, v, 0)
    } else {
        let s = ((nrm / THETA13).log2().ceil()).max(0.0) as i32;
        let scaled = a.mapv(|z| z / 2f64.powi(s));
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };

    // (V - U) X = (V + U)
    let lhs = &v - &u;
    let rhs = &v + &u;
    let lu = as_faer(&lhs).partial_piv_lu();
    let sol = lu.solve(as_faer(&rhs));
    let mut x = from_faer(sol.as_ref());
    for _ in 0..squarings {
        x = matmul(&x, &x);
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    Ok(x)
}

/// One classical fourth-order Runge-Kutta step of `dy/dt = f(t, y)`.
pub fn rk4_step<F>(f: F, y: &ComplexVector, t: f64, dt: f64) -> ComplexVector
where
    F: Fn(f64, &ComplexVector) -> ComplexVector,
{
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &(y + &(&k1 * half)));
    let k3 = f(t + 0.5 * dt, &(y + &(&k2 * half)));
    let k4 = f(t + dt, &(y + &(&k3 * full)));
    let sixth = Complex64::new(dt / 6.0, 0.0);
    y + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * sixth)
}
