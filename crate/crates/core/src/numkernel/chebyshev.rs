//! Matrix-free propagation `exp(-i H dt) v` by Chebyshev expansion, and the
//! first-order response of that product to a perturbation of `H`.
//!
//! Only products `H x` are needed, so sparse Hamiltonians never have to be
//! diagonalized. The expansion converges faster than exponentially once the
//! order exceeds `a dt`, with `a` the half width of the spectral interval.

use num_complex::Complex64;

use super::ComplexVector;
use crate::error::{Error, Result};

/// Expansion terms below this magnitude are dropped.
const COEFF_TOL: f64 = 1e-18;

/// `J_0(z) .. J_kmax(z)` for `z >= 0` by Miller's backward recurrence.
pub fn bessel_j_sequence(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let mut start = kmax.max(z.ceil() as usize) + 40 + (2.0 * z.sqrt()) as usize;
    start += start % 2;
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k <= kmax {
            out[k] = cur;
        }
        if k % 2 == 0 {
            norm += if k == 0 { cur } else { 2.0 * cur };
        }
        if k == 0 {
            break;
        }
        let prev = 2.0 * k as f64 / z * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e250 {
            let scale = 1e-250;
            cur *= scale;
            next *= scale;
            norm *= scale;
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Chebyshev expansion of `exp(-i x dt)` on the interval `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct ChebyshevExpansion {
    center: f64,
    half_width: f64,
    /// Global phase `exp(-i center dt)` folded into every coefficient.
    coeffs: Vec<Complex64>,
}

impl ChebyshevExpansion {
    /// The spectrum of every operator later passed to `apply` must lie in
    /// `[lo, hi]`.
    pub fn new(lo: f64, hi: f64, dt: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && dt.is_finite()) {
            return Err(Error::NonFinite("Chebyshev interval"));
        }
        if hi < lo {
            return Err(Error::InvalidParameter(format!("empty spectral interval [{lo}, {hi}]")));
        }
        let center = 0.5 * (hi + lo);
        // a zero width would divide by zero; any positive width is valid
        let half_width = (0.5 * (hi - lo)).max(1e-8);
        let z = half_width * dt.abs();
        let kmax = (z.ceil() as usize) + 60;
        let j = bessel_j_sequence(z, kmax + 2);
        let mut last = 0;
        for (k, v) in j.iter().enumerate() {
            if v.abs() > COEFF_TOL {
                last = k;
            }
        }
        // (-i)^k for forward time, (+i)^k backward
        let unit = Complex64::new(0.0, -dt.signum());
        let phase = Complex64::from_polar(1.0, -center * dt);
        let mut power = Complex64::new(1.0, 0.0);
        let coeffs = (0..=last + 2)
            .map(|k| {
                let c = if k == 0 { 1.0 } else { 2.0 } * j[k] * power * phase;
                power *= unit;
                c
            })
            .collect();
        Ok(Self { center, half_width, coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Applies `(H - center) / half_width` through `op`, which writes `H x` into `y`.
    fn scaled<F>(&self, op: &F, x: &[Complex64], y: &mut [Complex64])
    where
        F: Fn(&[Complex64], &mut [Complex64]),
    {
        op(x, y);
        let inv = 1.0 / self.half_width;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (*yi - xi * self.center) * inv;
        }
    }

    /// `exp(-i H dt) v`.
    pub fn apply<F>(&self, op: F, v: &ComplexVector) -> ComplexVector
    where
        F: Fn(&[Complex64], &mut [Complex64]),
    {
        let n = v.len();
        let mut prev = v.to_vec();
        let mut out: Vec<Complex64> = prev.iter().map(|x| x * self.coeffs[0]).collect();
        if self.coeffs.len() == 1 {
            return ComplexVector::from(out);
        }
        let mut cur = vec![Complex64::new(0.0, 0.0); n];
        self.scaled(&op, &prev, &mut cur);
        axpy(&mut out, self.coeffs[1], &cur);
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for c in &self.coeffs[2..] {
            self.scaled(&op, &cur, &mut next);
            for (nx, p) in next.iter_mut().zip(&prev) {
                *nx = 2.0 * *nx - p;
            }
            axpy(&mut out, *c, &next);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        ComplexVector::from(out)
    }

    /// `<lambda| dU[B_j] |psi>` for every direction `B_j`, where
    /// `U = exp(-i H dt)` and `dU[B]` is its derivative along `H -> H + B`.
    ///
    /// `directions[j]` writes `B_j x` into `y`. Differentiates the
    /// three-term recurrence, so the result is exact for the truncated
    /// series.
    pub fn response<F, G>(&self, op: F, directions: &[G], lambda: &ComplexVector, psi: &ComplexVector) -> Vec<Complex64>
    where
        F: Fn(&[Complex64], &mut [Complex64]),
        G: Fn(&[Complex64], &mut [Complex64]),
    {
        let n = psi.len();
        let m = directions.len();
        let zero = Complex64::new(0.0, 0.0);
        let inv = 1.0 / self.half_width;
        let project = |v: &[Complex64]| -> Complex64 { lambda.iter().zip(v).map(|(l, x)| l.conj() * x).sum() };
        let dir = |j: usize, x: &[Complex64], y: &mut [Complex64]| {
            directions[j](x, y);
            for yi in y.iter_mut() {
                *yi *= inv;
            }
        };
        let mut acc = vec![zero; m];
        if self.coeffs.len() == 1 {
            return acc;
        }

        let mut t_prev = psi.to_vec();
        let mut t_cur = vec![zero; n];
        self.scaled(&op, &t_prev, &mut t_cur);
        // s_0 = 0, s_1 = B psi
        let mut s_prev = vec![vec![zero; n]; m];
        let mut s_cur = vec![vec![zero; n]; m];
        for j in 0..m {
            dir(j, &t_prev, &mut s_cur[j]);
            acc[j] += self.coeffs[1] * project(&s_cur[j]);
        }
        let mut t_next = vec![zero; n];
        let mut s_next = vec![zero; n];
        let mut scratch = vec![zero; n];
        for c in &self.coeffs[2..] {
            for j in 0..m {
                // s_{k+1} = 2 A s_k + 2 B t_k - s_{k-1}
                self.scaled(&op, &s_cur[j], &mut s_next);
                dir(j, &t_cur, &mut scratch);
                for ((sn, b), sp) in s_next.iter_mut().zip(&scratch).zip(&s_prev[j]) {
                    *sn = 2.0 * (*sn + b) - sp;
                }
                acc[j] += c * project(&s_next);
                std::mem::swap(&mut s_prev[j], &mut s_cur[j]);
                std::mem::swap(&mut s_cur[j], &mut s_next);
            }
            self.scaled(&op, &t_cur, &mut t_next);
            for (tn, tp) in t_next.iter_mut().zip(&t_prev) {
                *tn = 2.0 * *tn - tp;
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        acc
    }
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{hermiticity_defect, test_support::random_state, ComplexMatrix, HermitianEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_op(h: &ComplexMatrix) -> impl Fn(&[Complex64], &mut [Complex64]) + '_ {
        move |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = (0..x.len()).map(|j| h[[i, j]] * x[j]).sum();
            }
        }
    }

    fn random_hermitian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = Complex64::new(scale * rng.random_range(-1.0..1.0), 0.0);
            for j in i + 1..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                h[[i, j]] = z;
                h[[j, i]] = z.conj();
            }
        }
        assert_eq!(hermiticity_defect(&h).0, 0.0);
        h
    }

    /// Gershgorin interval.
    fn bounds(h: &ComplexMatrix) -> (f64, f64) {
        let n = h.nrows();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| h[[i, j]].norm()).sum();
            lo = lo.min(h[[i, i]].re - r);
            hi = hi.max(h[[i, i]].re + r);
        }
        (lo, hi)
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 3);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        let j = bessel_j_sequence(10.0, 5);
        assert!((j[0] - -0.245_935_764_451_348_3).abs() < 1e-14);
        assert!((j[5] - -0.234_061_528_186_793_6).abs() < 1e-14);
        let j = bessel_j_sequence(80.0, 2);
        assert!((j[0] - -0.069_742_165_512_210_05).abs() < 1e-13, "{}", j[0]);
        assert_eq!(bessel_j_sequence(0.0, 2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, scale, dt) in [(6, 1.0, 0.3), (15, 20.0, 0.2), (30, 60.0, -0.1), (8, 0.0, 1e-3)] {
            let h = random_hermitian(n, scale, &mut rng);
            let (lo, hi) = bounds(&h);
            let cheb = ChebyshevExpansion::new(lo, hi, dt).unwrap();
            let v = random_state(n, &mut rng);
            let got = cheb.apply(dense_op(&h), &v);
            let want = HermitianEigen::new(&h).unwrap().evolve(&v, dt);
            let err = (&got - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} err={err:e}");
        }
    }

    #[test]
    fn response_matches_exact_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let h = random_hermitian(n, 15.0, &mut rng);
        let b1 = random_hermitian(n, 1.0, &mut rng);
        let b2 = random_hermitian(n, 3.0, &mut rng);
        let (lo, hi) = bounds(&h);
        let dt = 0.25;
        let cheb = ChebyshevExpansion::new(lo, hi, dt).unwrap();
        let lambda = random_state(n, &mut rng);
        let psi = random_state(n, &mut rng);
        let got = cheb.response(dense_op(&h), &[dense_op(&b1), dense_op(&b2)], &lambda, &psi);
        let t = HermitianEigen::new(&h).unwrap().step_sensitivity(dt, &lambda, &psi);
        for (g, b) in got.iter().zip([&b1, &b2]) {
            let want: Complex64 = b.iter().zip(t.iter()).map(|(x, y)| x * y).sum();
            assert!((g - want).norm() < 1e-11 * want.norm().max(1.0), "{g} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(ChebyshevExpansion::new(1.0, 0.0, 0.1).is_err());
        assert!(ChebyshevExpansion::new(f64::NAN, 0.0, 0.1).is_err());
        assert_eq!(ChebyshevExpansion::new(2.0, 2.0, 0.1).unwrap().order(), 3);
    }
}
