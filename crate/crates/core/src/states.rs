//! Initial and target states, fidelity and populations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gp::DvrTransform;
use crate::lattice1d::Lattice1DParams;
use crate::lattice2d::Lattice2DParams;
use crate::numkernel::{inner, norm, ComplexVector};

fn one() -> f64 {
    1.0
}

/// One term `(re + i im) |n>` of a 1D superposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term1D {
    pub n: i64,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// One term `(re + i im) |m, n>` of a 2D superposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term2D {
    pub m: i64,
    pub n: i64,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Declarative description of a state, as it appears in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    PlaneWave {
        n: i64,
    },
    Superposition {
        terms: Vec<Term1D>,
    },
    Squeezed {
        x_c: f64,
        p_c: f64,
        xi: f64,
    },
    #[serde(rename = "plane_wave_2d")]
    PlaneWave2D {
        m: i64,
        n: i64,
    },
    #[serde(rename = "superposition_2d")]
    Superposition2D {
        terms: Vec<Term2D>,
    },
}

impl TargetSpec {
    pub fn is_2d(&self) -> bool {
        matches!(self, TargetSpec::PlaneWave2D { .. } | TargetSpec::Superposition2D { .. })
    }

    pub fn realize_1d(&self, p: &Lattice1DParams) -> Result<ComplexVector> {
        match self {
            TargetSpec::PlaneWave { n } => plane_wave(*n, p),
            TargetSpec::Superposition { terms } => {
                superposition(p, &terms.iter().map(|t| (t.n, Complex64::new(t.re, t.im))).collect::<Vec<_>>())
            }
            TargetSpec::Squeezed { x_c, p_c, xi } => squeezed_state(*x_c, *p_c, *xi, p),
            _ => Err(Error::InvalidParameter("2D state used in a 1D problem".into())),
        }
    }

    pub fn realize_2d(&self, p: &Lattice2DParams) -> Result<ComplexVector> {
        match self {
            TargetSpec::PlaneWave2D { m, n } => plane_wave_2d(*m, *n, p),
            TargetSpec::Superposition2D { terms } => {
                superposition_2d(p, &terms.iter().map(|t| ((t.m, t.n), Complex64::new(t.re, t.im))).collect::<Vec<_>>())
            }
            _ => Err(Error::InvalidParameter("1D state used in a 2D problem".into())),
        }
    }
}

fn unit(dim: usize, k: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(dim);
    v[k] = Complex64::new(1.0, 0.0);
    v
}

/// `|phi_{q+n}>`.
pub fn plane_wave(n: i64, p: &Lattice1DParams) -> Result<ComplexVector> {
    Ok(unit(p.dim(), p.index_of(n)?))
}

/// `|phi_{m,n}>`.
pub fn plane_wave_2d(m: i64, n: i64, p: &Lattice2DParams) -> Result<ComplexVector> {
    Ok(unit(p.dim(), p.index_map().flatten(m, n)?))
}

fn normalized(v: ComplexVector) -> Result<ComplexVector> {
    let nv = norm(&v);
    if nv == 0.0 || !nv.is_finite() {
        return Err(Error::ZeroAmplitudes);
    }
    Ok(v.mapv(|z| z / nv))
}

/// Normalized `sum_k a_k |n_k>`. Repeated orders add up.
pub fn superposition(p: &Lattice1DParams, terms: &[(i64, Complex64)]) -> Result<ComplexVector> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter("superposition needs at least one term".into()));
    }
    let mut v = ComplexVector::zeros(p.dim());
    for &(n, a) in terms {
        v[p.index_of(n)?] += a;
    }
    normalized(v)
}

pub fn superposition_2d(p: &Lattice2DParams, terms: &[((i64, i64), Complex64)]) -> Result<ComplexVector> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter("superposition needs at least one term".into()));
    }
    let map = p.index_map();
    let mut v = ComplexVector::zeros(p.dim());
    for &((m, n), a) in terms {
        v[map.flatten(m, n)?] += a;
    }
    normalized(v)
}

/// Gaussian packet `g(x) ~ exp(-(x - x_c)^2 / (4 xi^2 s0^2)) e^{i p_c x}`
/// with `s0 = s^{-1/4}`, the width of the harmonic ground state of one
/// lattice well. `xi < 1` squeezes in position, `xi > 1` stretches.
///
/// The packet is sampled on the position grid (with `x - x_c` wrapped into
/// `[-pi, pi)`), mapped to plane-wave coefficients and normalized. Only
/// `q = 0` is supported.
pub fn squeezed_state(x_c: f64, p_c: f64, xi: f64, p: &Lattice1DParams) -> Result<ComplexVector> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::InvalidParameter(format!("squeezing xi = {xi} must be positive")));
    }
    if !(x_c.is_finite() && p_c.is_finite()) {
        return Err(Error::NonFinite("squeezed state center"));
    }
    if p.q != 0.0 {
        return Err(Error::InvalidParameter("squeezed states require q = 0".into()));
    }
    if p.s <= 0.0 {
        return Err(Error::InvalidParameter("squeezed states need a lattice depth s > 0".into()));
    }
    let sigma0 = p.s.powf(-0.25);
    let t = DvrTransform::new(p);
    let samples: ComplexVector = t
        .grid_points()
        .into_iter()
        .map(|x| {
            let d = (x - x_c + PI).rem_euclid(2.0 * PI) - PI;
            Complex64::from_polar((-d * d / (4.0 * xi * xi * sigma0 * sigma0)).exp(), p_c * x)
        })
        .collect();
    normalized(t.from_grid(&samples))
}

/// `|<a|b>|^2`. Both states are expected to be normalized.
pub fn fidelity(a: &ComplexVector, b: &ComplexVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(inner(a, b).norm_sqr())
}

/// `|c_k|^2` in storage order.
pub fn population_distribution(psi: &ComplexVector) -> Vec<f64> {
    psi.iter().map(|z| z.norm_sqr()).collect()
}
