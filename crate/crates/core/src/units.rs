//! Conversion between laboratory time and the dimensionless model time.
//!
//! The 1D model measures time in units of `hbar / E_L` with
//! `E_L = hbar^2 k_L^2 / 2m` and `k_L = 4 pi / lambda`. The triangular lattice
//! uses `tau = (3 hbar k^2 / 2m) t` with `k = 2 pi / lambda`, so the 2D rate is
//! three quarters of the 1D one.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit in kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of rubidium 87 in kg.
pub const RB87_MASS: f64 = 86.909_180_531 * ATOMIC_MASS_UNIT;
/// Lattice laser wavelength in m.
pub const DEFAULT_WAVELENGTH: f64 = 1064e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnitFamily {
    Lattice1D,
    Lattice2D,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitConversion {
    /// Laser wavelength in meters.
    pub wavelength: f64,
    /// Atomic mass in kilograms.
    pub mass: f64,
}

impl Default for UnitConversion {
    fn default() -> Self {
        Self { wavelength: DEFAULT_WAVELENGTH, mass: RB87_MASS }
    }
}

impl UnitConversion {
    pub fn new(wavelength: f64, mass: f64) -> Result<Self> {
        let uc = Self { wavelength, mass };
        uc.validate()?;
        Ok(uc)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("wavelength", self.wavelength), ("mass", self.mass)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Dimensionless time per second for the given family.
    pub fn rate(&self, family: TimeUnitFamily) -> f64 {
        match family {
            TimeUnitFamily::Lattice1D => {
                let k_l = 4.0 * PI / self.wavelength;
                HBAR * k_l * k_l / (2.0 * self.mass)
            }
            TimeUnitFamily::Lattice2D => {
                let k = 2.0 * PI / self.wavelength;
                3.0 * HBAR * k * k / (2.0 * self.mass)
            }
        }
    }
}

pub fn to_dimensionless_time(seconds: f64, family: TimeUnitFamily, uc: &UnitConversion) -> Result<f64> {
    uc.validate()?;
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {seconds} s")));
    }
    Ok(seconds * uc.rate(family))
}

pub fn to_physical_time(tau: f64, family: TimeUnitFamily, uc: &UnitConversion) -> Result<f64> {
    uc.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {tau}")));
    }
    Ok(tau / uc.rate(family))
}
