//! Optimal phase control of a Bose-Einstein condensate in optical lattices.
//!
//! The crate models a condensate in a truncated plane-wave (Bloch) basis and
//! synthesizes piecewise-constant lattice-phase pulses with gradient ascent
//! (GRAPE). Three problem families are supported:
//!
//! * [`lattice1d`]: the linear 1D lattice, one phase control.
//! * [`gp`]: the 1D Gross-Pitaevskii (mean-field) lattice, handled in the
//!   mixed momentum / position-grid (FBR-DVR) representation.
//! * [`lattice2d`]: the three-beam triangular lattice at zero quasi-momentum,
//!   three phase controls.
//!
//! Every control step applies the exponential of the (frozen) Hamiltonian:
//! through an eigendecomposition in 1D and a Chebyshev expansion with sparse
//! products in 2D. [`numkernel`] also provides an RK4 integrator used as an
//! independent oracle in tests. Gradients in [`grape`] are exact for the
//! discretized dynamics, so they can be checked against finite differences.

pub mod control;
pub mod error;
pub mod gp;
pub mod grape;
pub mod lattice1d;
pub mod lattice2d;
pub mod numkernel;
pub mod states;
pub mod units;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use control::{ControlGrid, InitStrategy, Trajectory};
pub use error::{Error, Result};
pub use gp::{DensityFreezing, DvrTransform, GPParams};
pub use grape::{Gradient, OptimizationResult, OptimizerSettings, Problem, TerminationReason};
pub use lattice1d::Lattice1DParams;
pub use lattice2d::{Channel, IndexMap2D, Lattice2DParams, PhaseTriple};
pub use numkernel::{ComplexMatrix, ComplexVector};
pub use states::TargetSpec;
pub use units::{TimeUnitFamily, UnitConversion};
