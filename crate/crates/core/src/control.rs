//! Piecewise-constant control grids and propagated trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::ComplexVector;

/// Phase controls sampled on a uniform time grid.
///
/// The value `values[c][k]` is applied on `[k dt, (k+1) dt)` for channel `c`.
/// One channel drives the 1D problems, three (`phi12`, `phi23`, `phi31`) the
/// triangular lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    t_f: f64,
    values: Vec<Vec<f64>>,
    optimize: Vec<bool>,
}

impl ControlGrid {
    pub fn new(t_f: f64, values: Vec<Vec<f64>>, optimize: Vec<bool>) -> Result<Self> {
        if !(t_f.is_finite() && t_f > 0.0) {
            return Err(Error::InvalidParameter(format!("t_f must be positive, got {t_f}")));
        }
        if values.is_empty() || values.len() != optimize.len() {
            return Err(Error::InvalidParameter("control needs one optimize flag per channel".into()));
        }
        let n_steps = values[0].len();
        if n_steps == 0 || values.iter().any(|v| v.len() != n_steps) {
            return Err(Error::InvalidParameter("all channels need the same nonzero number of steps".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control values"));
        }
        Ok(Self { t_f, values, optimize })
    }

    /// All channels at a constant value, all optimizable.
    pub fn constant(t_f: f64, n_steps: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(t_f, vec![vec![value; n_steps]; channels], vec![true; channels])
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn n_steps(&self) -> usize {
        self.values[0].len()
    }

    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.t_f / self.n_steps() as f64
    }

    /// Start time of step `k`.
    pub fn t_start(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value(&self, channel: usize, step: usize) -> f64 {
        self.values[channel][step]
    }

    pub fn set(&mut self, channel: usize, step: usize, value: f64) {
        self.values[channel][step] = value;
    }

    pub fn is_optimized(&self, channel: usize) -> bool {
        self.optimize[channel]
    }

    pub fn optimize_flags(&self) -> &[bool] {
        &self.optimize
    }

    pub fn set_optimize_flags(&mut self, flags: Vec<bool>) -> Result<()> {
        if flags.len() != self.n_channels() {
            return Err(Error::ChannelMismatch { expected: self.n_channels(), found: flags.len() });
        }
        self.optimize = flags;
        Ok(())
    }

    pub fn any_optimized(&self) -> bool {
        self.optimize.iter().any(|&f| f)
    }

    pub fn expect_channels(&self, n: usize) -> Result<()> {
        if self.n_channels() != n {
            return Err(Error::ChannelMismatch { expected: n, found: self.n_channels() });
        }
        Ok(())
    }

    /// Same grid, time-reversed values: step `k` gets the value of step
    /// `n_steps - 1 - k`.
    pub fn reversed(&self) -> Self {
        let values = self.values.iter().map(|v| v.iter().rev().copied().collect()).collect();
        Self { t_f: self.t_f, values, optimize: self.optimize.clone() }
    }

    /// Adds `step * direction` to every optimizable channel.
    pub fn ascend(&self, direction: &[Vec<f64>], step: f64) -> Self {
        let mut next = self.clone();
        for (c, dir) in direction.iter().enumerate() {
            if !self.optimize[c] {
                continue;
            }
            for (v, d) in next.values[c].iter_mut().zip(dir) {
                *v += step * d;
            }
        }
        next
    }

    /// Re-initializes the optimizable channels. Frozen channels keep their
    /// values.
    pub fn initialize(&mut self, strategy: &InitStrategy) {
        match *strategy {
            InitStrategy::Given => {}
            InitStrategy::Zero => self.fill_optimized(|_| 0.0),
            InitStrategy::Constant { value } => self.fill_optimized(|_| value),
            InitStrategy::UniformRandom { amplitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.perturb(amplitude, &mut rng);
            }
        }
    }

    fn fill_optimized(&mut self, f: impl Fn(usize) -> f64) {
        for (c, vals) in self.values.iter_mut().enumerate() {
            if self.optimize[c] {
                for (k, v) in vals.iter_mut().enumerate() {
                    *v = f(k);
                }
            }
        }
    }

    /// Adds uniform noise in `[-amplitude, amplitude]` to the optimizable
    /// channels.
    pub fn perturb(&mut self, amplitude: f64, rng: &mut ChaCha8Rng) {
        for (c, vals) in self.values.iter_mut().enumerate() {
            if self.optimize[c] && amplitude > 0.0 {
                for v in vals.iter_mut() {
                    *v += rng.random_range(-amplitude..=amplitude);
                }
            }
        }
    }
}

/// How the optimizable channels of a control are seeded before optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Use the control values as passed in.
    Given,
    Zero,
    Constant {
        value: f64,
    },
    /// Adds uniform noise in `[-amplitude, amplitude]` to the given values.
    UniformRandom {
        amplitude: f64,
        seed: u64,
    },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::UniformRandom { amplitude: 0.1, seed: 0 }
    }
}

/// States at the step boundaries `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComplexVector>,
}

impl Trajectory {
    pub fn final_state(&self) -> &ComplexVector {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}
