//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use becgrape::grape::AdjointMode;
use becgrape::lattice2d::DerivativeForm;
use becgrape::units::{to_dimensionless_time, TimeUnitFamily, UnitConversion};
use becgrape::{
    ControlGrid, DensityFreezing, GPParams, InitStrategy, Lattice1DParams, Lattice2DParams, OptimizerSettings, Problem,
    TargetSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub initial_state: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    pub time: TimeConfig,
    pub control: ControlConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub propagate: PropagateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_scan: Option<BetaScanConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Linear1d {
        s: f64,
        #[serde(default)]
        q: f64,
        n_max: usize,
    },
    Gp1d {
        s: f64,
        #[serde(default)]
        q: f64,
        n_max: usize,
        beta: f64,
        #[serde(default)]
        freezing: DensityFreezing,
        #[serde(default)]
        adjoint: AdjointMode,
    },
    Lattice2d {
        s: f64,
        m_max: usize,
        n_max: usize,
        #[serde(default)]
        derivative: DerivativeForm,
    },
}

/// Final time, either dimensionless or in microseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f_microseconds: Option<f64>,
    /// Wavelength and mass used for the microsecond conversion.
    #[serde(default)]
    pub units: UnitConversion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub n_steps: usize,
    /// Per-channel optimize flags; all channels when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<Vec<bool>>,
    #[serde(default)]
    pub initial: ControlSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSource {
    Constant {
        value: f64,
    },
    /// A pulse CSV as written by `optimize`.
    PulseFile {
        path: PathBuf,
    },
}

impl Default for ControlSource {
    fn default() -> Self {
        ControlSource::Constant { value: 0.0 }
    }
}

/// A named state whose overlap with the evolving state is recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    pub label: String,
    pub state: TargetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub projections: Vec<Projection>,
    /// Record every `sample_every`-th step boundary (the last one always).
    pub sample_every: usize,
    /// Also integrate the GP equation with RK4 and record the same curves.
    pub compare_rk4: bool,
    pub rk4_substeps: usize,
    /// Further nonlinearities to propagate with the same control (gp1d only).
    pub extra_betas: Vec<f64>,
    pub write_density: bool,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            projections: Vec::new(),
            sample_every: 1,
            compare_rk4: false,
            rk4_substeps: 4,
            extra_betas: Vec::new(),
            write_density: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaScanConfig {
    pub betas: BetaGrid,
    pub pulse: PulseSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaGrid::List(v) => v.clone(),
            BetaGrid::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*count).map(|i| start + (stop - start) * i as f64 / (*count - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSource {
    /// Evaluate the control given in the `control` section.
    Control,
    PulseFile {
        path: PathBuf,
    },
    /// Optimize at this nonlinearity first, then scan the result.
    Optimize {
        beta: f64,
    },
}

/// Everything a runner needs, with states realized and units converted.
pub struct Prepared {
    pub problem: Problem,
    pub psi0: becgrape::ComplexVector,
    pub target: Option<becgrape::ComplexVector>,
    pub control: ControlGrid,
}

impl RunConfig {
    /// Parses JSON, reporting syntax and schema errors with line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {}", e.line(), e.column(), e)))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| CliError::Config(format!("{} is not UTF-8: {e}", path.display())))?;
        Ok((Self::from_json(text)?, bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn family_name(&self) -> &'static str {
        match self.problem {
            ProblemConfig::Linear1d { .. } => "linear1d",
            ProblemConfig::Gp1d { .. } => "gp1d",
            ProblemConfig::Lattice2d { .. } => "lattice2d",
        }
    }

    pub fn n_channels(&self) -> usize {
        match self.problem {
            ProblemConfig::Lattice2d { .. } => 3,
            _ => 1,
        }
    }

    pub fn time_family(&self) -> TimeUnitFamily {
        match self.problem {
            ProblemConfig::Lattice2d { .. } => TimeUnitFamily::Lattice2D,
            _ => TimeUnitFamily::Lattice1D,
        }
    }

    /// Overrides the seed of a random initialization.
    pub fn apply_seed(&mut self, seed: u64) {
        match &mut self.optimizer.init {
            InitStrategy::UniformRandom { seed: s, .. } => *s = seed,
            other => {
                log::warn!("--seed has no effect with the {other:?} initialization");
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.optimizer.init {
            InitStrategy::UniformRandom { seed, .. } => Some(seed),
            _ => None,
        }
    }

    pub fn final_time(&self) -> Result<f64, CliError> {
        match (self.time.t_f, self.time.t_f_microseconds) {
            (Some(t), None) => {
                if t.is_finite() && t > 0.0 {
                    Ok(t)
                } else {
                    Err(CliError::Config(format!("time.t_f must be positive, got {t}")))
                }
            }
            (None, Some(us)) => to_dimensionless_time(us * 1e-6, self.time_family(), &self.time.units)
                .map_err(|e| CliError::Config(format!("time: {e}"))),
            (Some(_), Some(_)) => Err(CliError::Config("time: give either t_f or t_f_microseconds, not both".into())),
            (None, None) => Err(CliError::Config("time: t_f or t_f_microseconds is required".into())),
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let cfg = |e: becgrape::Error| CliError::Config(format!("problem: {e}"));
        Ok(match self.problem {
            ProblemConfig::Linear1d { s, q, n_max } => {
                Problem::Linear1D(Lattice1DParams::new(s, q, n_max).map_err(cfg)?)
            }
            ProblemConfig::Gp1d { s, q, n_max, beta, freezing, adjoint } => {
                let lattice = Lattice1DParams::new(s, q, n_max).map_err(cfg)?;
                Problem::Gp { params: GPParams::new(lattice, beta).map_err(cfg)?, freezing, adjoint }
            }
            ProblemConfig::Lattice2d { s, m_max, n_max, derivative } => {
                Problem::Lattice2D { params: Lattice2DParams::new(s, m_max, n_max).map_err(cfg)?, form: derivative }
            }
        })
    }

    pub fn lattice1d(&self) -> Option<Lattice1DParams> {
        match self.problem {
            ProblemConfig::Linear1d { s, q, n_max } | ProblemConfig::Gp1d { s, q, n_max, .. } => {
                Some(Lattice1DParams { s, q, n_max })
            }
            ProblemConfig::Lattice2d { .. } => None,
        }
    }

    pub fn realize(&self, state: &TargetSpec, field: &str) -> Result<becgrape::ComplexVector, CliError> {
        let res = match self.problem {
            ProblemConfig::Lattice2d { s, m_max, n_max, .. } => {
                Lattice2DParams::new(s, m_max, n_max).and_then(|p| state.realize_2d(&p))
            }
            _ => {
                let p = self.lattice1d().expect("1D family");
                p.validate().and_then(|_| state.realize_1d(&p))
            }
        };
        res.map_err(|e| CliError::Config(format!("{field}: {e}")))
    }

    pub fn control_grid(&self, t_f: f64) -> Result<ControlGrid, CliError> {
        let channels = self.n_channels();
        if self.control.n_steps == 0 {
            return Err(CliError::Config("control.n_steps must be positive".into()));
        }
        let values = match &self.control.initial {
            ControlSource::Constant { value } => vec![vec![*value; self.control.n_steps]; channels],
            ControlSource::PulseFile { path } => {
                let v = crate::output::read_pulse(path)?;
                if v.len() != channels || v[0].len() != self.control.n_steps {
                    return Err(CliError::Config(format!(
                        "control.initial: {} holds {} channel(s) of {} steps, expected {} of {}",
                        path.display(),
                        v.len(),
                        v.first().map_or(0, Vec::len),
                        channels,
                        self.control.n_steps
                    )));
                }
                v
            }
        };
        let flags = self.control.optimize.clone().unwrap_or_else(|| vec![true; channels]);
        if flags.len() != channels {
            return Err(CliError::Config(format!(
                "control.optimize has {} flag(s), the problem has {channels} channel(s)",
                flags.len()
            )));
        }
        ControlGrid::new(t_f, values, flags).map_err(|e| CliError::Config(format!("control: {e}")))
    }

    /// Full semantic validation, shared by every subcommand.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let problem = self.problem()?;
        if self.initial_state.is_2d() != matches!(self.problem, ProblemConfig::Lattice2d { .. }) {
            return Err(CliError::Config("initial_state does not match the problem dimension".into()));
        }
        let psi0 = self.realize(&self.initial_state, "initial_state")?;
        let target = match &self.target {
            Some(t) => Some(self.realize(t, "target")?),
            None => None,
        };
        for p in &self.propagate.projections {
            self.realize(&p.state, &format!("propagate.projections[{}]", p.label))?;
        }
        if self.propagate.sample_every == 0 {
            return Err(CliError::Config("propagate.sample_every must be positive".into()));
        }
        if self.propagate.compare_rk4 && self.propagate.rk4_substeps == 0 {
            return Err(CliError::Config("propagate.rk4_substeps must be positive".into()));
        }
        let is_gp = matches!(self.problem, ProblemConfig::Gp1d { .. });
        if !is_gp && (self.propagate.compare_rk4 || !self.propagate.extra_betas.is_empty()) {
            return Err(CliError::Config(
                "propagate.compare_rk4 and propagate.extra_betas need the gp1d family".into(),
            ));
        }
        self.optimizer.validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        let control = self.control_grid(self.final_time()?)?;
        Ok(Prepared { problem, psi0, target, control })
    }
}
