//! Experiment configuration: one JSON file describes one experiment.
//!
//! ```json
//! {
//!   "domain": { "length": 1.0, "n_interior": 49 },
//!   "time": { "horizon": 1.0, "n_steps": 100 },
//!   "kernel": { "type": "exp_poly", "rate": 0.0, "coeffs": [1.0, 1.0] },
//!   "placement": "on_state",
//!   "diffusivity": 1.0,
//!   "support": [ { "t": 0.0, "left": 0.2, "right": 0.5 } ],
//!   "initial": { "profile": "eigenmode", "k": 1 },
//!   "task": { "kind": "sweep", "epsilons": [1e-2, 1e-3, 1e-4] },
//!   "solver": { "tol": 1e-8, "max_iter": 1000 },
//!   "output": { "stride": 10 }
//! }
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, SpatialGrid};
use crate::kernels::{Kernel, Truncation};
use crate::reduction::{build_cascade_with, CoupledSystem, MemoryPlacement};
use crate::simulator::TimeGrid;
use crate::support::{Breakpoint, MovingSupport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub kernel: KernelSpec,
    pub placement: MemoryPlacement,
    pub diffusivity: f64,
    #[serde(default)]
    pub allow_degenerate: bool,
    pub support: Vec<Breakpoint>,
    pub initial: InitialProfile,
    pub task: TaskConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub penalize_all_cascade: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
    pub n_interior: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

/// Kernel plus an optional Taylor truncation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kernel: Kernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `amplitude * sin(k pi x / L)`
    Eigenmode {
        k: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude * exp(-((x - center) / width)^2)`
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Constant {
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simulate,
    Control,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Time-node stride of the trajectory export; the final node is always written.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            stride: default_stride(),
        }
    }
}

fn default_stride() -> usize {
    1
}

/// Validated, ready-to-run experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    /// Kernel used by the cascade (after truncation, if requested).
    pub kernel: Kernel,
    pub truncation: Option<Truncation>,
    pub support: MovingSupport,
    pub system: CoupledSystem,
    pub y0: Field,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and assembles the experiment; nothing is computed
    /// beyond the system matrices' ingredients.
    pub fn validate(&self) -> Result<Experiment> {
        let grid = SpatialGrid::new(self.domain.length, self.domain.n_interior)
            .map_err(|e| prefix("domain", e))?;
        let time = TimeGrid::new(self.time.horizon, self.time.n_steps)?;

        self.kernel.kernel.validate()?;
        let (kernel, truncation) = match (&self.kernel.kernel, self.kernel.truncate) {
            (Kernel::Taylor { radius, .. }, Some(order)) => {
                if *radius <= self.time.horizon {
                    return Err(Error::Config(format!(
                        "kernel.radius: {radius} does not cover the horizon {}",
                        self.time.horizon
                    )));
                }
                let tr = self
                    .kernel
                    .kernel
                    .truncate(order)
                    .map_err(|e| prefix("kernel.truncate", e))?;
                (tr.kernel.clone(), Some(tr))
            }
            (Kernel::Taylor { .. }, None) => {
                return Err(Error::Config(
                    "kernel.truncate: Taylor kernels need a truncation order".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::Config(
                    "kernel.truncate: only Taylor kernels can be truncated".into(),
                ))
            }
            (k, None) => (k.clone(), None),
        };

        if !(self.diffusivity.is_finite() && self.diffusivity >= 0.0) {
            return Err(Error::Config(format!(
                "diffusivity: must be >= 0, got {}",
                self.diffusivity
            )));
        }
        let support = MovingSupport::new(self.support.clone())?;
        support.validate_for(grid.length(), time.horizon())?;

        let y0 = self.initial_field(&grid)?;

        match self.task.kind {
            TaskKind::Simulate => {}
            TaskKind::Control => {
                let eps = self.task.epsilon.ok_or_else(|| {
                    Error::Config("task.epsilon: required for control tasks".into())
                })?;
                if !(eps.is_finite() && eps > 0.0) {
                    return Err(Error::Config(format!(
                        "task.epsilon: must be positive, got {eps}"
                    )));
                }
            }
            TaskKind::Sweep => {
                let list = self.task.epsilons.as_ref().ok_or_else(|| {
                    Error::Config("task.epsilons: required for sweep tasks".into())
                })?;
                if list.is_empty() {
                    return Err(Error::Config("task.epsilons: must not be empty".into()));
                }
                for (i, e) in list.iter().enumerate() {
                    if !(e.is_finite() && *e > 0.0) {
                        return Err(Error::Config(format!(
                            "task.epsilons[{i}]: must be positive, got {e}"
                        )));
                    }
                    if i > 0 && *e >= list[i - 1] {
                        return Err(Error::Config(format!(
                            "task.epsilons[{i}]: values must be strictly decreasing"
                        )));
                    }
                }
            }
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(Error::Config(format!(
                "solver.tol: must be positive, got {}",
                self.solver.tol
            )));
        }
        if self.output.stride == 0 {
            return Err(Error::Config("output.stride: must be at least 1".into()));
        }

        let system = build_cascade_with(
            &kernel,
            self.placement,
            self.diffusivity,
            grid,
            support.clone(),
            time.horizon(),
            self.allow_degenerate,
        )?;
        Ok(Experiment {
            config: self.clone(),
            grid,
            time,
            kernel,
            truncation,
            support,
            system,
            y0,
        })
    }

    fn initial_field(&self, grid: &SpatialGrid) -> Result<Field> {
        let length = grid.length();
        match self.initial {
            InitialProfile::Eigenmode { k, amplitude } => {
                if k == 0 {
                    return Err(Error::Config("initial.k: mode index must be >= 1".into()));
                }
                Ok(grid.sample(|x| amplitude * (k as f64 * PI * x / length).sin()))
            }
            InitialProfile::Gaussian {
                center,
                width,
                amplitude,
            } => {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::Config(format!(
                        "initial.width: must be positive, got {width}"
                    )));
                }
                Ok(grid.sample(|x| amplitude * (-((x - center) / width).powi(2)).exp()))
            }
            InitialProfile::Constant { value } => Ok(grid.sample(|_| value)),
        }
        .and_then(|f| Field::new(*grid, f.into_values()).map_err(|e| prefix("initial", e)))
    }
}

fn prefix(field: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{field}: {m}")),
        Error::InsufficientData {
            requested,
            available,
        } => Error::Config(format!(
            "{field}: order {requested} needs {} coefficients, only {available} given",
            requested + 1
        )),
        other => Error::Config(format!("{field}: {other}")),
    }
}
