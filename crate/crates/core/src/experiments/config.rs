use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::hjb::{Axis, Grid};
use crate::integrator::{ControlSignal, Layout};
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, CostSpec, MatrixField, ThreeScaleSystem, TwoScaleSystem};
use crate::zoo::registry::{build_model, ModelParams};
use crate::zoo::{ModelSystem, Scenario};

/// One experiment, read from a JSON document. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of every output file.
    pub name: String,
    /// A zoo model; exclusive with `system`.
    pub model: Option<ModelSpec>,
    /// A small hand-written affine system; exclusive with `model`.
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Trajectory horizon; defaults to the model scenario horizon, or 1.
    pub horizon: Option<f64>,
    /// Integration step; defaults to 1e-3.
    pub step: Option<f64>,
    pub controls: Option<ControlsSpec>,
    pub cost: Option<CostConfig>,
    pub grid: Option<GridSpec>,
    pub cell: Option<CellSpec>,
    pub occupational: Option<OccupationalSpec>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub budget_nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: ModelParams,
}

/// `offset + gain · z`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub offset: Vec<f64>,
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Constant matrices given row by row; `c1`, `c2` (and `c3`) may depend affinely on `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a1: Vec<Vec<f64>>,
    pub a2: Vec<Vec<f64>>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub c1: Option<AffineSpec>,
    pub c2: Option<AffineSpec>,
    pub omega_a: BoxSpec,
    pub omega_b: BoxSpec,
    pub epsilon: Option<f64>,
    pub micro: Option<MicroSpec>,
    pub z0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSpec {
    pub a0: Vec<Vec<f64>>,
    pub a3: Vec<Vec<f64>>,
    pub b3: Vec<Vec<f64>>,
    pub c3: Option<AffineSpec>,
    pub omega_g: BoxSpec,
}

/// Piecewise-constant signal: `values[k]` on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsSpec {
    pub alpha: Option<SignalSpec>,
    pub beta: Option<SignalSpec>,
    pub gamma: Option<SignalSpec>,
}

/// `constant + Σ linear_k z_k + Σ quadratic_k z_k² + Σ abs_k |z_k|` over the slow state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub linear: Vec<f64>,
    #[serde(default)]
    pub quadratic: Vec<f64>,
    #[serde(default)]
    pub abs: Vec<f64>,
}

impl ScalarSpec {
    pub fn eval(&self, z: &Vector) -> f64 {
        let mut out = self.constant;
        for (k, c) in self.linear.iter().enumerate() {
            out += c * z[k];
        }
        for (k, c) in self.quadratic.iter().enumerate() {
            out += c * z[k] * z[k];
        }
        for (k, c) in self.abs.iter().enumerate() {
            out += c * z[k].abs();
        }
        out
    }

    fn width(&self) -> usize {
        self.linear.len().max(self.quadratic.len()).max(self.abs.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub running: ScalarSpec,
    pub terminal: ScalarSpec,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub slow: Vec<AxisSpec>,
    #[serde(default)]
    pub fast: Vec<AxisSpec>,
    #[serde(default)]
    pub micro: Vec<AxisSpec>,
    /// Time steps of the HJB march; the CFL minimum when absent.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub z: Option<Vec<f64>>,
    pub p: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Fast grid; defaults to `grid.fast`.
    pub fast: Option<Vec<AxisSpec>>,
    pub reference: Option<usize>,
    /// Extra random 1-D affine instances drawn from the seed.
    #[serde(default)]
    pub random_instances: usize,
    /// Node count of the fast grid of random instances.
    pub random_nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationalSpec {
    pub z: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    /// Initial fast state; defaults to the equilibrium.
    pub y0: Option<Vec<f64>>,
    /// Horizon in units of the slowest decay time `1/|Re λ|`; default 100.
    pub decay_times: Option<f64>,
    pub bins: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Neighbourhood radius in bins for the concentration summary; default 1.
    pub radius_bins: Option<usize>,
    /// Integration steps per decay time; default 1000.
    pub steps_per_decay: Option<usize>,
}

fn cfg_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix, ExperimentError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(cfg_err(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(cfg_err(format!("{what}: non-finite entry")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn affine(spec: &Option<AffineSpec>, rows: usize, m: usize, what: &str) -> Result<MatrixField, ExperimentError> {
    let Some(spec) = spec else {
        return Ok(MatrixField::zeros(rows, 1));
    };
    if spec.offset.len() != rows {
        return Err(cfg_err(format!("{what}: offset needs {rows} entries")));
    }
    let offset = Vector::from_row_slice(&spec.offset);
    match &spec.gain {
        None => Ok(MatrixField::constant_vector(offset)),
        Some(g) => {
            let gain = matrix(g, what)?;
            if gain.shape() != (rows, m) {
                return Err(cfg_err(format!("{what}: gain must be {rows}x{m}")));
            }
            Ok(MatrixField::vector(rows, move |z| Ok(&offset + &gain * z)))
        }
    }
}

fn control_box(spec: &BoxSpec, what: &str) -> Result<ControlBox, ExperimentError> {
    ControlBox::new(Vector::from_row_slice(&spec.lower), Vector::from_row_slice(&spec.upper))
        .map_err(|e| cfg_err(format!("{what}: {e}")))
}

fn vector_or_zeros(v: &Option<Vec<f64>>, n: usize, what: &str) -> Result<Vector, ExperimentError> {
    match v {
        None => Ok(Vector::zeros(n)),
        Some(v) if v.len() == n => Ok(Vector::from_row_slice(v)),
        Some(v) => Err(cfg_err(format!("{what} has {} entries, expected {n}", v.len()))),
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<ModelSystem, ExperimentError> {
        let a1 = matrix(&self.a1, "a1")?;
        let (m, n) = a1.shape();
        let wrap = |e: crate::Error| cfg_err(format!("system: {e}"));
        let two = TwoScaleSystem::new(
            MatrixField::constant(a1),
            MatrixField::constant(matrix(&self.a2, "a2")?),
            MatrixField::constant(matrix(&self.b1, "b1")?),
            MatrixField::constant(matrix(&self.b2, "b2")?),
            affine(&self.c1, m, m, "c1")?,
            affine(&self.c2, n, m, "c2")?,
            control_box(&self.omega_a, "omega_a")?,
            control_box(&self.omega_b, "omega_b")?,
            self.epsilon.unwrap_or(0.1),
        )
        .map_err(wrap)?;
        match &self.micro {
            None => Ok(ModelSystem::Two(two)),
            Some(mi) => {
                let a3 = matrix(&mi.a3, "a3")?;
                let l = a3.nrows();
                let three = ThreeScaleSystem::new(
                    two,
                    MatrixField::constant(matrix(&mi.a0, "a0")?),
                    MatrixField::constant(a3),
                    MatrixField::constant(matrix(&mi.b3, "b3")?),
                    affine(&mi.c3, l, m, "c3")?,
                    control_box(&mi.omega_g, "omega_g")?,
                )
                .map_err(wrap)?;
                Ok(ModelSystem::Three(three))
            }
        }
    }
}

/// A configured system with its initial data and controls.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: ModelSystem,
    pub layout: Layout,
    pub slow_layout: Layout,
    pub scenario: Scenario,
}

impl Setup {
    pub fn horizon(&self) -> f64 {
        self.scenario.horizon()
    }
}

fn signal(spec: &Option<SignalSpec>, fallback: Option<&ControlSignal>, omega: &ControlBox, horizon: f64, what: &str) -> Result<ControlSignal, ExperimentError> {
    match spec {
        Some(s) => {
            let values = s.values.iter().map(|v| Vector::from_row_slice(v)).collect();
            ControlSignal::new(s.breakpoints.clone(), values, omega.clone()).map_err(|e| cfg_err(format!("{what}: {e}")))
        }
        None => match fallback {
            Some(f) if (f.horizon() - horizon).abs() <= 1e-12 * horizon.max(1.0) => Ok(f.clone()),
            // Rescale the default breakpoints to the requested horizon.
            Some(f) => {
                let scale = horizon / f.horizon();
                ControlSignal::new(f.breakpoints().iter().map(|t| t * scale).collect(), f.values().to_vec(), omega.clone())
                    .map_err(|e| cfg_err(format!("{what}: {e}")))
            }
            None => ControlSignal::midpoint(omega, horizon).map_err(|e| cfg_err(format!("{what}: {e}"))),
        },
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks that do not need the model.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(cfg_err(format!("bad experiment name {:?}", self.name)));
        }
        match (&self.model, &self.system) {
            (Some(_), Some(_)) => return Err(cfg_err("give either model or system, not both")),
            (None, None) => return Err(cfg_err("missing model or system")),
            (Some(m), None) if crate::zoo::registry::describe(&m.name).is_none() => {
                return Err(cfg_err(format!("unknown model {}", m.name)));
            }
            _ => {}
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(cfg_err("epsilons must be positive"));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(cfg_err("epsilons must be strictly decreasing"));
        }
        for (what, v) in [("horizon", self.horizon), ("step", self.step)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(cfg_err(format!("{what} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn require_epsilons(&self) -> Result<(), ExperimentError> {
        if self.epsilons.is_empty() {
            return Err(cfg_err("epsilon list is empty"));
        }
        Ok(())
    }

    /// Builds the system at the first configured ε (or its own default).
    pub fn setup(&self) -> Result<Setup, ExperimentError> {
        let (system, layout, defaults) = if let Some(m) = &self.model {
            let model = build_model(&m.name, &m.params).map_err(|e| cfg_err(e.to_string()))?;
            let slow = model.slow_layout();
            (model.system.clone(), (model.layout.clone(), slow), Some(model.defaults.clone()))
        } else {
            let spec = self.system.as_ref().expect("validated");
            let system = spec.build()?;
            let two = system.two();
            let (m, n, l) = (two.m(), two.n(), system.l());
            let mut parts = vec![("z", m), ("y", n)];
            if l > 0 {
                parts.push(("x", l));
            }
            let layout = Layout::new(&parts);
            let slow = layout.sub(0, m);
            (system, (layout, slow), None)
        };
        let system = match self.epsilons.first() {
            Some(&e) => system.with_epsilon(e).map_err(|e| cfg_err(e.to_string()))?,
            None => system,
        };
        let two = system.two();
        let horizon = self.horizon.or(defaults.as_ref().map(Scenario::horizon)).unwrap_or(1.0);
        let controls = self.controls.clone().unwrap_or_default();
        let alpha = signal(&controls.alpha, defaults.as_ref().map(|d| &d.alpha), &two.omega_a, horizon, "alpha")?;
        let beta = signal(&controls.beta, defaults.as_ref().map(|d| &d.beta), &two.omega_b, horizon, "beta")?;
        let (gamma, x0) = match system.three() {
            None => (None, None),
            Some(s3) => {
                let g = signal(&controls.gamma, defaults.as_ref().and_then(|d| d.gamma.as_ref()), &s3.omega_g, horizon, "gamma")?;
                let x0 = match (&defaults, &self.system) {
                    (Some(d), _) => d.x0.clone().unwrap_or_else(|| Vector::zeros(s3.l())),
                    (None, Some(spec)) => vector_or_zeros(&spec.x0, s3.l(), "x0")?,
                    _ => Vector::zeros(s3.l()),
                };
                (Some(g), Some(x0))
            }
        };
        for s in [Some(&alpha), Some(&beta), gamma.as_ref()].into_iter().flatten() {
            if (s.horizon() - horizon).abs() > 1e-12 * horizon.max(1.0) {
                return Err(cfg_err(format!("control horizon {} differs from the horizon {horizon}", s.horizon())));
            }
        }
        let (z0, y0) = match (&defaults, &self.system) {
            (Some(d), _) => (d.z0.clone(), d.y0.clone()),
            (None, Some(spec)) => (vector_or_zeros(&spec.z0, two.m(), "z0")?, vector_or_zeros(&spec.y0, two.n(), "y0")?),
            _ => unreachable!("validated"),
        };
        Ok(Setup {
            system,
            layout: layout.0,
            slow_layout: layout.1,
            scenario: Scenario { z0, y0, x0, alpha, beta, gamma },
        })
    }

    pub fn cost(&self, m: usize) -> Result<CostSpec, ExperimentError> {
        let c = self.cost.as_ref().ok_or_else(|| cfg_err("missing cost"))?;
        if c.running.width() > m || c.terminal.width() > m {
            return Err(cfg_err(format!("cost refers to more than {m} slow coordinates")));
        }
        let (run, term) = (c.running.clone(), c.terminal.clone());
        CostSpec::new(move |z| run.eval(z), move |z| term.eval(z), c.horizon).map_err(|e| cfg_err(format!("cost: {e}")))
    }

    pub fn integration_steps(&self, horizon: f64) -> usize {
        let step = self.step.unwrap_or(1e-3);
        ((horizon / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

pub fn grid_from(axes: &[AxisSpec], what: &str) -> Result<Grid, ExperimentError> {
    let axes = axes
        .iter()
        .map(|a| Axis::new(a.lower, a.upper, a.nodes))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| cfg_err(format!("{what} grid: {e}")))?;
    Grid::new(axes).map_err(|e| cfg_err(format!("{what} grid: {e}")))
}
