//! Semi-discretized relaxation models as two- and three-scale control systems.
//!
//! All models live on a periodic grid of `d` cells. Conservation equations use the
//! backward upwind stencil `D`; equations that relax or transport a flux use the
//! forward stencil `-Dᵀ`, so that wave pairs such as `u̇ = -D v, v̇ = -a Dᵀ u`
//! stay energy-neutral and the reduced second-order terms are genuine
//! (negative semidefinite) discrete Laplacians.

mod goldstein_taylor;
mod granular;
mod jin_xin;
pub mod registry;
mod shallow_water;
mod traffic;
pub mod upwind;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngExt};

pub use goldstein_taylor::{goldstein_taylor_three_scale, goldstein_taylor_two_scale};
pub use granular::{granular_model, GranularParams, TemperatureField};
pub use jin_xin::{jin_xin_diagonalize, jin_xin_three_scale, jin_xin_two_scale, JinXinDiagonalization};
pub use shallow_water::{shallow_water, shallow_water_three_scale};
pub use traffic::{traffic_model, TrafficParams};
pub use upwind::{make_upwind, DiscretizationOp, Variant};

use crate::error::{Error, Result};
use crate::integrator::{integrate_reduced, integrate_stiff_with, integrate_three_scale_with, ControlSignal, IntegrationOptions, Layout, Trajectory};
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::reduction::{build_reduced, cascade_reduce, ReducedSystem};
use crate::system::{ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

type StateMap = Arc<dyn Fn(&Vector) -> Result<Vector> + Send + Sync>;

/// Component-wise scalar nonlinearity, e.g. a flux `𝓕(u) = u²/2`.
#[derive(Clone)]
pub struct Flux {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Flux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Flux({})", self.name)
    }
}

impl Flux {
    pub fn new(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), f: Arc::new(f) }
    }

    /// `u²/2`
    pub fn burgers() -> Self {
        Self::new("burgers", |u| 0.5 * u * u)
    }

    pub fn linear(c: f64) -> Self {
        Self::new("linear", move |u| c * u)
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn apply(&self, u: &Vector) -> Vector {
        u.map(|x| (self.f)(x))
    }
}

/// Spatial shape of a control gain column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Uniform,
    Sine,
    Cosine,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Profile::Uniform),
            "sine" => Ok(Profile::Sine),
            "cosine" => Ok(Profile::Cosine),
            _ => Err(Error::InvalidArgument(format!("unknown gain profile {s}"))),
        }
    }
}

/// Cell centres `x_i = (i + 1/2) dx` of a periodic grid.
pub fn cell_centres(d: usize, dx: f64) -> Vec<f64> {
    (0..d).map(|i| (i as f64 + 0.5) * dx).collect()
}

/// Constant `d × 1` gain `scale · profile(x_i)` on a domain of length `d · dx`.
pub fn profile_gain(d: usize, dx: f64, scale: f64, profile: Profile) -> MatrixField {
    let len = d as f64 * dx;
    let col = Vector::from_iterator(
        d,
        cell_centres(d, dx).into_iter().map(|x| {
            scale
                * match profile {
                    Profile::Uniform => 1.0,
                    Profile::Sine => (2.0 * PI * x / len).sin(),
                    Profile::Cosine => (2.0 * PI * x / len).cos(),
                }
        }),
    );
    MatrixField::constant_vector(col)
}

/// `d` samples of `mean + amp · sin(2π x / L)`.
pub fn sine_wave(d: usize, dx: f64, mean: f64, amp: f64) -> Vector {
    let len = d as f64 * dx;
    Vector::from_iterator(d, cell_centres(d, dx).into_iter().map(|x| mean + amp * (2.0 * PI * x / len).sin()))
}

/// Lifts a field of the `d`-vector `z[start..start+d]` to a field of `z`.
pub(crate) fn on_segment(field: &MatrixField, start: usize, d: usize) -> MatrixField {
    let (rows, cols) = field.dims();
    let f = field.clone();
    MatrixField::new(rows, cols, move |z| f.eval(&z.rows(start, d).into_owned()))
}

/// `rows × cols` field whose first `d` rows are `gain(z[0..d])`, zero below.
pub(crate) fn top_block(rows: usize, d: usize, gain: &MatrixField) -> MatrixField {
    let cols = gain.dims().1;
    let g = on_segment(gain, 0, d);
    MatrixField::new(rows, cols, move |z| {
        let mut out = Matrix::zeros(rows, cols);
        out.rows_mut(0, d).copy_from(&g.eval(z)?);
        Ok(out)
    })
}

pub(crate) fn seg(z: &Vector, k: usize, d: usize) -> Vector {
    z.rows(k * d, d).into_owned()
}

/// Dense block matrix from `(block_row, block_col, block)` triples with uniform block size `d`.
pub(crate) fn blocks(block_rows: usize, block_cols: usize, d: usize, parts: &[(usize, usize, &Matrix)]) -> Matrix {
    let mut out = Matrix::zeros(block_rows * d, block_cols * d);
    for &(i, j, b) in parts {
        out.view_mut((i * d, j * d), (b.nrows(), b.ncols())).copy_from(b);
    }
    out
}

/// Stacks vectors into one column.
pub(crate) fn stack(parts: &[Vector]) -> Vector {
    let refs: Vec<&Vector> = parts.iter().collect();
    crate::linalg::concat(&refs)
}

pub(crate) fn check_gain(name: &str, gain: &MatrixField, d: usize) -> Result<usize> {
    let (rows, cols) = gain.dims();
    if rows != d {
        return Err(Error::dims(&format!("gain {name}"), d, rows));
    }
    Ok(cols)
}

/// The control system behind a model.
#[derive(Debug, Clone)]
pub enum ModelSystem {
    Two(TwoScaleSystem),
    Three(ThreeScaleSystem),
}

impl ModelSystem {
    /// The two-scale (macro, meso) part.
    pub fn two(&self) -> &TwoScaleSystem {
        match self {
            ModelSystem::Two(s) => s,
            ModelSystem::Three(s) => &s.two,
        }
    }

    pub fn three(&self) -> Option<&ThreeScaleSystem> {
        match self {
            ModelSystem::Two(_) => None,
            ModelSystem::Three(s) => Some(s),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.two().epsilon()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Ok(match self {
            ModelSystem::Two(s) => ModelSystem::Two(s.with_epsilon(epsilon)?),
            ModelSystem::Three(s) => ModelSystem::Three(s.with_epsilon(epsilon)?),
        })
    }

    /// Micro dimension, 0 for two-scale systems.
    pub fn l(&self) -> usize {
        self.three().map_or(0, |s| s.l())
    }
}

/// Default initial data and controls used by sweeps.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub z0: Vector,
    pub y0: Vector,
    pub x0: Option<Vector>,
    pub alpha: ControlSignal,
    pub beta: ControlSignal,
    pub gamma: Option<ControlSignal>,
}

impl Scenario {
    pub fn horizon(&self) -> f64 {
        self.alpha.horizon()
    }
}

/// A model of the zoo with its system, state layout and diagnostics.
#[derive(Clone)]
pub struct ModelInstance {
    pub name: String,
    pub system: ModelSystem,
    /// Slow slices, then fast slices, then micro slices.
    pub layout: Layout,
    pub grid: DiscretizationOp,
    pub fluxes: Vec<(String, Flux)>,
    pub gains: Vec<(String, MatrixField)>,
    pub diagonalization: Option<JinXinDiagonalization>,
    pub defaults: Scenario,
    /// Box of slow states used for random sampling in diagnostics.
    pub sample_box: ControlBox,
    equilibrium: StateMap,
    micro_equilibrium: Option<StateMap>,
}

impl fmt::Debug for ModelInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelInstance")
            .field("name", &self.name)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl ModelInstance {
    pub fn m(&self) -> usize {
        self.system.two().m()
    }

    pub fn n(&self) -> usize {
        self.system.two().n()
    }

    pub fn l(&self) -> usize {
        self.system.l()
    }

    pub fn slow_layout(&self) -> Layout {
        self.layout.sub(0, self.m())
    }

    /// Fast state on the `β = 0` local-equilibrium manifold.
    pub fn equilibrium(&self, z: &Vector) -> Result<Vector> {
        (self.equilibrium)(z)
    }

    /// Micro state on the `γ = 0` manifold, for three-scale models.
    pub fn micro_equilibrium(&self, z: &Vector) -> Result<Option<Vector>> {
        self.micro_equilibrium.as_ref().map(|f| f(z)).transpose()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut out = self.clone();
        out.system = self.system.with_epsilon(epsilon)?;
        Ok(out)
    }

    /// Uniform sample from `sample_box`.
    pub fn sample_slow_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let b = &self.sample_box;
        Vector::from_iterator(
            b.dim(),
            (0..b.dim()).map(|i| rng.random_range(b.lower()[i]..=b.upper()[i])),
        )
    }

    /// Reduced macro system: `build_reduced`, or the cascade for three-scale models.
    /// For three-scale models the slow control is `(α, γ)`.
    pub fn reduced(&self) -> Result<ReducedSystem> {
        match &self.system {
            ModelSystem::Two(s) => Ok(build_reduced(s)),
            ModelSystem::Three(s) => Ok(cascade_reduce(s)?.1),
        }
    }

    /// Stiff run of a scenario, labelled with the model layout.
    pub fn simulate_stiff(&self, sc: &Scenario, steps: usize, opts: &IntegrationOptions) -> Result<Trajectory> {
        let tr = match &self.system {
            ModelSystem::Two(s) => integrate_stiff_with(s, &sc.alpha, &sc.beta, &sc.z0, &sc.y0, steps, opts)?,
            ModelSystem::Three(s) => {
                let (gamma, x0) = self.micro_inputs(sc)?;
                integrate_three_scale_with(s, &sc.alpha, &sc.beta, gamma, &sc.z0, &sc.y0, x0, steps, opts)?
            }
        };
        tr.with_layout(self.layout.clone())
    }

    /// Reduced run of a scenario, labelled with the slow layout.
    pub fn simulate_reduced(&self, sc: &Scenario, steps: usize) -> Result<Trajectory> {
        let red = self.reduced()?;
        let tr = match &self.system {
            ModelSystem::Two(_) => integrate_reduced(&red, &sc.alpha, &sc.beta, &sc.z0, steps)?,
            ModelSystem::Three(_) => {
                let (gamma, _) = self.micro_inputs(sc)?;
                integrate_reduced(&red, &sc.alpha.join(gamma)?, &sc.beta, &sc.z0, steps)?
            }
        };
        tr.with_layout(self.slow_layout())
    }

    fn micro_inputs<'a>(&self, sc: &'a Scenario) -> Result<(&'a ControlSignal, &'a Vector)> {
        match (&sc.gamma, &sc.x0) {
            (Some(g), Some(x)) => Ok((g, x)),
            _ => Err(Error::InvalidArgument(format!(
                "model {} is three-scale; the scenario needs gamma and x0",
                self.name
            ))),
        }
    }
}

/// `‖A2 y + B2 β + C2‖∞` (and the micro bracket for three-scale models).
pub fn local_equilibrium_residual(model: &ModelInstance, state: &Vector, beta: &Vector, gamma: Option<&Vector>) -> Result<f64> {
    if state.len() != model.layout.width() {
        return Err(Error::LayoutMismatch(format!(
            "state has {} entries, layout of {} needs {}",
            state.len(),
            model.name,
            model.layout.width()
        )));
    }
    let (m, n) = (model.m(), model.n());
    let z = state.rows(0, m).into_owned();
    let y = state.rows(m, n).into_owned();
    let mut res = inf_norm(&model.system.two().fast_bracket(&z, &y, beta)?);
    if let Some(s3) = model.system.three() {
        let x = state.rows(m + n, s3.l()).into_owned();
        let g = match gamma {
            Some(g) => g.clone(),
            None => Vector::zeros(s3.r()),
        };
        res = res.max(inf_norm(&s3.micro_bracket(&z, &x, &g)?));
    }
    Ok(res)
}

/// Piecewise-constant default control: `+value` on the first half of `[0, T]`, `-value` after.
pub(crate) fn switching_control(omega: &ControlBox, value: f64, horizon: f64) -> Result<ControlSignal> {
    let dim = omega.dim();
    ControlSignal::new(
        vec![0.0, 0.5 * horizon, horizon],
        vec![Vector::from_element(dim, value), Vector::from_element(dim, -value)],
        omega.clone(),
    )
}
