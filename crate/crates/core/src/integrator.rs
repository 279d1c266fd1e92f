//! Time integration of stiff, reduced and three-scale systems.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{concat, inf_norm, solve_checked, Matrix, Vector};
use crate::reduction::ReducedSystem;
use crate::system::{ControlBox, ThreeScaleSystem, TwoScaleSystem};

/// Piecewise-constant control `u(t) = values[k]` on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    breakpoints: Vec<f64>,
    values: Vec<Vector>,
    omega: ControlBox,
}

impl ControlSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vector>, omega: ControlBox) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "control signal needs k values and k+1 breakpoints, got {} and {}",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument("control breakpoints must start at 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || !breakpoints.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("control breakpoints must be finite and increasing".into()));
        }
        for (k, v) in values.iter().enumerate() {
            if v.len() != omega.dim() {
                return Err(Error::dims("control value", omega.dim(), v.len()));
            }
            if !omega.contains(v) {
                return Err(Error::InvalidArgument(format!("control value {k} lies outside its box")));
            }
        }
        Ok(Self { breakpoints, values, omega })
    }

    pub fn constant(value: Vector, omega: ControlBox, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![value], omega)
    }

    /// The box midpoint held over `[0, horizon]`.
    pub fn midpoint(omega: &ControlBox, horizon: f64) -> Result<Self> {
        Self::constant(omega.midpoint(), omega.clone(), horizon)
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty breakpoints")
    }

    pub fn omega(&self) -> &ControlBox {
        &self.omega
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    /// Value at time `t`; times at or beyond the horizon use the last piece.
    pub fn at(&self, t: f64) -> &Vector {
        let k = self.breakpoints[1..].partition_point(|&b| b <= t);
        &self.values[k.min(self.values.len() - 1)]
    }

    /// Pointwise concatenation of two signals on the same horizon.
    pub fn join(&self, other: &ControlSignal) -> Result<ControlSignal> {
        check_horizons(self.horizon(), other.horizon())?;
        let mut times: Vec<f64> = self.breakpoints.iter().chain(other.breakpoints.iter()).copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = times[..times.len() - 1]
            .iter()
            .map(|&t| concat(&[self.at(t), other.at(t)]))
            .collect();
        ControlSignal::new(times, values, self.omega.product(&other.omega))
    }
}

fn check_horizons(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!("control horizons differ: {a} vs {b}")));
    }
    Ok(())
}

/// A named contiguous block of the state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Ordered partition of a state vector into named slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    slices: Vec<Slice>,
}

impl Layout {
    pub fn new(parts: &[(&str, usize)]) -> Self {
        let mut start = 0;
        let slices = parts
            .iter()
            .map(|&(name, len)| {
                let s = Slice { name: name.to_string(), start, len };
                start += len;
                s
            })
            .collect();
        Self { slices }
    }

    pub fn width(&self) -> usize {
        self.slices.iter().map(|s| s.len).sum()
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn get(&self, name: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.name == name)
    }

    /// Slices in `[start, start + len)`, renumbered from zero.
    pub fn sub(&self, start: usize, len: usize) -> Layout {
        let slices = self
            .slices
            .iter()
            .filter(|s| s.start >= start && s.start + s.len <= start + len)
            .map(|s| Slice { name: s.name.clone(), start: s.start - start, len: s.len })
            .collect();
        Layout { slices }
    }
}

/// State history on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub layout: Layout,
    /// Non-fatal conditions met during integration (e.g. fast state out of bounds).
    pub warnings: Vec<Error>,
}

impl Trajectory {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Values of a named slice at grid index `k`.
    pub fn component(&self, k: usize, name: &str) -> Result<Vector> {
        let s = self
            .layout
            .get(name)
            .ok_or_else(|| Error::LayoutMismatch(format!("no slice named {name}")))?;
        Ok(self.states[k].rows(s.start, s.len).into_owned())
    }

    /// Replaces the layout by another partition of the same width.
    pub fn with_layout(mut self, layout: Layout) -> Result<Self> {
        if layout.width() != self.layout.width() {
            return Err(Error::LayoutMismatch(format!(
                "layout width {} does not match state width {}",
                layout.width(),
                self.layout.width()
            )));
        }
        self.layout = layout;
        Ok(self)
    }

    /// CSV with header `time,<slice>_<index>,...` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        for s in self.layout.slices() {
            header.extend((0..s.len).map(|i| format!("{}_{}", s.name, i)));
        }
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row = std::iter::once(*t).chain(x.iter().copied()).map(fmt_f64);
            w.write_record(row)?;
        }
        w.flush()
    }
}

/// Full-precision float formatting shared by every CSV writer.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Options shared by the stiff integrators.
#[derive(Debug, Clone, Default)]
pub struct IntegrationOptions {
    /// Box the fast state is expected to stay in; leaving it records a warning.
    pub fast_bounds: Option<ControlBox>,
}

fn time_grid(horizon: f64, steps: usize) -> Result<(f64, Vec<f64>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let h = horizon / steps as f64;
    Ok((h, (0..=steps).map(|k| k as f64 * h).collect()))
}

fn check_finite(x: &Vector, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

fn check_initial(x: &Vector, len: usize, what: &str) -> Result<()> {
    if x.len() != len {
        return Err(Error::dims(what, len, x.len()));
    }
    check_finite(x, 0)
}

/// Implicit Euler step for `ε ẏ = A y + b`: `(I - (h/ε) A) y⁺ = y + (h/ε) b`.
fn implicit_relax(a: &Matrix, b: &Vector, y: &Vector, ratio: f64) -> Result<Vector> {
    let n = y.len();
    let lhs = Matrix::identity(n, n) - a * ratio;
    solve_checked(&lhs, &(y + b * ratio))
}

fn watch_bounds(bounds: Option<&ControlBox>, y: &Vector, t: f64, flagged: &mut bool, warnings: &mut Vec<Error>) {
    if let Some(b) = bounds {
        if !*flagged && !b.contains(y) {
            log::warn!("fast state left its bounding box at t = {t}");
            warnings.push(Error::BoundsExceeded { time: t });
            *flagged = true;
        }
    }
}

/// IMEX Euler for the two-scale system. The horizon is taken from the control signals.
pub fn integrate_stiff(
    sys: &TwoScaleSystem,
    alpha: &ControlSignal,
    beta: &ControlSignal,
    z0: &Vector,
    y0: &Vector,
    steps: usize,
) -> Result<Trajectory> {
    integrate_stiff_with(sys, alpha, beta, z0, y0, steps, &IntegrationOptions::default())
}

pub fn integrate_stiff_with(
    sys: &TwoScaleSystem,
    alpha: &ControlSignal,
    beta: &ControlSignal,
    z0: &Vector,
    y0: &Vector,
    steps: usize,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    check_horizons(alpha.horizon(), beta.horizon())?;
    check_initial(z0, sys.m(), "initial slow state")?;
    check_initial(y0, sys.n(), "initial fast state")?;
    let (h, times) = time_grid(alpha.horizon(), steps)?;
    let ratio = h / sys.epsilon();
    let (m, n) = (sys.m(), sys.n());

    let mut states = Vec::with_capacity(steps + 1);
    let mut warnings = Vec::new();
    let mut flagged = false;
    let (mut z, mut y) = (z0.clone(), y0.clone());
    states.push(concat(&[&z, &y]));
    for k in 0..steps {
        let t = times[k];
        let (a, b) = (alpha.at(t), beta.at(t));
        let z_next = &z + sys.slow_drift(&z, &y, a)? * h;
        let forcing = sys.b2.eval(&z)? * b + sys.c2.eval_vector(&z)?;
        y = implicit_relax(&sys.a2.eval(&z)?, &forcing, &y, ratio)?;
        z = z_next;
        check_finite(&z, k + 1)?;
        check_finite(&y, k + 1)?;
        watch_bounds(opts.fast_bounds.as_ref(), &y, times[k + 1], &mut flagged, &mut warnings);
        states.push(concat(&[&z, &y]));
    }
    Ok(Trajectory { times, states, layout: Layout::new(&[("z", m), ("y", n)]), warnings })
}

/// Classical RK4 for the reduced system; controls are sampled at the left end of each step.
pub fn integrate_reduced(
    red: &ReducedSystem,
    alpha: &ControlSignal,
    beta: &ControlSignal,
    z0: &Vector,
    steps: usize,
) -> Result<Trajectory> {
    check_horizons(alpha.horizon(), beta.horizon())?;
    check_initial(z0, red.m(), "initial slow state")?;
    let (h, times) = time_grid(alpha.horizon(), steps)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut z = z0.clone();
    states.push(z.clone());
    for k in 0..steps {
        let (a, b) = (alpha.at(times[k]), beta.at(times[k]));
        let k1 = red.rhs(&z, a, b)?;
        let k2 = red.rhs(&(&z + &k1 * (0.5 * h)), a, b)?;
        let k3 = red.rhs(&(&z + &k2 * (0.5 * h)), a, b)?;
        let k4 = red.rhs(&(&z + &k3 * h), a, b)?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check_finite(&z, k + 1)?;
        states.push(z.clone());
    }
    Ok(Trajectory { times, states, layout: Layout::new(&[("z", red.m())]), warnings: Vec::new() })
}

/// IMEX Euler for the three-scale system: meso implicit with `h/ε`, micro with `h/ε²`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_three_scale(
    sys3: &ThreeScaleSystem,
    alpha: &ControlSignal,
    beta: &ControlSignal,
    gamma: &ControlSignal,
    z0: &Vector,
    y0: &Vector,
    x0: &Vector,
    steps: usize,
) -> Result<Trajectory> {
    integrate_three_scale_with(sys3, alpha, beta, gamma, z0, y0, x0, steps, &IntegrationOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn integrate_three_scale_with(
    sys3: &ThreeScaleSystem,
    alpha: &ControlSignal,
    beta: &ControlSignal,
    gamma: &ControlSignal,
    z0: &Vector,
    y0: &Vector,
    x0: &Vector,
    steps: usize,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let sys = &sys3.two;
    check_horizons(alpha.horizon(), beta.horizon())?;
    check_horizons(alpha.horizon(), gamma.horizon())?;
    check_initial(z0, sys.m(), "initial slow state")?;
    check_initial(y0, sys.n(), "initial meso state")?;
    check_initial(x0, sys3.l(), "initial micro state")?;
    let (h, times) = time_grid(alpha.horizon(), steps)?;
    let eps = sys.epsilon();
    let (meso_ratio, micro_ratio) = (h / eps, h / (eps * eps));

    let mut states = Vec::with_capacity(steps + 1);
    let mut warnings = Vec::new();
    let mut flagged = false;
    let (mut z, mut y, mut x) = (z0.clone(), y0.clone(), x0.clone());
    states.push(concat(&[&z, &y, &x]));
    for k in 0..steps {
        let t = times[k];
        let (a, b, g) = (alpha.at(t), beta.at(t), gamma.at(t));
        let z_next = &z + sys3.slow_drift(&z, &y, &x, a)? * h;
        let meso = sys.b2.eval(&z)? * b + sys.c2.eval_vector(&z)?;
        y = implicit_relax(&sys.a2.eval(&z)?, &meso, &y, meso_ratio)?;
        let micro = sys3.b3.eval(&z)? * g + sys3.c3.eval_vector(&z)?;
        x = implicit_relax(&sys3.a3.eval(&z)?, &micro, &x, micro_ratio)?;
        z = z_next;
        for part in [&z, &y, &x] {
            check_finite(part, k + 1)?;
        }
        watch_bounds(opts.fast_bounds.as_ref(), &y, times[k + 1], &mut flagged, &mut warnings);
        states.push(concat(&[&z, &y, &x]));
    }
    let layout = Layout::new(&[("z", sys.m()), ("y", sys.n()), ("x", sys3.l())]);
    Ok(Trajectory { times, states, layout, warnings })
}

/// `max_t ‖a(t) - b(t)‖∞` over the named slice.
pub fn trajectory_error(a: &Trajectory, b: &Trajectory, component: &str) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::GridMismatch(format!(
            "time grids have {} and {} points",
            a.times.len(),
            b.times.len()
        )));
    }
    let scale = a.times.last().copied().unwrap_or(1.0).abs().max(1.0);
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12 * scale) {
        return Err(Error::GridMismatch("time grids differ".into()));
    }
    let (sa, sb) = match (a.layout.get(component), b.layout.get(component)) {
        (Some(sa), Some(sb)) => (sa, sb),
        _ => return Err(Error::GridMismatch(format!("slice {component} missing from a layout"))),
    };
    if sa.len != sb.len {
        return Err(Error::GridMismatch(format!(
            "slice {component} has widths {} and {}",
            sa.len, sb.len
        )));
    }
    Ok(a.states
        .iter()
        .zip(&b.states)
        .map(|(xa, xb)| inf_norm(&(xa.rows(sa.start, sa.len) - xb.rows(sb.start, sb.len))))
        .fold(0.0, f64::max))
}
