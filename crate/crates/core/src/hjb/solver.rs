use rayon::prelude::*;

use super::grid::{Grid, GridValueFunction};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::reduction::{cascade_reduce, ReducedSystem};
use crate::system::{ControlBox, CostSpec, ThreeScaleSystem, TwoScaleSystem};

/// Default cap on the number of grid nodes.
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

type Drift<'a> = Box<dyn Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync + 'a>;
type StateCost<'a> = Box<dyn Fn(&Vector) -> f64 + Send + Sync + 'a>;

/// Time stepping and bookkeeping of a semi-Lagrangian march.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbOptions {
    pub steps: usize,
    pub budget: usize,
    /// Record every k-th slice (the last slice is always recorded); `None` keeps about 100 slices.
    pub record_every: Option<usize>,
}

impl HjbOptions {
    pub fn new(steps: usize) -> Self {
        Self { steps, budget: DEFAULT_NODE_BUDGET, record_every: None }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn recording_every(mut self, k: usize) -> Self {
        self.record_every = Some(k.max(1));
        self
    }
}

/// Box vertices plus the midpoint: the control search set of the scheme.
pub fn control_set(omega: &ControlBox) -> Vec<Vector> {
    let mut out = omega.vertices();
    let mid = omega.midpoint();
    if !out.contains(&mid) {
        out.push(mid);
    }
    out
}

/// A finite-horizon control problem `V(x, 0) = φ(x)`, `V_t + max_u {-f(x, u)·∇V - ℓ(x)} = 0`
/// discretized on a grid.
pub struct SlProblem<'a> {
    pub grid: Grid,
    pub controls: Vec<Vector>,
    drift: Drift<'a>,
    running: StateCost<'a>,
    terminal: StateCost<'a>,
    pub horizon: f64,
}

impl<'a> SlProblem<'a> {
    pub fn new(
        grid: Grid,
        controls: Vec<Vector>,
        drift: impl Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync + 'a,
        running: impl Fn(&Vector) -> f64 + Send + Sync + 'a,
        terminal: impl Fn(&Vector) -> f64 + Send + Sync + 'a,
        horizon: f64,
    ) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::InvalidArgument("empty control set".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            grid,
            controls,
            drift: Box::new(drift),
            running: Box::new(running),
            terminal: Box::new(terminal),
            horizon,
        })
    }

    fn courant_rate(&self, f: &Vector) -> f64 {
        (0..self.grid.dim()).map(|k| f[k].abs() / self.grid.spacing(k)).fold(0.0, f64::max)
    }

    /// Smallest step count whose time step satisfies `h · max|f_k|/Δ_k ≤ 1` everywhere.
    pub fn min_steps(&self) -> Result<usize> {
        let rates: Vec<Result<f64>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let x = self.grid.node(i);
                let mut r: f64 = 0.0;
                for u in &self.controls {
                    r = r.max(self.courant_rate(&(self.drift)(&x, u)?));
                }
                Ok(r)
            })
            .collect();
        let mut rate: f64 = 0.0;
        for r in rates {
            rate = rate.max(r?);
        }
        Ok(((self.horizon * rate) * (1.0 + 1e-12)).ceil().max(1.0) as usize)
    }

    pub fn solve(&self, opts: &HjbOptions) -> Result<GridValueFunction> {
        if self.grid.len() > opts.budget {
            return Err(Error::GridTooLarge { nodes: self.grid.len(), budget: opts.budget });
        }
        if opts.steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        let h = self.horizon / opts.steps as f64;
        let scheme = Scheme::build(&self.grid, &self.controls, &self.drift, &self.running, h, &[])?;
        let terminal = self.grid.sample(&self.terminal);
        if let Some(node) = terminal.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { slice: 0, node });
        }
        let every = opts.record_every.unwrap_or_else(|| opts.steps.div_ceil(100)).max(1);
        let mut times = vec![0.0];
        let mut values = vec![terminal.clone()];
        let mut v = terminal;
        let mut next = vec![0.0; v.len()];
        for k in 1..=opts.steps {
            scheme.apply(&v, &mut next, 1.0);
            if let Some(node) = next.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteValue { slice: k, node });
            }
            std::mem::swap(&mut v, &mut next);
            if k % every == 0 || k == opts.steps {
                times.push(if k == opts.steps { self.horizon } else { k as f64 * h });
                values.push(v.clone());
            }
        }
        Ok(GridValueFunction { grid: self.grid.clone(), times, values, step: h })
    }
}

/// Precomputed semi-Lagrangian stencils: for each node and control the running
/// cost `h ℓ` and the multilinear stencil of the foot `x + h f(x, u)`.
pub(crate) struct Scheme {
    corners: usize,
    controls: usize,
    idx: Vec<u32>,
    w: Vec<f64>,
    run: Vec<f64>,
}

impl Scheme {
    pub(crate) fn build(
        grid: &Grid,
        controls: &[Vector],
        drift: &(dyn Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync),
        running: &(dyn Fn(&Vector) -> f64 + Send + Sync),
        h: f64,
        wrap: &[bool],
    ) -> Result<Self> {
        let corners = 1usize << grid.dim();
        let nc = controls.len();
        let per_node: Vec<Result<(Vec<u32>, Vec<f64>, f64)>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let mut idx = vec![0u32; nc * corners];
                let mut w = vec![0.0; nc * corners];
                for (c, u) in controls.iter().enumerate() {
                    let f = drift(&x, u)?;
                    if f.len() != grid.dim() {
                        return Err(Error::dims("drift", grid.dim(), f.len()));
                    }
                    let courant = h * (0..grid.dim()).map(|k| f[k].abs() / grid.spacing(k)).fold(0.0, f64::max);
                    if !(courant <= 1.0 + 1e-9) {
                        return Err(Error::CflViolation { node: i, control: c, courant });
                    }
                    let foot = &x + h * f;
                    let r = c * corners..(c + 1) * corners;
                    grid.stencil_into(foot.as_slice(), wrap, &mut idx[r.clone()], &mut w[r]);
                }
                Ok((idx, w, h * running(&x)))
            })
            .collect();
        let mut scheme = Scheme {
            corners,
            controls: nc,
            idx: Vec::with_capacity(grid.len() * nc * corners),
            w: Vec::with_capacity(grid.len() * nc * corners),
            run: Vec::with_capacity(grid.len()),
        };
        for r in per_node {
            let (idx, w, run) = r?;
            scheme.idx.extend(idx);
            scheme.w.extend(w);
            scheme.run.push(run);
        }
        Ok(scheme)
    }

    /// `out_i = min_u [h ℓ_i + I[v](x_i + h f)] · scale`
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64], scale: f64) {
        let block = self.controls * self.corners;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let base = i * block;
            let mut best = f64::INFINITY;
            for c in 0..self.controls {
                let s = base + c * self.corners;
                let mut acc = 0.0;
                for j in s..s + self.corners {
                    acc += self.w[j] * v[self.idx[j] as usize];
                }
                best = best.min(acc);
            }
            *o = (self.run[i] + best) * scale;
        });
    }

    /// Minimizing control index per node.
    pub(crate) fn policy(&self, v: &[f64]) -> Vec<usize> {
        let block = self.controls * self.corners;
        (0..self.run.len())
            .into_par_iter()
            .map(|i| {
                let base = i * block;
                let mut best = (f64::INFINITY, 0);
                for c in 0..self.controls {
                    let s = base + c * self.corners;
                    let acc: f64 = (s..s + self.corners).map(|j| self.w[j] * v[self.idx[j] as usize]).sum();
                    if acc < best.0 {
                        best = (acc, c);
                    }
                }
                best.1
            })
            .collect()
    }

    /// Stencil `(node, weight)` pairs of node `i` under control `c`.
    pub(crate) fn row(&self, i: usize, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = i * self.controls * self.corners + c * self.corners;
        (s..s + self.corners).map(move |j| (self.idx[j] as usize, self.w[j]))
    }

    pub(crate) fn running(&self, i: usize) -> f64 {
        self.run[i]
    }
}

fn check_grid_dim(grid: &Grid, dim: usize, what: &str) -> Result<()> {
    if grid.dim() != dim {
        return Err(Error::GridMismatch(format!("{what} needs a {dim}-axis grid, got {}", grid.dim())));
    }
    Ok(())
}

/// Effective problem: reduced dynamics with controls `(α, β) ∈ Ω_A × Ω_B`.
pub fn effective_problem<'a>(red: &'a ReducedSystem, cost: &'a CostSpec, grid: &Grid) -> Result<SlProblem<'a>> {
    check_grid_dim(grid, red.m(), "the effective problem")?;
    let p = red.p();
    let controls = control_set(&red.omega_a.product(&red.omega_b));
    SlProblem::new(
        grid.clone(),
        controls,
        move |z, u| red.rhs(z, &u.rows(0, p).into_owned(), &u.rows(p, u.len() - p).into_owned()),
        move |z| cost.running(z),
        move |z| cost.terminal(z),
        cost.horizon,
    )
}

/// Full two-scale problem on the `(z, y)` grid with characteristic step `(h f_slow, (h/ε) f_fast)`.
pub fn full_problem<'a>(sys: &'a TwoScaleSystem, cost: &'a CostSpec, grid: &Grid) -> Result<SlProblem<'a>> {
    let (m, n, p) = (sys.m(), sys.n(), sys.p());
    check_grid_dim(grid, m + n, "the full problem")?;
    let eps = sys.epsilon();
    let controls = control_set(&sys.omega_a.product(&sys.omega_b));
    SlProblem::new(
        grid.clone(),
        controls,
        move |x, u| {
            let z = x.rows(0, m).into_owned();
            let y = x.rows(m, n).into_owned();
            let alpha = u.rows(0, p).into_owned();
            let beta = u.rows(p, u.len() - p).into_owned();
            let fz = sys.slow_drift(&z, &y, &alpha)?;
            let fy = sys.fast_bracket(&z, &y, &beta)? / eps;
            Ok(crate::linalg::concat(&[&fz, &fy]))
        },
        move |x| cost.running(&x.rows(0, m).into_owned()),
        move |x| cost.terminal(&x.rows(0, m).into_owned()),
        cost.horizon,
    )
}

/// Full three-scale problem on the `(z, y, x)` grid; the micro drift is scaled by `1/ε²`.
pub fn full_three_scale_problem<'a>(sys3: &'a ThreeScaleSystem, cost: &'a CostSpec, grid: &Grid) -> Result<SlProblem<'a>> {
    let sys = &sys3.two;
    let (m, n, l, p, q) = (sys.m(), sys.n(), sys3.l(), sys.p(), sys.q());
    check_grid_dim(grid, m + n + l, "the full three-scale problem")?;
    let eps = sys.epsilon();
    let controls = control_set(&sys.omega_a.product(&sys.omega_b).product(&sys3.omega_g));
    SlProblem::new(
        grid.clone(),
        controls,
        move |s, u| {
            let z = s.rows(0, m).into_owned();
            let y = s.rows(m, n).into_owned();
            let x = s.rows(m + n, l).into_owned();
            let alpha = u.rows(0, p).into_owned();
            let beta = u.rows(p, q).into_owned();
            let gamma = u.rows(p + q, u.len() - p - q).into_owned();
            let fz = sys3.slow_drift(&z, &y, &x, &alpha)?;
            let fy = sys.fast_bracket(&z, &y, &beta)? / eps;
            let fx = sys3.micro_bracket(&z, &x, &gamma)? / (eps * eps);
            Ok(crate::linalg::concat(&[&fz, &fy, &fx]))
        },
        move |s| cost.running(&s.rows(0, m).into_owned()),
        move |s| cost.terminal(&s.rows(0, m).into_owned()),
        cost.horizon,
    )
}

/// Value function of the effective (reduced) problem on a slow grid.
pub fn solve_hjb_effective(red: &ReducedSystem, cost: &CostSpec, grid: &Grid, opts: &HjbOptions) -> Result<GridValueFunction> {
    effective_problem(red, cost, grid)?.solve(opts)
}

/// Value function `V^ε` of the full two-scale problem on a `(z, y)` grid.
pub fn solve_hjb_full(sys: &TwoScaleSystem, cost: &CostSpec, grid: &Grid, opts: &HjbOptions) -> Result<GridValueFunction> {
    if grid.len() > opts.budget {
        return Err(Error::GridTooLarge { nodes: grid.len(), budget: opts.budget });
    }
    full_problem(sys, cost, grid)?.solve(opts)
}

/// Value function of the full three-scale problem on a `(z, y, x)` grid.
pub fn solve_hjb_full_three_scale(
    sys3: &ThreeScaleSystem,
    cost: &CostSpec,
    grid: &Grid,
    opts: &HjbOptions,
) -> Result<GridValueFunction> {
    if grid.len() > opts.budget {
        return Err(Error::GridTooLarge { nodes: grid.len(), budget: opts.budget });
    }
    full_three_scale_problem(sys3, cost, grid)?.solve(opts)
}

/// Macro value function of a three-scale system. The march runs on the cascaded
/// reduction, whose control-vertex search realizes the Hamiltonian
/// `-p·C1 + sup_α + λ₁ + λ₂`.
pub fn solve_hjb_multiscale_effective(
    sys3: &ThreeScaleSystem,
    cost: &CostSpec,
    grid: &Grid,
    opts: &HjbOptions,
) -> Result<GridValueFunction> {
    let (_, red) = cascade_reduce(sys3)?;
    solve_hjb_effective(&red, cost, grid, opts)
}
