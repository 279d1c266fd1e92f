//! Ergodic cell problems by the vanishing-discount method.

use nalgebra::DMatrix;

use super::grid::Grid;
use super::solver::{control_set, Scheme};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::system::{spectral_abscissa, ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

/// How the discounted stationary equation is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMethod {
    /// Policy iteration with dense solves for small grids, value iteration above `dense_limit` nodes.
    Auto,
    ValueIteration,
    PolicyIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOptions {
    /// Node where the corrector is pinned to 0; `None` picks the centre node.
    pub reference: Option<usize>,
    /// Stop when `sup |T w - w| ≤ tolerance`.
    pub tolerance: f64,
    /// Cap on value-iteration sweeps (and on policy-improvement rounds times 100).
    pub max_iterations: usize,
    pub method: CellMethod,
    pub dense_limit: usize,
    pub budget: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            reference: None,
            tolerance: 1e-8,
            max_iterations: 100_000,
            method: CellMethod::Auto,
            dense_limit: 1500,
            budget: super::solver::DEFAULT_NODE_BUDGET,
        }
    }
}

impl CellOptions {
    pub fn with_reference(mut self, node: usize) -> Self {
        self.reference = Some(node);
        self
    }

    pub fn with_method(mut self, method: CellMethod) -> Self {
        self.method = method;
        self
    }
}

/// Ergodic constant and corrector of a cell problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub lambda: f64,
    /// Corrector at the fast grid nodes, zero at `reference`.
    pub corrector: Vec<f64>,
    pub reference: usize,
    pub grid: Grid,
    pub delta: f64,
    /// Pseudo-time step of the semi-Lagrangian update.
    pub step: f64,
    pub iterations: usize,
    /// `sup |T w - w|` after each sweep or policy evaluation.
    pub residuals: Vec<f64>,
}

impl CellResult {
    pub fn corrector_amplitude(&self) -> f64 {
        let max = self.corrector.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.corrector.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn eval_corrector(&self, y: &Vector) -> f64 {
        let wrap = vec![true; self.grid.dim()];
        self.grid.interpolate_wrapped(&self.corrector, y, &wrap)
    }
}

/// Affine fast data frozen at one slow state: `ẏ = A y + B u + c`, running cost `g·y`.
struct FrozenCell {
    a: crate::linalg::Matrix,
    b: crate::linalg::Matrix,
    c: Vector,
    g: Vector,
    omega: ControlBox,
}

fn frozen(
    z: &Vector,
    p: &Vector,
    coupling: &MatrixField,
    a: &MatrixField,
    b: &MatrixField,
    c: &MatrixField,
    omega: &ControlBox,
) -> Result<FrozenCell> {
    let (m, _) = coupling.dims();
    if p.len() != m {
        return Err(Error::dims("slow costate", m, p.len()));
    }
    let name = a.name().to_string();
    let a = a.eval(z)?;
    if !(spectral_abscissa(&a)? < 0.0) {
        return Err(Error::InvalidArgument(format!("{name} is not stable at the given slow state")));
    }
    Ok(FrozenCell { g: coupling.eval(z)?.transpose() * p, a, b: b.eval(z)?, c: c.eval_vector(z)?, omega: omega.clone() })
}

/// Cell problem of the fast block at slow state `z` and costate `p`:
/// `δ w + sup_β {-(A2 y + B2 β + C2)·∇w} - p·A1 y = 0` on a periodic fast grid,
/// with `λ = -δ · mean(w)` and corrector `w - w(reference)`.
pub fn solve_cell(sys: &TwoScaleSystem, z: &Vector, p: &Vector, grid: &Grid, delta: f64) -> Result<CellResult> {
    solve_cell_with(sys, z, p, grid, delta, &CellOptions::default())
}

pub fn solve_cell_with(
    sys: &TwoScaleSystem,
    z: &Vector,
    p: &Vector,
    grid: &Grid,
    delta: f64,
    opts: &CellOptions,
) -> Result<CellResult> {
    sys.require_affine()?;
    if z.len() != sys.m() {
        return Err(Error::dims("slow state", sys.m(), z.len()));
    }
    if grid.dim() != sys.n() {
        return Err(Error::GridMismatch(format!("cell grid has {} axes, fast dimension is {}", grid.dim(), sys.n())));
    }
    let cell = frozen(z, p, &sys.a1, &sys.a2, &sys.b2, &sys.c2, &sys.omega_b)?;
    solve_frozen(&cell, grid, delta, opts)
}

/// Micro cell problem: as [`solve_cell`] with `(A3, B3, C3, A0)` and `Ω_Γ`.
pub fn solve_micro_cell(sys3: &ThreeScaleSystem, z: &Vector, p: &Vector, grid: &Grid, delta: f64) -> Result<CellResult> {
    solve_micro_cell_with(sys3, z, p, grid, delta, &CellOptions::default())
}

pub fn solve_micro_cell_with(
    sys3: &ThreeScaleSystem,
    z: &Vector,
    p: &Vector,
    grid: &Grid,
    delta: f64,
    opts: &CellOptions,
) -> Result<CellResult> {
    if z.len() != sys3.two.m() {
        return Err(Error::dims("slow state", sys3.two.m(), z.len()));
    }
    if grid.dim() != sys3.l() {
        return Err(Error::GridMismatch(format!("cell grid has {} axes, micro dimension is {}", grid.dim(), sys3.l())));
    }
    let cell = frozen(z, p, &sys3.a0, &sys3.a3, &sys3.b3, &sys3.c3, &sys3.omega_g)?;
    solve_frozen(&cell, grid, delta, opts)
}

fn solve_frozen(cell: &FrozenCell, grid: &Grid, delta: f64, opts: &CellOptions) -> Result<CellResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("discount must lie in (0, 1), got {delta}")));
    }
    if grid.len() > opts.budget {
        return Err(Error::GridTooLarge { nodes: grid.len(), budget: opts.budget });
    }
    let reference = match opts.reference {
        Some(r) if r < grid.len() => r,
        Some(r) => return Err(Error::InvalidArgument(format!("reference node {r} outside a {}-node grid", grid.len()))),
        None => grid.flat_index(&grid.axes().iter().map(|a| a.nodes / 2).collect::<Vec<_>>()),
    };
    let controls = control_set(&cell.omega);
    let drift = |y: &Vector, u: &Vector| Ok(&cell.a * y + &cell.b * u + &cell.c);
    let running = |y: &Vector| cell.g.dot(y);

    // Largest step with Courant number 1.
    let mut rate: f64 = 0.0;
    for i in 0..grid.len() {
        let y = grid.node(i);
        for u in &controls {
            let f: Vector = drift(&y, u)?;
            for k in 0..grid.dim() {
                rate = rate.max(f[k].abs() / grid.spacing(k));
            }
        }
    }
    let h = if rate > 0.0 { 1.0 / rate } else { 1.0 };
    let wrap = vec![true; grid.dim()];
    let scheme = Scheme::build(grid, &controls, &drift, &running, h, &wrap)?;
    let beta = 1.0 / (1.0 + delta * h);

    let howard = match opts.method {
        CellMethod::Auto => grid.len() <= opts.dense_limit,
        CellMethod::ValueIteration => false,
        CellMethod::PolicyIteration => true,
    };
    let mut residuals = Vec::new();
    let mut w = vec![0.0; grid.len()];
    let mut iterations = 0;
    if howard {
        iterations = policy_iteration(&scheme, controls.len(), beta, opts, &mut w, &mut residuals)?;
    }
    let mut next = vec![0.0; w.len()];
    loop {
        scheme.apply(&w, &mut next, beta);
        let r = sup_diff(&next, &w);
        if let Some(node) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { slice: iterations, node });
        }
        residuals.push(r);
        std::mem::swap(&mut w, &mut next);
        iterations += 1;
        if r <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence { iterations, residual: r });
        }
    }

    let lambda = -delta * w.iter().sum::<f64>() / w.len() as f64;
    let w_ref = w[reference];
    Ok(CellResult {
        lambda,
        corrector: w.iter().map(|v| v - w_ref).collect(),
        reference,
        grid: grid.clone(),
        delta,
        step: h,
        iterations,
        residuals,
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Howard's algorithm on `w = β (h ℓ + P_π w)`. Leaves the fixed point of the
/// final policy in `w` and returns the number of policy evaluations.
fn policy_iteration(
    scheme: &Scheme,
    n_controls: usize,
    beta: f64,
    opts: &CellOptions,
    w: &mut Vec<f64>,
    residuals: &mut Vec<f64>,
) -> Result<usize> {
    let n = w.len();
    let mut policy = scheme.policy(w);
    let max_rounds = (opts.max_iterations / 100).max(10);
    let mut next = vec![0.0; n];
    for round in 1..=max_rounds {
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut rhs = Vector::zeros(n);
        for i in 0..n {
            rhs[i] = beta * scheme.running(i);
            for (j, wt) in scheme.row(i, policy[i]) {
                m[(i, j)] -= beta * wt;
            }
        }
        let sol = m.lu().solve(&rhs).ok_or(Error::NoConvergence { iterations: round, residual: f64::INFINITY })?;
        w.copy_from_slice(sol.as_slice());
        scheme.apply(w, &mut next, beta);
        residuals.push(sup_diff(&next, w));

        // Switch only on a strict improvement, so ties cannot cycle.
        let scale = 1e-13 * (1.0 + w.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let mut changed = false;
        for i in 0..n {
            let value = |c: usize| scheme.row(i, c).map(|(j, wt)| wt * w[j]).sum::<f64>();
            let current = value(policy[i]);
            let (mut best, mut arg) = (current, policy[i]);
            for c in 0..n_controls {
                let v = value(c);
                if v < best - scale {
                    best = v;
                    arg = c;
                }
            }
            if arg != policy[i] {
                policy[i] = arg;
                changed = true;
            }
        }
        if !changed {
            return Ok(round);
        }
    }
    Err(Error::NoConvergence { iterations: max_rounds, residual: *residuals.last().unwrap_or(&f64::INFINITY) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::reduction::{lambda1_closed_form, lambda2_closed_form, micro_static_map};

    fn scalar(x: f64) -> MatrixField {
        MatrixField::constant(Matrix::from_element(1, 1, x))
    }

    fn benchmark(a1: f64, c2: f64) -> TwoScaleSystem {
        TwoScaleSystem::new(
            scalar(a1),
            scalar(-1.0),
            MatrixField::zeros(1, 1),
            scalar(1.0),
            MatrixField::zeros(1, 1),
            MatrixField::constant_vector(Vector::from_element(1, c2)),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::symmetric(1, 1.0).unwrap(),
            0.1,
        )
        .unwrap()
    }

    fn fast_grid() -> Grid {
        Grid::uniform(&[-3.0], &[3.0], &[201]).unwrap()
    }

    fn one(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn no_coupling_gives_zero() {
        let r = solve_cell(&benchmark(0.0, 0.3), &one(0.0), &one(2.0), &fast_grid(), 1e-3).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert!(r.corrector.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn benchmark_ergodic_constant() {
        let sys = benchmark(1.0, 0.0);
        let exact = lambda1_closed_form(&sys, &one(0.0), &one(2.0)).unwrap();
        assert_eq!(exact, 2.0);
        let r = solve_cell(&sys, &one(0.0), &one(2.0), &fast_grid(), 1e-3).unwrap();
        assert!((r.lambda - 2.0).abs() <= 0.1, "{}", r.lambda);
        assert_eq!(r.corrector[r.reference], 0.0);
        assert!(*r.residuals.last().unwrap() <= 1e-8);
    }

    #[test]
    fn homogeneous_in_the_costate() {
        let sys = benchmark(0.7, 0.0);
        let a = solve_cell(&sys, &one(0.0), &one(1.5), &fast_grid(), 1e-3).unwrap();
        let b = solve_cell(&sys, &one(0.0), &one(3.0), &fast_grid(), 1e-3).unwrap();
        assert!((b.lambda / a.lambda - 2.0).abs() <= 0.02);
    }

    #[test]
    fn lambda_ignores_the_reference_node() {
        let sys = benchmark(1.0, 0.4);
        let g = fast_grid();
        let a = solve_cell_with(&sys, &one(0.0), &one(-1.0), &g, 1e-3, &CellOptions::default().with_reference(10)).unwrap();
        let b = solve_cell_with(&sys, &one(0.0), &one(-1.0), &g, 1e-3, &CellOptions::default().with_reference(150)).unwrap();
        assert!((a.lambda - b.lambda).abs() <= 2e-8);
        assert_eq!(a.corrector[10], 0.0);
        assert_eq!(b.corrector[150], 0.0);
        let shift = a.corrector[150];
        for (x, y) in a.corrector.iter().zip(&b.corrector) {
            assert!((x - shift - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn value_iteration_contracts() {
        let sys = benchmark(1.0, 0.0);
        let opts = CellOptions::default().with_method(CellMethod::ValueIteration);
        let r = solve_cell_with(&sys, &one(0.0), &one(2.0), &fast_grid(), 0.9, &opts).unwrap();
        let factor = 1.0 / (1.0 + 0.9 * r.step);
        for pair in r.residuals.windows(2) {
            // up to rounding in w, whose magnitude is O(1)
            assert!(pair[1] <= factor * pair[0] + 1e-13, "{pair:?}");
        }
        // log-residual slope
        let k = r.residuals.len() - 1;
        let slope = (r.residuals[k].ln() - r.residuals[0].ln()) / k as f64;
        assert!(slope <= factor.ln() * (1.0 - 1e-6));
        let howard = solve_cell(&sys, &one(0.0), &one(2.0), &fast_grid(), 0.9).unwrap();
        // each stops within tolerance / (1 - factor) of the fixed point
        assert!((howard.lambda - r.lambda).abs() <= 1e-5);
    }

    #[test]
    fn rejects_bad_input() {
        let sys = benchmark(1.0, 0.0);
        assert!(solve_cell(&sys, &one(0.0), &one(2.0), &fast_grid(), 1.0).is_err());
        let g2 = Grid::uniform(&[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap();
        assert!(matches!(solve_cell(&sys, &one(0.0), &one(2.0), &g2, 0.1), Err(Error::GridMismatch(_))));
        let opts = CellOptions { max_iterations: 5, method: CellMethod::ValueIteration, ..CellOptions::default() };
        assert!(matches!(
            solve_cell_with(&sys, &one(0.0), &one(2.0), &fast_grid(), 1e-3, &opts),
            Err(Error::NoConvergence { iterations: 5, .. })
        ));
    }

    fn three(a0: f64, omega_g: ControlBox) -> ThreeScaleSystem {
        ThreeScaleSystem::new(benchmark(1.0, 0.0), scalar(a0), scalar(-2.0), scalar(1.0), MatrixField::constant_vector(one(0.5)), omega_g)
            .unwrap()
    }

    #[test]
    fn micro_cell_matches_the_closed_form() {
        let z = one(0.0);
        let g = Grid::uniform(&[-2.0], &[2.0], &[201]).unwrap();
        let zero = solve_micro_cell(&three(0.0, ControlBox::symmetric(1, 1.0).unwrap()), &z, &one(1.0), &g, 1e-3).unwrap();
        assert_eq!(zero.lambda, 0.0);

        let sys3 = three(1.5, ControlBox::symmetric(1, 1.0).unwrap());
        let exact = lambda2_closed_form(&sys3, &z, &one(1.0)).unwrap();
        let r = solve_micro_cell(&sys3, &z, &one(1.0), &g, 1e-3).unwrap();
        assert!((r.lambda - exact).abs() <= 0.05 * exact.abs(), "{} vs {exact}", r.lambda);

        let point = three(1.5, ControlBox::point(one(0.4)).unwrap());
        let psi = micro_static_map(&point, &z).unwrap().eval(&one(0.4));
        let expected = -1.0 * 1.5 * psi[0];
        let r = solve_micro_cell(&point, &z, &one(1.0), &g, 1e-3).unwrap();
        assert!((r.lambda - expected).abs() <= 0.05 * expected.abs(), "{} vs {expected}", r.lambda);
    }
}
