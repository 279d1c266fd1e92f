use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{grid_from, ExperimentConfig, Setup};
use super::table::Table;
use super::{ExperimentError, RunOptions};
use crate::error::Error;
use crate::hjb::{
    full_problem, full_three_scale_problem, solve_cell_with, solve_hjb_effective, CellOptions, Grid, GridValueFunction,
    HjbOptions,
};
use crate::integrator::{integrate_reduced, integrate_stiff_with, integrate_three_scale_with, trajectory_error, IntegrationOptions, Trajectory};
use crate::linalg::{concat, inf_norm, Matrix, Vector};
use crate::reduction::{build_reduced, cascade_reduce, lambda1_closed_form, micro_static_map, static_map, ReducedSystem};
use crate::system::{ControlBox, MatrixField, TwoScaleSystem};
use crate::zoo::ModelSystem;

fn at_eps(epsilon: f64) -> impl Fn(Error) -> ExperimentError {
    move |source| ExperimentError::Sweep { epsilon, source }
}

fn reduced_of(system: &ModelSystem) -> Result<ReducedSystem, Error> {
    match system {
        ModelSystem::Two(s) => Ok(build_reduced(s)),
        ModelSystem::Three(s) => Ok(cascade_reduce(s)?.1),
    }
}

fn ratio_column(values: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    out.extend(values.windows(2).map(|w| (w[0] > 0.0).then(|| w[1] / w[0])));
    out.truncate(values.len());
    out
}

/// Stiff run of the configured scenario at the system's own ε.
pub fn simulate_setup(setup: &Setup, system: &ModelSystem, steps: usize) -> Result<Trajectory, Error> {
    let sc = &setup.scenario;
    let opts = IntegrationOptions::default();
    let tr = match system {
        ModelSystem::Two(s) => integrate_stiff_with(s, &sc.alpha, &sc.beta, &sc.z0, &sc.y0, steps, &opts)?,
        ModelSystem::Three(s) => {
            let (g, x0) = (sc.gamma.as_ref().expect("set up"), sc.x0.as_ref().expect("set up"));
            integrate_three_scale_with(s, &sc.alpha, &sc.beta, g, &sc.z0, &sc.y0, x0, steps, &opts)?
        }
    };
    tr.with_layout(setup.layout.clone())
}

/// Reduced run of the configured scenario.
pub fn reduce_setup(setup: &Setup, steps: usize) -> Result<Trajectory, Error> {
    let sc = &setup.scenario;
    let red = reduced_of(&setup.system)?;
    let alpha = match &sc.gamma {
        Some(g) => sc.alpha.join(g)?,
        None => sc.alpha.clone(),
    };
    integrate_reduced(&red, &alpha, &sc.beta, &sc.z0, steps)?.with_layout(setup.slow_layout.clone())
}

fn final_residual(setup: &Setup, system: &ModelSystem, tr: &Trajectory) -> Result<f64, Error> {
    let two = system.two();
    let (m, n) = (two.m(), two.n());
    let t = setup.horizon();
    let x = tr.final_state();
    let z = x.rows(0, m).into_owned();
    let mut r = inf_norm(&two.fast_bracket(&z, &x.rows(m, n).into_owned(), setup.scenario.beta.at(t))?);
    if let (Some(s3), Some(g)) = (system.three(), &setup.scenario.gamma) {
        r = r.max(inf_norm(&s3.micro_bracket(&z, &x.rows(m + n, s3.l()).into_owned(), g.at(t))?));
    }
    Ok(r)
}

/// Stiff versus reduced trajectories over the ε list: `μ(ε)` per slow slice and
/// overall, the equilibrium residual at `T`, and `μ(ε_{k+1}) / μ(ε_k)`.
pub fn run_trajectory_sweep(cfg: &ExperimentConfig, _opts: &RunOptions) -> Result<Table, ExperimentError> {
    cfg.require_epsilons()?;
    let setup = cfg.setup()?;
    let steps = cfg.integration_steps(setup.horizon());
    let reduced = reduce_setup(&setup, steps)?;
    let slices: Vec<String> = setup.slow_layout.slices().iter().map(|s| s.name.clone()).collect();

    let rows: Vec<Result<(Vec<f64>, f64, f64), ExperimentError>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let system = setup.system.with_epsilon(eps).map_err(at_eps(eps))?;
            let stiff = simulate_setup(&setup, &system, steps).map_err(at_eps(eps))?;
            let mus = slices
                .iter()
                .map(|s| trajectory_error(&stiff, &reduced, s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(at_eps(eps))?;
            let res = final_residual(&setup, &system, &stiff).map_err(at_eps(eps))?;
            let wall = start.elapsed().as_secs_f64();
            log::info!("{}: epsilon {eps:e} done in {wall:.3} s", cfg.name);
            Ok((mus, res, wall))
        })
        .collect();

    let mut header = vec!["epsilon".to_string()];
    header.extend(slices.iter().map(|s| format!("mu_{s}")));
    header.extend(["mu", "residual_T", "ratio"].map(String::from));
    let mut table = Table::new(header);
    let mut mu_col = Vec::new();
    let mut parts = Vec::new();
    for r in rows {
        let (mus, res, _) = r?;
        mu_col.push(mus.iter().cloned().fold(0.0, f64::max));
        parts.push((mus, res));
    }
    for ((eps, (mus, res)), (mu, ratio)) in cfg.epsilons.iter().zip(parts).zip(mu_col.iter().zip(ratio_column(&mu_col))) {
        let mut row = vec![Some(*eps)];
        row.extend(mus.into_iter().map(Some));
        row.extend([Some(*mu), Some(res), ratio]);
        table.push(row);
    }
    Ok(table)
}

struct ValueGrids {
    slow: Grid,
    fast: Grid,
    micro: Option<Grid>,
}

impl ValueGrids {
    fn full(&self) -> Grid {
        let g = self.slow.product(&self.fast);
        match &self.micro {
            Some(x) => g.product(x),
            None => g,
        }
    }
}

/// Full versus effective value functions over the ε list: the sup difference on the
/// slow grid at the fast-equilibrium slice and over the whole product grid.
pub fn run_value_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Table, ExperimentError> {
    cfg.require_epsilons()?;
    let setup = cfg.setup()?;
    let two = setup.system.two();
    let cost = cfg.cost(two.m())?;
    let spec = cfg.grid.as_ref().ok_or_else(|| ExperimentError::Config("missing grid".into()))?;
    let grids = ValueGrids {
        slow: grid_from(&spec.slow, "slow")?,
        fast: grid_from(&spec.fast, "fast")?,
        micro: match setup.system.three() {
            Some(_) => Some(grid_from(&spec.micro, "micro")?),
            None => None,
        },
    };
    let expect = |g: &Grid, dim: usize, what: &str| {
        if g.dim() == dim {
            Ok(())
        } else {
            Err(ExperimentError::Config(format!("{what} grid has {} axes, expected {dim}", g.dim())))
        }
    };
    expect(&grids.slow, two.m(), "slow")?;
    expect(&grids.fast, two.n(), "fast")?;
    if let (Some(g), Some(s3)) = (&grids.micro, setup.system.three()) {
        expect(g, s3.l(), "micro")?;
    }
    let full_grid = grids.full();
    if full_grid.len() > opts.budget {
        return Err(Error::GridTooLarge { nodes: full_grid.len(), budget: opts.budget }.into());
    }
    let red = reduced_of(&setup.system)?;

    let rows: Vec<Result<[f64; 5], ExperimentError>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let err = at_eps(eps);
            let system = setup.system.with_epsilon(eps).map_err(&err)?;
            let pb = match &system {
                ModelSystem::Two(s) => full_problem(s, &cost, &full_grid),
                ModelSystem::Three(s) => full_three_scale_problem(s, &cost, &full_grid),
            }
            .map_err(&err)?;
            let steps = match spec.steps {
                Some(s) => s,
                None => pb.min_steps().map_err(&err)?,
            };
            let hopts = HjbOptions::new(steps).with_budget(opts.budget);
            let vf = pb.solve(&hopts).map_err(&err)?;
            let v0 = solve_hjb_effective(&red, &cost, &grids.slow, &hopts).map_err(&err)?;
            let (eq, all) = value_gaps(&system, &grids, &vf, &v0).map_err(&err)?;
            log::info!("{}: epsilon {eps:e} ({steps} steps) done in {:.3} s", cfg.name, start.elapsed().as_secs_f64());
            Ok([eq, all, steps as f64, cost.horizon / steps as f64, full_grid.len() as f64])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let eq: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mut table = Table::new(
        ["epsilon", "sup_equilibrium", "sup_full", "steps", "time_step", "nodes", "ratio"].map(String::from).to_vec(),
    );
    for ((eps, r), ratio) in cfg.epsilons.iter().zip(&rows).zip(ratio_column(&eq)) {
        let mut row = vec![Some(*eps)];
        row.extend(r.iter().map(|v| Some(*v)));
        row.push(ratio);
        table.push(row);
    }
    Ok(table)
}

/// `sup |V^ε - V₀|` at `(z, ψ(z, β̄)[, ψ_micro(z, γ̄)])` over slow nodes, and over all nodes,
/// both taken over every recorded time slice.
fn value_gaps(system: &ModelSystem, grids: &ValueGrids, vf: &GridValueFunction, v0: &GridValueFunction) -> Result<(f64, f64), Error> {
    let two = system.two();
    let beta = two.omega_b.midpoint();
    let points = (0..grids.slow.len())
        .map(|i| {
            let z = grids.slow.node(i);
            let y = static_map(two, &z)?.eval(&beta);
            Ok(match system.three() {
                Some(s3) => concat(&[&z, &y, &micro_static_map(s3, &z)?.eval(&s3.omega_g.midpoint())]),
                None => concat(&[&z, &y]),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let per_slow = vf.grid.len() / grids.slow.len();
    let (mut eq, mut all): (f64, f64) = (0.0, 0.0);
    for (full, eff) in vf.values.iter().zip(&v0.values) {
        for (i, x) in points.iter().enumerate() {
            eq = eq.max((vf.grid.interpolate(full, x) - eff[i]).abs());
        }
        for (k, v) in full.iter().enumerate() {
            all = all.max((v - eff[k / per_slow]).abs());
        }
    }
    Ok((eq, all))
}

struct CellInstance {
    sys: TwoScaleSystem,
    z: Vector,
    p: Vector,
    grid: Grid,
}

fn scalar(x: f64) -> MatrixField {
    MatrixField::constant(Matrix::from_element(1, 1, x))
}

/// A random stable 1-D instance and a fast grid covering its equilibria with margin.
fn random_instance(rng: &mut ChaCha8Rng, nodes: usize) -> Result<CellInstance, Error> {
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let a1 = sign(rng) * rng.random_range(0.5..2.0);
    let a2 = -rng.random_range(0.5..2.0);
    let b2: f64 = sign(rng) * rng.random_range(0.5..2.0);
    let c2 = rng.random_range(-0.25..0.25) * b2.abs();
    let p = sign(rng) * rng.random_range(0.5..2.0);
    let unit = ControlBox::symmetric(1, 1.0)?;
    let sys = TwoScaleSystem::new(
        scalar(a1),
        scalar(a2),
        MatrixField::zeros(1, 1),
        scalar(b2),
        MatrixField::zeros(1, 1),
        MatrixField::constant_vector(Vector::from_element(1, c2)),
        unit.clone(),
        unit,
        0.1,
    )?;
    let (e1, e2) = (-(b2 + c2) / a2, -(-b2 + c2) / a2);
    let (lo, hi) = (e1.min(e2), e1.max(e2));
    let pad = 0.5 * (hi - lo) + 0.5;
    let grid = Grid::uniform(&[lo - pad], &[hi + pad], &[nodes])?;
    Ok(CellInstance { sys, z: Vector::zeros(1), p: Vector::from_element(1, p), grid })
}

/// Discounted cell solutions against the closed-form ergodic constant, one row per
/// instance and discount.
pub fn run_cell_validation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Table, ExperimentError> {
    let spec = cfg.cell.as_ref().ok_or_else(|| ExperimentError::Config("missing cell section".into()))?;
    if spec.deltas.is_empty() || spec.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(ExperimentError::Config("deltas must be a nonempty list in (0, 1)".into()));
    }
    let setup = cfg.setup()?;
    let sys = setup.system.two().clone();
    let m = sys.m();
    if spec.p.len() != m {
        return Err(ExperimentError::Config(format!("p has {} entries, expected {m}", spec.p.len())));
    }
    if spec.random_instances > 0 && m != 1 {
        return Err(ExperimentError::Config("random instances are 1-D; the configured system must be too".into()));
    }
    let z = match &spec.z {
        Some(z) if z.len() == m => Vector::from_row_slice(z),
        Some(z) => return Err(ExperimentError::Config(format!("z has {} entries, expected {m}", z.len()))),
        None => setup.scenario.z0.clone(),
    };
    let fast = match (&spec.fast, &cfg.grid) {
        (Some(f), _) => f.clone(),
        (None, Some(g)) if !g.fast.is_empty() => g.fast.clone(),
        _ => return Err(ExperimentError::Config("missing fast grid for the cell problem".into())),
    };
    let mut instances = vec![CellInstance { sys, z, p: Vector::from_row_slice(&spec.p), grid: grid_from(&fast, "fast")? }];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..spec.random_instances {
        instances.push(random_instance(&mut rng, spec.random_nodes.unwrap_or(201))?);
    }

    let mut copts = CellOptions { budget: opts.budget, ..CellOptions::default() };
    copts.reference = spec.reference;
    let jobs: Vec<(usize, f64)> = (0..instances.len()).flat_map(|i| spec.deltas.iter().map(move |&d| (i, d))).collect();
    let rows: Vec<Result<Vec<Option<f64>>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(i, delta)| {
            let inst = &instances[i];
            let exact = lambda1_closed_form(&inst.sys, &inst.z, &inst.p)?;
            let cell = solve_cell_with(&inst.sys, &inst.z, &inst.p, &inst.grid, delta, &copts)?;
            let gap = if exact.abs() > 1e-12 { (cell.lambda - exact).abs() / exact.abs() } else { (cell.lambda - exact).abs() };
            let mut row = vec![Some(i as f64), Some(delta)];
            row.extend(inst.z.iter().chain(inst.p.iter()).map(|v| Some(*v)));
            row.extend([
                Some(exact),
                Some(cell.lambda),
                Some(gap),
                Some(cell.corrector_amplitude()),
                Some(cell.iterations as f64),
                cell.residuals.last().copied(),
            ]);
            Ok(row)
        })
        .collect();

    let mut header = vec!["instance".to_string(), "delta".to_string()];
    header.extend((0..m).map(|k| format!("z_{k}")));
    header.extend((0..m).map(|k| format!("p_{k}")));
    header.extend(["lambda_closed", "lambda_discounted", "rel_gap", "corrector_amplitude", "iterations", "residual"].map(String::from));
    let mut table = Table::new(header);
    for r in rows {
        table.push(r?);
    }
    Ok(table)
}
