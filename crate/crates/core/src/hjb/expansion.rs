use super::cell::CellResult;
use super::grid::GridValueFunction;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Errors restricted to one slow node, sup over the fast nodes and time slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceError {
    pub z: Vector,
    pub remainder: f64,
    pub first_order: f64,
}

/// Output of [`expansion_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub epsilon: f64,
    /// `R(ε) = sup |V^ε - V₀ - ε V₁|`.
    pub remainder: f64,
    pub epsilon_squared: f64,
    /// `R(ε) / ε²`, absent at ε = 0.
    pub ratio: Option<f64>,
    /// `sup |V^ε - V₀|`.
    pub first_order: f64,
    pub slices: Vec<SliceError>,
}

/// Compares a full value function on `slow × fast` with `V₀ + ε V₁`, where `V₀`
/// is the effective value function and `V₁` the corrector of a cell problem
/// frozen at one slow state. The corrector is applied at every slow node.
pub fn expansion_check(
    full: &GridValueFunction,
    effective: &GridValueFunction,
    cell: &CellResult,
    epsilon: f64,
) -> Result<ExpansionReport> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if full.grid != effective.grid.product(&cell.grid) {
        return Err(Error::GridMismatch("the full grid is not the product of the effective and cell grids".into()));
    }
    let tol = 1e-12 * (1.0 + effective.horizon().abs());
    if full.times.len() != effective.times.len() || full.times.iter().zip(&effective.times).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::GridMismatch(format!(
            "recorded times differ ({} vs {} slices)",
            full.times.len(),
            effective.times.len()
        )));
    }
    let nf = cell.grid.len();
    let ns = effective.grid.len();
    let mut slices: Vec<SliceError> =
        (0..ns).map(|i| SliceError { z: effective.grid.node(i), remainder: 0.0, first_order: 0.0 }).collect();
    for (vf, v0) in full.values.iter().zip(&effective.values) {
        for (i, &v) in vf.iter().enumerate() {
            let (s, f) = (i / nf, i % nf);
            let diff = v - v0[s];
            let e = &mut slices[s];
            e.first_order = e.first_order.max(diff.abs());
            e.remainder = e.remainder.max((diff - epsilon * cell.corrector[f]).abs());
        }
    }
    let remainder = slices.iter().map(|s| s.remainder).fold(0.0, f64::max);
    let first_order = slices.iter().map(|s| s.first_order).fold(0.0, f64::max);
    let epsilon_squared = epsilon * epsilon;
    Ok(ExpansionReport {
        epsilon,
        remainder,
        epsilon_squared,
        ratio: (epsilon > 0.0).then(|| remainder / epsilon_squared),
        first_order,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::cell::solve_cell;
    use crate::hjb::grid::Grid;
    use crate::hjb::solver::{full_problem, solve_hjb_effective, HjbOptions};
    use crate::linalg::Matrix;
    use crate::reduction::build_reduced;
    use crate::system::{ControlBox, CostSpec, MatrixField, TwoScaleSystem};

    fn scalar(x: f64) -> MatrixField {
        MatrixField::constant(Matrix::from_element(1, 1, x))
    }

    fn system(a1: f64, eps: f64) -> TwoScaleSystem {
        TwoScaleSystem::new(
            scalar(a1),
            scalar(-1.0),
            scalar(0.5),
            scalar(1.0),
            MatrixField::zeros(1, 1),
            MatrixField::vector(1, |z| Ok(-0.5 * z)),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::symmetric(1, 1.0).unwrap(),
            eps,
        )
        .unwrap()
    }

    fn grids() -> (Grid, Grid) {
        (Grid::uniform(&[-2.0], &[2.0], &[21]).unwrap(), Grid::uniform(&[-2.0], &[2.0], &[11]).unwrap())
    }

    #[test]
    fn decoupled_remainder_is_interpolation_level() {
        let (gz, gy) = grids();
        let cost = CostSpec::new(|z| 0.2 * z[0].abs(), |z| z[0] * z[0], 0.3).unwrap();
        for eps in [0.5, 0.2] {
            let sys = system(0.0, eps);
            let full_grid = gz.product(&gy);
            let pb = full_problem(&sys, &cost, &full_grid).unwrap();
            let opts = HjbOptions::new(pb.min_steps().unwrap()).recording_every(5);
            let vf = pb.solve(&opts).unwrap();
            let v0 = solve_hjb_effective(&build_reduced(&sys), &cost, &gz, &opts).unwrap();
            let cell = solve_cell(&sys, &Vector::zeros(1), &Vector::from_element(1, 1.0), &gy, 1e-2).unwrap();
            let rep = expansion_check(&vf, &v0, &cell, eps).unwrap();
            assert!(rep.remainder <= 1e-10, "{}", rep.remainder);
            assert_eq!(rep.slices.len(), 21);
        }
    }

    #[test]
    fn zero_epsilon_with_the_effective_solution() {
        let (gz, gy) = grids();
        let sys = system(1.0, 0.1);
        let cost = CostSpec::new(|_| 0.0, |z| z[0].cos(), 0.5).unwrap();
        let v0 = solve_hjb_effective(&build_reduced(&sys), &cost, &gz, &HjbOptions::new(50)).unwrap();
        let cell = solve_cell(&sys, &Vector::zeros(1), &Vector::from_element(1, 1.0), &gy, 1e-2).unwrap();
        let rep = expansion_check(&v0.broadcast(&gy), &v0, &cell, 0.0).unwrap();
        assert_eq!(rep.remainder, 0.0);
        assert_eq!(rep.first_order, 0.0);
        assert_eq!(rep.ratio, None);
    }

    #[test]
    fn incompatible_grids_are_rejected() {
        let (gz, gy) = grids();
        let sys = system(1.0, 0.1);
        let cost = CostSpec::new(|_| 0.0, |z| z[0], 0.5).unwrap();
        let v0 = solve_hjb_effective(&build_reduced(&sys), &cost, &gz, &HjbOptions::new(50)).unwrap();
        let other = Grid::uniform(&[-1.0], &[1.0], &[11]).unwrap();
        let cell = solve_cell(&sys, &Vector::zeros(1), &Vector::from_element(1, 1.0), &other, 1e-2).unwrap();
        assert!(matches!(expansion_check(&v0.broadcast(&gy), &v0, &cell, 0.1), Err(Error::GridMismatch(_))));
        let coarse = solve_hjb_effective(&build_reduced(&sys), &cost, &gz, &HjbOptions::new(50).recording_every(10)).unwrap();
        let cell = solve_cell(&sys, &Vector::zeros(1), &Vector::from_element(1, 1.0), &gy, 1e-2).unwrap();
        assert!(matches!(expansion_check(&v0.broadcast(&gy), &coarse, &cell, 0.1), Err(Error::GridMismatch(_))));
    }
}
