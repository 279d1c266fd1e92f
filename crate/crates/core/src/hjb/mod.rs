//! Grid solvers for the value functions, the cell problems and the first-order
//! expansion diagnostic.

pub mod cell;
pub mod expansion;
pub mod grid;
pub mod solver;

pub use cell::{solve_cell, solve_cell_with, solve_micro_cell, solve_micro_cell_with, CellMethod, CellOptions, CellResult};
pub use expansion::{expansion_check, ExpansionReport, SliceError};
pub use grid::{Axis, Grid, GridValueFunction};
pub use solver::{
    control_set, effective_problem, full_problem, full_three_scale_problem, solve_hjb_effective, solve_hjb_full,
    solve_hjb_full_three_scale, solve_hjb_multiscale_effective, HjbOptions, SlProblem, DEFAULT_NODE_BUDGET,
};
