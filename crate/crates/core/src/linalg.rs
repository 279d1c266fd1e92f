//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Condition-number threshold above which a square solve is declared singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn one_norm(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization of a square matrix together with its inverse, used for
/// repeated solves and the 1-norm condition estimate.
#[derive(Debug, Clone)]
pub struct CheckedInverse {
    inverse: Matrix,
    condition: f64,
}

impl CheckedInverse {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("square solve", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteMatrix { name: "solve operand".into() });
        }
        let n = a.nrows();
        let lu = a.clone().lu();
        let inverse = lu
            .solve(&Matrix::identity(n, n))
            .ok_or(Error::SingularFastMatrix { condition: f64::INFINITY })?;
        let condition = one_norm(a) * one_norm(&inverse);
        if !condition.is_finite() || condition > SINGULAR_CONDITION {
            return Err(Error::SingularFastMatrix { condition });
        }
        Ok(Self { inverse, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        &self.inverse * b
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        &self.inverse * b
    }
}

/// Solves `a x = b`, failing with `SingularFastMatrix` when `a` is numerically singular.
pub fn solve_checked(a: &Matrix, b: &Vector) -> Result<Vector> {
    if a.nrows() != b.len() {
        return Err(Error::dims("square solve", a.nrows(), b.len()));
    }
    Ok(CheckedInverse::new(a)?.solve(b))
}

pub fn concat(parts: &[&Vector]) -> Vector {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_well_conditioned_system() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = Vector::from_vec(vec![3.0, 5.0]);
        let x = solve_checked(&a, &b).unwrap();
        assert!((&a * &x - &b).amax() < 1e-14);
    }

    #[test]
    fn rejects_singular_matrix() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_checked(&a, &b), Err(Error::SingularFastMatrix { .. })));
    }

    #[test]
    fn rejects_ill_conditioned_matrix() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let b = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_checked(&a, &b), Err(Error::SingularFastMatrix { .. })));
    }
}
