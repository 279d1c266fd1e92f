use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Stencil direction of a periodic first-order difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `(u_i - u_{i-1}) / dx`
    Backward,
    /// `(u_{i+1} - u_i) / dx`
    Forward,
}

/// Periodic first-order upwind difference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationOp {
    pub d: usize,
    pub dx: f64,
    pub variant: Variant,
    pub matrix: Matrix,
}

impl DiscretizationOp {
    pub fn apply(&self, u: &Vector) -> Vector {
        &self.matrix * u
    }

    /// The other stencil direction on the same grid; equals `-Dᵀ`.
    pub fn adjoint(&self) -> DiscretizationOp {
        let variant = match self.variant {
            Variant::Backward => Variant::Forward,
            Variant::Forward => Variant::Backward,
        };
        make_upwind(self.d, self.dx, variant).expect("valid grid")
    }
}

pub fn make_upwind(d: usize, dx: f64, variant: Variant) -> Result<DiscretizationOp> {
    if d < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 cells, got {d}")));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::InvalidArgument(format!("dx must be positive, got {dx}")));
    }
    let mut matrix = Matrix::zeros(d, d);
    for i in 0..d {
        match variant {
            Variant::Backward => {
                matrix[(i, i)] = 1.0 / dx;
                matrix[(i, (i + d - 1) % d)] = -1.0 / dx;
            }
            Variant::Forward => {
                matrix[(i, (i + 1) % d)] = 1.0 / dx;
                matrix[(i, i)] = -1.0 / dx;
            }
        }
    }
    Ok(DiscretizationOp { d, dx, variant, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inf_norm;
    use std::f64::consts::PI;

    #[test]
    fn annihilates_constants_and_conserves_mass() {
        for variant in [Variant::Backward, Variant::Forward] {
            let op = make_upwind(7, 0.3, variant).unwrap();
            let ones = Vector::from_element(7, 1.0);
            assert!(inf_norm(&op.apply(&ones)) < 1e-14);
            assert!(inf_norm(&(op.matrix.transpose() * &ones)) < 1e-14);
        }
    }

    #[test]
    fn hand_stencil() {
        let op = make_upwind(4, 1.0, Variant::Backward).unwrap();
        let du = op.apply(&Vector::from_row_slice(&[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(du, Vector::from_row_slice(&[0.0, 1.0, -1.0, 0.0]));
        let fwd = make_upwind(4, 1.0, Variant::Forward).unwrap();
        assert_eq!(fwd.matrix, -op.matrix.transpose());
        assert_eq!(op.adjoint().matrix, fwd.matrix);
    }

    #[test]
    fn first_order_convergence_on_sine() {
        let len = 1.0;
        let err = |d: usize| {
            let dx = len / d as f64;
            let op = make_upwind(d, dx, Variant::Backward).unwrap();
            let x: Vec<f64> = (0..d).map(|i| i as f64 * dx).collect();
            let u = Vector::from_iterator(d, x.iter().map(|x| (2.0 * PI * x / len).sin()));
            let exact = Vector::from_iterator(d, x.iter().map(|x| 2.0 * PI / len * (2.0 * PI * x / len).cos()));
            inf_norm(&(op.apply(&u) - exact))
        };
        let (e32, e64, e128) = (err(32), err(64), err(128));
        assert!((e32 / e64).log2() >= 0.9);
        assert!((e64 / e128).log2() >= 0.9);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_upwind(2, 1.0, Variant::Backward).is_err());
        assert!(make_upwind(5, 0.0, Variant::Forward).is_err());
    }
}
