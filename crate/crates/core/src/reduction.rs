//! The ε → 0 reduction: static equation, reduced dynamics, closed-form ergodic
//! constants and the three-scale cascade.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{concat, CheckedInverse, Matrix, Vector};
use crate::system::{box_sup, ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

type RhsFn = dyn Fn(&Vector, &Vector, &Vector) -> Result<Vector> + Send + Sync;

/// Affine parametrization of a static-equation root, `ψ(β) = offset + gain · β`.
#[derive(Debug, Clone)]
pub struct StaticMap {
    pub offset: Vector,
    pub gain: Matrix,
}

impl StaticMap {
    pub fn eval(&self, control: &Vector) -> Vector {
        &self.offset + &self.gain * control
    }
}

fn static_map_of(a: &Matrix, b: &Matrix, c: &Vector) -> Result<StaticMap> {
    let inv = CheckedInverse::new(a)?;
    Ok(StaticMap { offset: -inv.solve(c), gain: -inv.solve_matrix(b) })
}

/// `ψ(z, ·)` for the fast block: `ψ(z, β) = -A2⁻¹(B2 β + C2)`.
pub fn static_map(sys: &TwoScaleSystem, z: &Vector) -> Result<StaticMap> {
    if z.len() != sys.m() {
        return Err(Error::dims("slow state", sys.m(), z.len()));
    }
    static_map_of(&sys.a2.eval(z)?, &sys.b2.eval(z)?, &sys.c2.eval_vector(z)?)
}

/// `ψ_micro(z, ·)` for the micro block: `-A3⁻¹(B3 γ + C3)`.
pub fn micro_static_map(sys3: &ThreeScaleSystem, z: &Vector) -> Result<StaticMap> {
    if z.len() != sys3.two.m() {
        return Err(Error::dims("slow state", sys3.two.m(), z.len()));
    }
    static_map_of(&sys3.a3.eval(z)?, &sys3.b3.eval(z)?, &sys3.c3.eval_vector(z)?)
}

/// Root of the static equation `0 = A2(z) y + B2(z) β + C2(z)`.
pub fn solve_static(sys: &TwoScaleSystem, z: &Vector, beta: &Vector) -> Result<Vector> {
    if beta.len() != sys.q() {
        return Err(Error::dims("beta", sys.q(), beta.len()));
    }
    Ok(static_map(sys, z)?.eval(beta))
}

/// Reduced slow dynamics `ż = rhs(z, α, β)`.
#[derive(Clone)]
pub struct ReducedSystem {
    m: usize,
    pub omega_a: ControlBox,
    pub omega_b: ControlBox,
    rhs: Arc<RhsFn>,
    source: Option<TwoScaleSystem>,
}

impl fmt::Debug for ReducedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedSystem")
            .field("m", &self.m)
            .field("p", &self.p())
            .field("q", &self.q())
            .finish()
    }
}

impl ReducedSystem {
    /// A reduced system from an explicit right-hand side.
    pub fn from_fn(
        m: usize,
        omega_a: ControlBox,
        omega_b: ControlBox,
        rhs: impl Fn(&Vector, &Vector, &Vector) -> Result<Vector> + Send + Sync + 'static,
    ) -> Self {
        Self { m, omega_a, omega_b, rhs: Arc::new(rhs), source: None }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.omega_a.dim()
    }

    pub fn q(&self) -> usize {
        self.omega_b.dim()
    }

    /// The two-scale system this was reduced from, if any.
    pub fn source(&self) -> Option<&TwoScaleSystem> {
        self.source.as_ref()
    }

    pub fn rhs(&self, z: &Vector, alpha: &Vector, beta: &Vector) -> Result<Vector> {
        if z.len() != self.m {
            return Err(Error::dims("slow state", self.m, z.len()));
        }
        if alpha.len() != self.p() {
            return Err(Error::dims("alpha", self.p(), alpha.len()));
        }
        if beta.len() != self.q() {
            return Err(Error::dims("beta", self.q(), beta.len()));
        }
        let f = (self.rhs)(z, alpha, beta)?;
        if f.len() != self.m {
            return Err(Error::dims("reduced rhs", self.m, f.len()));
        }
        Ok(f)
    }

    /// Same dynamics with time reversed.
    pub fn negated(&self) -> Self {
        let rhs = self.rhs.clone();
        Self {
            m: self.m,
            omega_a: self.omega_a.clone(),
            omega_b: self.omega_b.clone(),
            rhs: Arc::new(move |z, a, b| Ok(-rhs(z, a, b)?)),
            source: None,
        }
    }
}

/// `ż = A1 ψ(z, β) + B1 α + C1` (plus any nonlinear slow term evaluated at ψ).
pub fn build_reduced(sys: &TwoScaleSystem) -> ReducedSystem {
    let s = sys.clone();
    ReducedSystem {
        m: sys.m(),
        omega_a: sys.omega_a.clone(),
        omega_b: sys.omega_b.clone(),
        rhs: Arc::new(move |z, alpha, beta| {
            let psi = solve_static(&s, z, beta)?;
            s.slow_drift(z, &psi, alpha)
        }),
        source: Some(sys.clone()),
    }
}

/// `λ̄₁(z, p) = sup_β -p · A1(z) ψ(z, β)`.
pub fn lambda1_closed_form(sys: &TwoScaleSystem, z: &Vector, p: &Vector) -> Result<f64> {
    sys.require_affine()?;
    if p.len() != sys.m() {
        return Err(Error::dims("slow costate", sys.m(), p.len()));
    }
    let map = static_map(sys, z)?;
    let a1tp = sys.a1.eval(z)?.transpose() * p;
    let coeff = map.gain.transpose() * &a1tp;
    Ok(-a1tp.dot(&map.offset) + box_sup(&coeff, &sys.omega_b)?.0)
}

/// `H̄(z, p) = -p·C1 + sup_α{-p·B1 α} + λ̄₁(z, p)`.
pub fn effective_hamiltonian(sys: &TwoScaleSystem, z: &Vector, p: &Vector) -> Result<f64> {
    let slow = -p.dot(&sys.c1.eval_vector(z)?) + box_sup(&(sys.b1.eval(z)?.transpose() * p), &sys.omega_a)?.0;
    Ok(slow + lambda1_closed_form(sys, z, p)?)
}

/// `λ₂(z, p) = sup_γ -p · A0(z) ψ_micro(z, γ)`.
pub fn lambda2_closed_form(sys3: &ThreeScaleSystem, z: &Vector, p: &Vector) -> Result<f64> {
    if p.len() != sys3.two.m() {
        return Err(Error::dims("slow costate", sys3.two.m(), p.len()));
    }
    let map = micro_static_map(sys3, z)?;
    let a0tp = sys3.a0.eval(z)?.transpose() * p;
    let coeff = map.gain.transpose() * &a0tp;
    Ok(-a0tp.dot(&map.offset) + box_sup(&coeff, &sys3.omega_g)?.0)
}

/// Macro Hamiltonian of the three-scale limit: `-p·C1 + sup_α{-p·B1 α} + λ̄₁ + λ₂`.
pub fn multiscale_effective_hamiltonian(sys3: &ThreeScaleSystem, z: &Vector, p: &Vector) -> Result<f64> {
    Ok(effective_hamiltonian(&sys3.two, z, p)? + lambda2_closed_form(sys3, z, p)?)
}

/// Eliminates the micro state through its static equation and reduces the
/// resulting meso system.
///
/// The meso system keeps `(z, y)`; its slow control is `(α, γ)` on
/// `Ω_A × Ω_Γ`, with `B1' = [B1 | A0 K3]` and `C1' = C1 + A0 ψ_micro(z, 0)`
/// where `ψ_micro(z, γ) = ψ_micro(z, 0) + K3 γ`.
pub fn cascade_reduce(sys3: &ThreeScaleSystem) -> Result<(TwoScaleSystem, ReducedSystem)> {
    let two = &sys3.two;
    let (m, p, r) = (two.m(), two.p(), sys3.r());

    let (s_b, b1) = (sys3.clone(), two.b1.clone());
    let b1_meso = MatrixField::new(m, p + r, move |z| {
        let map = micro_static_map(&s_b, z)?;
        let coupled = s_b.a0.eval(z)? * map.gain;
        let mut out = Matrix::zeros(m, p + r);
        out.columns_mut(0, p).copy_from(&b1.eval(z)?);
        out.columns_mut(p, r).copy_from(&coupled);
        Ok(out)
    });

    let (s_c, c1) = (sys3.clone(), two.c1.clone());
    let c1_meso = MatrixField::vector(m, move |z| {
        let map = micro_static_map(&s_c, z)?;
        Ok(c1.eval_vector(z)? + s_c.a0.eval(z)? * map.offset)
    });

    let mut meso = TwoScaleSystem::new(
        two.a1.clone(),
        two.a2.clone(),
        b1_meso,
        two.b2.clone(),
        c1_meso,
        two.c2.clone(),
        two.omega_a.product(&sys3.omega_g),
        two.omega_b.clone(),
        two.epsilon(),
    )?;
    if let Some(extra) = two.extra_drift() {
        meso = meso.with_extra_drift(extra.clone());
    }
    let reduced = build_reduced(&meso);
    Ok((meso, reduced))
}

/// Splits a concatenated macro control `(α, γ)` of a cascaded system.
pub fn split_cascade_control(sys3: &ThreeScaleSystem, control: &Vector) -> Result<(Vector, Vector)> {
    let p = sys3.two.p();
    if control.len() != p + sys3.r() {
        return Err(Error::dims("cascade control", p + sys3.r(), control.len()));
    }
    Ok((control.rows(0, p).into_owned(), control.rows(p, sys3.r()).into_owned()))
}

/// Concatenates `(α, γ)` into a cascaded macro control.
pub fn join_cascade_control(alpha: &Vector, gamma: &Vector) -> Vector {
    concat(&[alpha, gamma])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inf_norm;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    fn mat(r: usize, c: usize, x: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, x)
    }

    fn scalar(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64) -> TwoScaleSystem {
        TwoScaleSystem::new(
            MatrixField::constant(mat(1, 1, &[a1])),
            MatrixField::constant(mat(1, 1, &[a2])),
            MatrixField::constant(mat(1, 1, &[b1])),
            MatrixField::constant(mat(1, 1, &[b2])),
            MatrixField::constant_vector(v(&[c1])),
            MatrixField::constant_vector(v(&[c2])),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::symmetric(1, 1.0).unwrap(),
            0.1,
        )
        .unwrap()
    }

    fn three(a0: f64, a3: f64, b3: f64, c3: f64) -> ThreeScaleSystem {
        ThreeScaleSystem::new(
            scalar(1.0, -1.0, 1.0, 1.0, 0.0, 0.0),
            MatrixField::constant(mat(1, 1, &[a0])),
            MatrixField::constant(mat(1, 1, &[a3])),
            MatrixField::constant(mat(1, 1, &[b3])),
            MatrixField::constant_vector(v(&[c3])),
            ControlBox::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn static_examples() {
        let id = TwoScaleSystem::new(
            MatrixField::zeros(1, 2),
            MatrixField::constant(-Matrix::identity(2, 2)),
            MatrixField::zeros(1, 1),
            MatrixField::constant(Matrix::identity(2, 2)),
            MatrixField::zeros(1, 1),
            MatrixField::zeros(2, 1),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::symmetric(2, 1.0).unwrap(),
            0.1,
        )
        .unwrap();
        let b = v(&[0.3, -0.7]);
        assert!(inf_norm(&(solve_static(&id, &v(&[0.0]), &b).unwrap() - &b)) < 1e-15);

        let s = scalar(0.0, -2.0, 0.0, 1.0, 0.0, 3.0);
        let psi = solve_static(&s, &v(&[0.0]), &v(&[1.0])).unwrap();
        assert!((psi[0] - 2.0).abs() < 1e-15);
        let res = s.fast_bracket(&v(&[0.0]), &psi, &v(&[1.0])).unwrap();
        assert!(inf_norm(&res) < 1e-15);

        let singular = scalar(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert!(matches!(
            solve_static(&singular, &v(&[0.0]), &v(&[1.0])),
            Err(Error::SingularFastMatrix { .. })
        ));
    }

    #[test]
    fn reduced_null_system_is_zero() {
        let null = scalar(0.0, -1.0, 0.0, 0.0, 0.0, 0.0);
        let red = build_reduced(&null);
        let f = red.rhs(&v(&[0.4]), &v(&[1.0]), &v(&[-1.0])).unwrap();
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn lambda1_examples() {
        let decoupled = scalar(0.0, -1.0, 1.0, 1.0, 0.5, 0.2);
        assert_eq!(lambda1_closed_form(&decoupled, &v(&[0.0]), &v(&[3.0])).unwrap(), 0.0);

        let bench = scalar(1.0, -1.0, 0.0, 1.0, 0.0, 0.0);
        assert!((lambda1_closed_form(&bench, &v(&[0.0]), &v(&[2.0])).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lambda1_random_2x2_matches_grid() {
        let sys = TwoScaleSystem::new(
            MatrixField::constant(mat(1, 2, &[0.7, -1.3])),
            MatrixField::constant(mat(2, 2, &[-2.0, 0.4, 0.3, -1.5])),
            MatrixField::zeros(1, 1),
            MatrixField::constant(mat(2, 2, &[1.1, -0.2, 0.5, 0.9])),
            MatrixField::zeros(1, 1),
            MatrixField::constant_vector(v(&[0.25, -0.6])),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::new(v(&[-1.0, -0.5]), v(&[2.0, 1.0])).unwrap(),
            0.1,
        )
        .unwrap();
        let (z, p) = (v(&[0.0]), v(&[1.7]));
        let lam = lambda1_closed_form(&sys, &z, &p).unwrap();
        let a1 = sys.a1.eval(&z).unwrap();
        let mut brute = f64::MIN;
        for b0 in grid(401, -1.0, 2.0) {
            for b1 in grid(401, -0.5, 1.0) {
                let psi = solve_static(&sys, &z, &v(&[b0, b1])).unwrap();
                brute = brute.max(-p.dot(&(&a1 * psi)));
            }
        }
        assert!((lam - brute).abs() < 1e-8, "{lam} vs {brute}");
    }

    #[test]
    fn effective_hamiltonian_matches_grid() {
        let sys = scalar(0.8, -1.6, -0.4, 1.2, 0.3, -0.5);
        let (z, p) = (v(&[0.1]), v(&[-1.3]));
        let h = effective_hamiltonian(&sys, &z, &p).unwrap();
        let red = build_reduced(&sys);
        let mut brute = f64::MIN;
        for a in grid(201, -1.0, 1.0) {
            for b in grid(201, -1.0, 1.0) {
                brute = brute.max(-p.dot(&red.rhs(&z, &v(&[a]), &v(&[b])).unwrap()));
            }
        }
        assert!((h - brute).abs() < 1e-9);

        let decoupled = scalar(0.0, -1.0, 2.0, 1.0, 0.5, 0.0);
        let h = effective_hamiltonian(&decoupled, &z, &p).unwrap();
        assert!((h - (1.3 * 0.5 + 2.6)).abs() < 1e-14);
    }

    #[test]
    fn cascade_with_decoupled_micro_matches_two_scale() {
        let sys3 = three(0.0, -2.0, 1.0, 0.7);
        let (_, macro_red) = cascade_reduce(&sys3).unwrap();
        let direct = build_reduced(&sys3.two);
        for &(z, a, b, g) in &[(0.3, 0.5, -0.2, 1.0), (-1.0, -1.0, 1.0, -0.4)] {
            let f1 = macro_red.rhs(&v(&[z]), &v(&[a, g]), &v(&[b])).unwrap();
            let f2 = direct.rhs(&v(&[z]), &v(&[a]), &v(&[b])).unwrap();
            assert!((f1[0] - f2[0]).abs() < 1e-14);
        }
        assert_eq!(lambda2_closed_form(&sys3, &v(&[0.0]), &v(&[1.0])).unwrap(), 0.0);
    }

    #[test]
    fn cascade_one_dimensional_instance() {
        let sys3 = three(1.0, -1.0, 1.0, 0.0);
        let (meso, macro_red) = cascade_reduce(&sys3).unwrap();
        // meso slow drift gains +γ
        let f = meso.slow_drift(&v(&[0.0]), &v(&[0.5]), &v(&[0.25, -0.75])).unwrap();
        assert!((f[0] - (0.5 + 0.25 - 0.75)).abs() < 1e-15);

        let (z, p) = (v(&[0.2]), v(&[1.4]));
        let h = multiscale_effective_hamiltonian(&sys3, &z, &p).unwrap();
        let mut brute = f64::MIN;
        for a in grid(41, -1.0, 1.0) {
            for b in grid(41, -1.0, 1.0) {
                for g in grid(41, -1.0, 1.0) {
                    brute = brute.max(-p.dot(&macro_red.rhs(&z, &v(&[a, g]), &v(&[b])).unwrap()));
                }
            }
        }
        assert!((h - brute).abs() < 1e-12);
        assert!((lambda2_closed_form(&sys3, &z, &v(&[2.0])).unwrap() - 2.0).abs() < 1e-14);
        assert!((effective_hamiltonian(&meso, &z, &p).unwrap() - h).abs() < 1e-14);
    }

    #[test]
    fn lambda2_random_instance_matches_grid() {
        let two = scalar(1.0, -1.0, 1.0, 1.0, 0.0, 0.0);
        let sys3 = ThreeScaleSystem::new(
            two,
            MatrixField::constant(mat(1, 2, &[0.9, -0.4])),
            MatrixField::constant(mat(2, 2, &[-1.2, 0.3, -0.1, -0.8])),
            MatrixField::constant(mat(2, 2, &[0.6, 1.0, -0.7, 0.2])),
            MatrixField::constant_vector(v(&[0.4, 0.1])),
            ControlBox::new(v(&[-1.0, 0.0]), v(&[0.5, 2.0])).unwrap(),
        )
        .unwrap();
        let (z, p) = (v(&[0.0]), v(&[-0.8]));
        let lam = lambda2_closed_form(&sys3, &z, &p).unwrap();
        let map = micro_static_map(&sys3, &z).unwrap();
        let a0 = sys3.a0.eval(&z).unwrap();
        let mut brute = f64::MIN;
        for g0 in grid(401, -1.0, 0.5) {
            for g1 in grid(401, 0.0, 2.0) {
                brute = brute.max(-p.dot(&(&a0 * map.eval(&v(&[g0, g1])))));
            }
        }
        assert!((lam - brute).abs() < 1e-8);
    }

    #[test]
    fn negated_reduced_reverses_field() {
        let red = build_reduced(&scalar(1.0, -1.0, 1.0, 1.0, 0.2, 0.1));
        let (z, a, b) = (v(&[0.5]), v(&[0.3]), v(&[-0.4]));
        let f = red.rhs(&z, &a, &b).unwrap();
        let g = red.negated().rhs(&z, &a, &b).unwrap();
        assert_eq!(f[0], -g[0]);
    }

    proptest! {
        #[test]
        fn lambda1_positively_homogeneous(
            a1 in -3.0f64..3.0, a2 in 0.5f64..3.0, b2 in -2.0f64..2.0,
            p in -3.0f64..3.0, t in 0.01f64..10.0,
        ) {
            let sys = scalar(a1, -a2, 0.0, b2, 0.0, 0.0);
            let z = v(&[0.0]);
            let l1 = lambda1_closed_form(&sys, &z, &v(&[p])).unwrap();
            let lt = lambda1_closed_form(&sys, &z, &v(&[t * p])).unwrap();
            prop_assert!((lt - t * l1).abs() <= 1e-12 * (1.0 + lt.abs()));
        }

        #[test]
        fn static_residual_is_small(
            a in proptest::collection::vec(-1.0f64..1.0, 4),
            b in proptest::collection::vec(-2.0f64..2.0, 4),
            c in proptest::collection::vec(-5.0f64..5.0, 2),
            beta in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let a2 = mat(2, 2, &[-3.0 + a[0], a[1], a[2], -3.0 + a[3]]);
            let sys = TwoScaleSystem::new(
                MatrixField::zeros(1, 2),
                MatrixField::constant(a2),
                MatrixField::zeros(1, 1),
                MatrixField::constant(mat(2, 2, &b)),
                MatrixField::zeros(1, 1),
                MatrixField::constant_vector(v(&c)),
                ControlBox::symmetric(1, 1.0).unwrap(),
                ControlBox::symmetric(2, 1.0).unwrap(),
                0.1,
            ).unwrap();
            let z = v(&[0.0]);
            let beta = v(&beta);
            let psi = solve_static(&sys, &z, &beta).unwrap();
            let res = inf_norm(&sys.fast_bracket(&z, &psi, &beta).unwrap());
            prop_assert!(res <= 1e-10 * (1.0 + inf_norm(&v(&c))));
        }
    }
}
