use std::sync::Arc;

use super::{
    blocks, check_gain, on_segment, seg, sine_wave, stack, switching_control, make_upwind, Flux, ModelInstance,
    ModelSystem, Scenario, Variant,
};
use crate::error::{Error, Result};
use crate::integrator::Layout;
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

/// Eigen-decomposition `𝒜 = T Λ T⁻¹` of the Jin–Xin transport matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JinXinDiagonalization {
    pub a: f64,
    pub t: Matrix,
    pub lambda: Matrix,
    pub t_inv: Matrix,
}

impl JinXinDiagonalization {
    /// `𝒜 = [[0, 1, 1], [a, 0, 0], [0, 0, 0]]`
    pub fn transport(&self) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, self.a, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Characteristic variables `ξ = T⁻¹ (u, ν, ω)`.
    pub fn characteristic(&self, u: f64, nu: f64, omega: f64) -> Vector {
        &self.t_inv * Vector::from_row_slice(&[u, nu, omega])
    }
}

pub fn jin_xin_diagonalize(a: f64) -> Result<JinXinDiagonalization> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("wave speed a must be positive, got {a}")));
    }
    let s = a.sqrt();
    // Columns are the eigenvectors (0, -1, 1), (1/√a, 1, 0), (-1/√a, 1, 0).
    let t = Matrix::from_row_slice(3, 3, &[0.0, 1.0 / s, -1.0 / s, -1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    let lambda = Matrix::from_diagonal(&Vector::from_row_slice(&[0.0, s, -s]));
    let t_inv = Matrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, s / 2.0, 0.5, 0.5, -s / 2.0, 0.5, 0.5]);
    Ok(JinXinDiagonalization { a, t, lambda, t_inv })
}

fn unit_box(dim: usize) -> Result<ControlBox> {
    ControlBox::symmetric(dim, 1.0)
}

/// Two-scale Jin–Xin relaxation: slow `(u, v)`, fast `w`.
///
/// ```text
///   u̇ = -D v - D w + H(u) α
///   v̇ = -a Dᵀ' u                     (forward stencil)
///   εẇ = -(v - F(u) - G(u) β + w)
/// ```
pub fn jin_xin_two_scale(
    d: usize,
    dx: f64,
    a: f64,
    flux: Flux,
    h_gain: MatrixField,
    g_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    let diag = jin_xin_diagonalize(a)?;
    let db = make_upwind(d, dx, Variant::Backward)?;
    let df = db.adjoint();
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let id = Matrix::identity(d, d);

    let a1 = MatrixField::constant(blocks(2, 1, d, &[(0, 0, &(-&db.matrix))]));
    let h = on_segment(&h_gain, 0, d);
    let b1 = MatrixField::new(2 * d, p, move |z| {
        let mut out = Matrix::zeros(2 * d, p);
        out.rows_mut(0, d).copy_from(&h.eval(z)?);
        Ok(out)
    });
    let c1_mat = blocks(2, 2, d, &[(0, 1, &(-&db.matrix)), (1, 0, &(-a * &df.matrix))]);
    let c1 = MatrixField::vector(2 * d, move |z| Ok(&c1_mat * z));
    let a2 = MatrixField::constant(-id);
    let b2 = on_segment(&g_gain, 0, d);
    let fl = flux.clone();
    let c2 = MatrixField::vector(d, move |z| Ok(fl.apply(&seg(z, 0, d)) - seg(z, 1, d)));
    let sys = TwoScaleSystem::new(a1, a2, b1, b2, c1, c2, unit_box(p)?, unit_box(q)?, epsilon)?;

    let fl = flux.clone();
    let equilibrium = Arc::new(move |z: &Vector| Ok(fl.apply(&seg(z, 0, d)) - seg(z, 1, d)));

    let u0 = sine_wave(d, dx, 0.5, 0.1);
    let v0 = flux.apply(&u0);
    let horizon = 1.0;
    let defaults = Scenario {
        z0: stack(&[u0, v0]),
        y0: Vector::zeros(d),
        x0: None,
        alpha: switching_control(&sys.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys.omega_b, 1.0, horizon)?,
        gamma: None,
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.2), Vector::from_element(d, -1.0)]),
        stack(&[Vector::from_element(d, 0.8), Vector::from_element(d, 1.0)]),
    )?;
    Ok(ModelInstance {
        name: "jin-xin-2".into(),
        system: ModelSystem::Two(sys),
        layout: Layout::new(&[("u", d), ("v", d), ("w", d)]),
        grid: db,
        fluxes: vec![("F".into(), flux)],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain)],
        diagonalization: Some(diag),
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: None,
    })
}

/// Three-scale Jin–Xin relaxation: macro `(u, v, w)`, meso `p`, micro `q`.
///
/// ```text
///   u̇ = -D v - D p + H(u) α
///   v̇ = -a Dᵀ' u + w + q
///   ẇ = -b Dᵀ' u
///   εṗ = -(v - F0(u) - G(u) β + p)
///   ε²q̇ = -(w - F1(u) - K(u) γ + q)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn jin_xin_three_scale(
    d: usize,
    dx: f64,
    a: f64,
    b: f64,
    f0: Flux,
    f1: Flux,
    h_gain: MatrixField,
    g_gain: MatrixField,
    k_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    let diag = jin_xin_diagonalize(a)?;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("b must be positive, got {b}")));
    }
    let db = make_upwind(d, dx, Variant::Backward)?;
    let df = db.adjoint();
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let r = check_gain("K", &k_gain, d)?;
    let id = Matrix::identity(d, d);

    let a0 = MatrixField::constant(blocks(3, 1, d, &[(1, 0, &id)]));
    let a1 = MatrixField::constant(blocks(3, 1, d, &[(0, 0, &(-&db.matrix))]));
    let h = on_segment(&h_gain, 0, d);
    let b1 = MatrixField::new(3 * d, p, move |z| {
        let mut out = Matrix::zeros(3 * d, p);
        out.rows_mut(0, d).copy_from(&h.eval(z)?);
        Ok(out)
    });
    let c1_mat = blocks(
        3,
        3,
        d,
        &[(0, 1, &(-&db.matrix)), (1, 0, &(-a * &df.matrix)), (1, 2, &id), (2, 0, &(-b * &df.matrix))],
    );
    let c1 = MatrixField::vector(3 * d, move |z| Ok(&c1_mat * z));
    let fl0 = f0.clone();
    let c2 = MatrixField::vector(d, move |z| Ok(fl0.apply(&seg(z, 0, d)) - seg(z, 1, d)));
    let two = TwoScaleSystem::new(
        a1,
        MatrixField::constant(-&id),
        b1,
        on_segment(&g_gain, 0, d),
        c1,
        c2,
        unit_box(p)?,
        unit_box(q)?,
        epsilon,
    )?;
    let fl1 = f1.clone();
    let c3 = MatrixField::vector(d, move |z| Ok(fl1.apply(&seg(z, 0, d)) - seg(z, 2, d)));
    let sys3 = ThreeScaleSystem::new(two, a0, MatrixField::constant(-id), on_segment(&k_gain, 0, d), c3, unit_box(r)?)?;

    let fl0 = f0.clone();
    let equilibrium = Arc::new(move |z: &Vector| Ok(fl0.apply(&seg(z, 0, d)) - seg(z, 1, d)));
    let fl1 = f1.clone();
    let micro = Arc::new(move |z: &Vector| Ok(fl1.apply(&seg(z, 0, d)) - seg(z, 2, d)));

    let u0 = sine_wave(d, dx, 0.5, 0.1);
    let v0 = f0.apply(&u0);
    let w0 = f1.apply(&u0);
    let horizon = 1.0;
    let defaults = Scenario {
        z0: stack(&[u0, v0, w0]),
        y0: Vector::zeros(d),
        x0: Some(Vector::zeros(d)),
        alpha: switching_control(&sys3.two.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys3.two.omega_b, 1.0, horizon)?,
        gamma: Some(switching_control(&sys3.omega_g, 1.0, horizon)?),
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.2), Vector::from_element(2 * d, -1.0)]),
        stack(&[Vector::from_element(d, 0.8), Vector::from_element(2 * d, 1.0)]),
    )?;
    Ok(ModelInstance {
        name: "jin-xin-3".into(),
        system: ModelSystem::Three(sys3),
        layout: Layout::new(&[("u", d), ("v", d), ("w", d), ("p", d), ("q", d)]),
        grid: db,
        fluxes: vec![("F0".into(), f0), ("F1".into(), f1)],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain), ("K".into(), k_gain)],
        diagonalization: Some(diag),
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: Some(micro),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inf_norm;
    use crate::reduction::{build_reduced, cascade_reduce};
    use crate::zoo::testutil::check_model;
    use crate::zoo::{profile_gain, Profile};
    use proptest::prelude::*;

    const D: usize = 8;
    const DX: f64 = 1.0 / 8.0;

    fn jx2(a: f64, flux: Flux) -> ModelInstance {
        jin_xin_two_scale(
            D,
            DX,
            a,
            flux,
            profile_gain(D, DX, 0.3, Profile::Sine),
            profile_gain(D, DX, 0.2, Profile::Cosine),
            0.1,
        )
        .unwrap()
    }

    fn jx3(f1: Flux, k_scale: f64) -> ModelInstance {
        jin_xin_three_scale(
            D,
            DX,
            1.0,
            1.0,
            Flux::burgers(),
            f1,
            profile_gain(D, DX, 0.3, Profile::Sine),
            profile_gain(D, DX, 0.2, Profile::Cosine),
            profile_gain(D, DX, k_scale, Profile::Uniform),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn diagonalization_examples() {
        let dg = jin_xin_diagonalize(1.0).unwrap();
        assert_eq!(dg.lambda, Matrix::from_diagonal(&Vector::from_row_slice(&[0.0, 1.0, -1.0])));
        for a in [0.25, 1.0, 4.0] {
            let dg = jin_xin_diagonalize(a).unwrap();
            assert!((&dg.t * &dg.t_inv - Matrix::identity(3, 3)).amax() < 1e-15);
            assert!((&dg.t_inv * &dg.t - Matrix::identity(3, 3)).amax() < 1e-15);
        }
        let dg = jin_xin_diagonalize(4.0).unwrap();
        let xi = dg.characteristic(0.3, -0.2, 0.7);
        assert_eq!(xi[0], 0.7);
        assert!((xi[1] - (0.3 + 0.5 * (-0.2 + 0.7))).abs() < 1e-15);
        assert!((xi[2] - (-0.3 + 0.5 * (-0.2 + 0.7))).abs() < 1e-15);
        assert!(jin_xin_diagonalize(0.0).is_err());
        assert_eq!(jx2(4.0, Flux::burgers()).diagonalization.unwrap().lambda[(1, 1)], 2.0);
    }

    proptest! {
        #[test]
        fn diagonalization_reconstructs_transport(a in 1e-3f64..10.0) {
            let dg = jin_xin_diagonalize(a).unwrap();
            let rec = &dg.t * &dg.lambda * &dg.t_inv;
            prop_assert!((rec - dg.transport()).amax() <= 1e-12);
        }
    }

    #[test]
    fn two_scale_model_checks() {
        let m = jx2(1.0, Flux::burgers());
        let db = m.grid.matrix.clone();
        let df = m.grid.adjoint().matrix;
        check_model(&m, |z| {
            let u = seg(z, 0, D);
            stack(&[-&db * Flux::burgers().apply(&u), -(&df * &u)])
        });
    }

    #[test]
    fn linear_flux_without_controls_is_discrete_advection() {
        let m = jin_xin_two_scale(
            D,
            DX,
            1.0,
            Flux::linear(0.6),
            MatrixField::zeros(D, 1),
            MatrixField::zeros(D, 1),
            0.1,
        )
        .unwrap();
        let red = build_reduced(m.system.two());
        let z = stack(&[sine_wave(D, DX, 0.5, 0.3), sine_wave(D, DX, 0.1, 0.2)]);
        let one = Vector::from_element(1, 1.0);
        let f = red.rhs(&z, &one, &one).unwrap();
        let expected = -0.6 * &m.grid.matrix * seg(&z, 0, D);
        assert!(inf_norm(&(f.rows(0, D).into_owned() - expected)) < 1e-12);
    }

    #[test]
    fn perturbed_fast_state_has_residual_delta() {
        let m = jx2(1.0, Flux::burgers());
        let z = m.defaults.z0.clone();
        let mut y = m.equilibrium(&z).unwrap();
        y[3] += 0.125;
        let state = stack(&[z, y]);
        let res = crate::zoo::local_equilibrium_residual(&m, &state, &Vector::zeros(1), None).unwrap();
        assert!((res - 0.125).abs() < 1e-14);
        let short = Vector::zeros(5);
        assert!(matches!(
            crate::zoo::local_equilibrium_residual(&m, &short, &Vector::zeros(1), None),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn three_scale_model_checks() {
        let m = jx3(Flux::linear(1.0), 0.5);
        let db = m.grid.matrix.clone();
        let df = m.grid.adjoint().matrix;
        check_model(&m, |z| {
            let u = seg(z, 0, D);
            stack(&[-&db * Flux::burgers().apply(&u), -(&df * &u) + &u, -(&df * &u)])
        });
    }

    #[test]
    fn three_scale_v_dynamics_gain_micro_terms() {
        let m = jx3(Flux::burgers(), 0.5);
        let (_, red) = cascade_reduce(m.system.three().unwrap()).unwrap();
        let z = stack(&[sine_wave(D, DX, 0.5, 0.2), sine_wave(D, DX, 0.0, 0.1), sine_wave(D, DX, 0.3, -0.1)]);
        let (alpha, beta, gamma) = (0.4, -0.3, 0.8);
        let f = red.rhs(&z, &Vector::from_row_slice(&[alpha, gamma]), &Vector::from_element(1, beta)).unwrap();
        let u = seg(&z, 0, D);
        let df = m.grid.adjoint().matrix;
        let k = Vector::from_element(D, 0.5);
        let expected_v = -(&df * &u) + Flux::burgers().apply(&u) + k * gamma;
        assert!(inf_norm(&(seg(&f, 1, D) - expected_v)) < 1e-12);
    }

    #[test]
    fn degenerate_third_scale_matches_two_scale_reduction() {
        let m3 = jx3(Flux::zero(), 0.0);
        let m2 = jx2(1.0, Flux::burgers());
        let red3 = m3.reduced().unwrap();
        let red2 = m2.reduced().unwrap();
        let u = sine_wave(D, DX, 0.5, 0.2);
        let v = sine_wave(D, DX, 0.1, 0.1);
        let z3 = stack(&[u.clone(), v.clone(), Vector::zeros(D)]);
        let z2 = stack(&[u, v]);
        let a = Vector::from_element(1, 0.6);
        let b = Vector::from_element(1, -0.4);
        let f3 = red3.rhs(&z3, &Vector::from_row_slice(&[0.6, 0.9]), &b).unwrap();
        let f2 = red2.rhs(&z2, &a, &b).unwrap();
        assert!(inf_norm(&(seg(&f3, 0, D) - seg(&f2, 0, D))) < 1e-12);
    }

    #[test]
    fn block_shapes_match_the_embedding() {
        let m = jx3(Flux::burgers(), 0.5);
        let s3 = m.system.three().unwrap();
        assert_eq!((s3.two.m(), s3.two.n(), s3.l()), (3 * D, D, D));
        let z = m.defaults.z0.clone();
        assert_eq!(s3.two.a2.eval(&z).unwrap(), -Matrix::identity(D, D));
        assert_eq!(s3.a3.eval(&z).unwrap(), -Matrix::identity(D, D));
        let a0 = s3.a0.eval(&z).unwrap();
        assert_eq!(a0.rows(D, D).into_owned(), Matrix::identity(D, D));
        assert_eq!(a0.rows(0, D).amax(), 0.0);
    }
}
