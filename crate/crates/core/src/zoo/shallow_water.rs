use std::sync::Arc;

use super::{
    blocks, check_gain, make_upwind, on_segment, seg, sine_wave, stack, switching_control, top_block, Flux,
    ModelInstance, ModelSystem, Scenario, Variant,
};
use crate::error::Result;
use crate::integrator::Layout;
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

fn half_square(h: &Vector) -> Vector {
    h.map(|x| 0.5 * x * x)
}

/// Shallow-water relaxation with slow `(h, f)` and fast `g`.
///
/// ```text
///   ḣ = -D f - D g + H(h) α
///   ḟ = -Dᵀ' (h + h²/2)
///   εġ = -(g + f - h²/2 - G(h) β)
/// ```
/// The reduced `h`-equation is the inviscid Burgers equation.
pub fn shallow_water(
    d: usize,
    dx: f64,
    h_gain: MatrixField,
    g_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    let db = make_upwind(d, dx, Variant::Backward)?;
    let df = db.adjoint();
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;

    let (dbm, dfm) = (db.matrix.clone(), df.matrix.clone());
    let c1 = MatrixField::vector(2 * d, move |z| {
        let h = seg(z, 0, d);
        Ok(stack(&[-(&dbm * seg(z, 1, d)), -(&dfm * (&h + half_square(&h)))]))
    });
    let c2 = MatrixField::vector(d, move |z| Ok(half_square(&seg(z, 0, d)) - seg(z, 1, d)));
    let sys = TwoScaleSystem::new(
        MatrixField::constant(blocks(2, 1, d, &[(0, 0, &(-&db.matrix))])),
        MatrixField::constant(-Matrix::identity(d, d)),
        top_block(2 * d, d, &h_gain),
        on_segment(&g_gain, 0, d),
        c1,
        c2,
        ControlBox::symmetric(p, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?;
    let equilibrium = Arc::new(move |z: &Vector| Ok(half_square(&seg(z, 0, d)) - seg(z, 1, d)));

    let horizon = 1.0;
    let defaults = Scenario {
        z0: stack(&[sine_wave(d, dx, 1.0, 0.2), Vector::zeros(d)]),
        y0: Vector::zeros(d),
        x0: None,
        alpha: switching_control(&sys.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys.omega_b, 1.0, horizon)?,
        gamma: None,
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.5), Vector::from_element(d, -1.0)]),
        stack(&[Vector::from_element(d, 1.5), Vector::from_element(d, 1.0)]),
    )?;
    Ok(ModelInstance {
        name: "shallow-water-2".into(),
        system: ModelSystem::Two(sys),
        layout: Layout::new(&[("h", d), ("f", d), ("g", d)]),
        grid: db,
        fluxes: vec![("F".into(), Flux::burgers())],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain)],
        diagonalization: None,
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: None,
    })
}

/// Three-scale shallow water: macro `(h, f, k)`, meso `(g, p)`, micro `q`.
///
/// ```text
///   ḣ = -D k - D p + H(h) α
///   ḟ = -Dᵀ' (h + h²/2)
///   k̇ = q
///   εġ = -(g + f - h²/2 - G(h) β)
///   εṗ = -(p - g - f + k)
///   ε²q̇ = -(q - F1(h) - K(h) γ)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn shallow_water_three_scale(
    d: usize,
    dx: f64,
    f1: Flux,
    h_gain: MatrixField,
    g_gain: MatrixField,
    k_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    let db = make_upwind(d, dx, Variant::Backward)?;
    let df = db.adjoint();
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let r = check_gain("K", &k_gain, d)?;
    let id = Matrix::identity(d, d);

    let (dbm, dfm) = (db.matrix.clone(), df.matrix.clone());
    let c1 = MatrixField::vector(3 * d, move |z| {
        let h = seg(z, 0, d);
        Ok(stack(&[-(&dbm * seg(z, 2, d)), -(&dfm * (&h + half_square(&h))), Vector::zeros(d)]))
    });
    let c2 = MatrixField::vector(2 * d, move |z| {
        let f = seg(z, 1, d);
        Ok(stack(&[half_square(&seg(z, 0, d)) - &f, f - seg(z, 2, d)]))
    });
    let g = on_segment(&g_gain, 0, d);
    let b2 = MatrixField::new(2 * d, q, move |z| {
        let mut out = Matrix::zeros(2 * d, q);
        out.rows_mut(0, d).copy_from(&g.eval(z)?);
        Ok(out)
    });
    let two = TwoScaleSystem::new(
        MatrixField::constant(blocks(3, 2, d, &[(0, 1, &(-&db.matrix))])),
        MatrixField::constant(blocks(2, 2, d, &[(0, 0, &(-&id)), (1, 0, &id), (1, 1, &(-&id))])),
        top_block(3 * d, d, &h_gain),
        b2,
        c1,
        c2,
        ControlBox::symmetric(p, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?;
    let fl = f1.clone();
    let c3 = MatrixField::vector(d, move |z| Ok(fl.apply(&seg(z, 0, d))));
    let sys3 = ThreeScaleSystem::new(
        two,
        MatrixField::constant(blocks(3, 1, d, &[(2, 0, &id)])),
        MatrixField::constant(-&id),
        on_segment(&k_gain, 0, d),
        c3,
        ControlBox::symmetric(r, 1.0)?,
    )?;

    let equilibrium = Arc::new(move |z: &Vector| {
        let hh = half_square(&seg(z, 0, d));
        Ok(stack(&[&hh - seg(z, 1, d), hh - seg(z, 2, d)]))
    });
    let fl = f1.clone();
    let micro = Arc::new(move |z: &Vector| Ok(fl.apply(&seg(z, 0, d))));

    let horizon = 1.0;
    let defaults = Scenario {
        z0: stack(&[sine_wave(d, dx, 1.0, 0.2), Vector::zeros(d), Vector::zeros(d)]),
        y0: Vector::zeros(2 * d),
        x0: Some(Vector::zeros(d)),
        alpha: switching_control(&sys3.two.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys3.two.omega_b, 1.0, horizon)?,
        gamma: Some(switching_control(&sys3.omega_g, 1.0, horizon)?),
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.5), Vector::from_element(2 * d, -1.0)]),
        stack(&[Vector::from_element(d, 1.5), Vector::from_element(2 * d, 1.0)]),
    )?;
    Ok(ModelInstance {
        name: "shallow-water-3".into(),
        system: ModelSystem::Three(sys3),
        layout: Layout::new(&[("h", d), ("f", d), ("k", d), ("g", d), ("p", d), ("q", d)]),
        grid: db,
        fluxes: vec![("F".into(), Flux::burgers()), ("F1".into(), f1)],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain), ("K".into(), k_gain)],
        diagonalization: None,
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
    use crate::zoo::testutil::check_model;
    use crate::zoo::{local_equilibrium_residual, profile_gain, Profile};

    const D: usize = 8;
    const DX: f64 = 0.125;

    fn sw2() -> ModelInstance {
        shallow_water(D, DX, profile_gain(D, DX, 0.3, Profile::Sine), profile_gain(D, DX, 0.2, Profile::Cosine), 0.1)
            .unwrap()
    }

    fn sw3(f1: Flux) -> ModelInstance {
        shallow_water_three_scale(
            D,
            DX,
            f1,
            profile_gain(D, DX, 0.3, Profile::Sine),
            profile_gain(D, DX, 0.2, Profile::Cosine),
            profile_gain(D, DX, 0.5, Profile::Uniform),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn two_scale_model_checks() {
        let m = sw2();
        let db = m.grid.matrix.clone();
        let df = m.grid.adjoint().matrix;
        check_model(&m, |z| {
            let h = seg(z, 0, D);
            let hh = h.map(|x| x * x);
            stack(&[-0.5 * (&db * &hh), -(&df * (&h + 0.5 * &hh))])
        });
    }

    #[test]
    fn constant_height_is_steady() {
        let m = sw2();
        let z = stack(&[Vector::from_element(D, 1.3), sine_wave(D, DX, 0.2, 0.5)]);
        let zero = Vector::zeros(1);
        let f = m.reduced().unwrap().rhs(&z, &zero, &zero).unwrap();
        assert!(inf_norm(&seg(&f, 0, D)) < 1e-12);
    }

    #[test]
    fn equilibrium_has_zero_residual() {
        let m = sw2();
        let z = m.defaults.z0.clone();
        let g = m.equilibrium(&z).unwrap();
        let h = seg(&z, 0, D);
        assert_eq!(g, h.map(|x| 0.5 * x * x) - seg(&z, 1, D));
        let res = local_equilibrium_residual(&m, &stack(&[z, g]), &Vector::zeros(1), None).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn three_scale_model_checks() {
        let m = sw3(Flux::linear(0.5));
        let db = m.grid.matrix.clone();
        let df = m.grid.adjoint().matrix;
        check_model(&m, |z| {
            let h = seg(z, 0, D);
            let hh = h.map(|x| x * x);
            stack(&[-0.5 * (&db * &hh), -(&df * (&h + 0.5 * &hh)), 0.5 * &h])
        });
    }

    #[test]
    fn three_scale_macro_height_matches_two_scale() {
        let m3 = sw3(Flux::burgers());
        let m2 = sw2();
        let h = sine_wave(D, DX, 1.0, 0.3);
        let f = sine_wave(D, DX, 0.1, 0.2);
        let b = Vector::from_element(1, 0.4);
        let z3 = stack(&[h.clone(), f.clone(), sine_wave(D, DX, -0.1, 0.2)]);
        let r3 = m3.reduced().unwrap().rhs(&z3, &Vector::from_row_slice(&[0.3, -0.6]), &b).unwrap();
        let r2 = m2.reduced().unwrap().rhs(&stack(&[h, f]), &Vector::from_element(1, 0.3), &b).unwrap();
        assert!(inf_norm(&(seg(&r3, 0, D) - seg(&r2, 0, D))) < 1e-12);
    }
}
