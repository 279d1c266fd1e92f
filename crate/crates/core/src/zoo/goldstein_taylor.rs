use std::sync::Arc;

use super::{
    blocks, check_gain, make_upwind, on_segment, seg, sine_wave, stack, switching_control, top_block, Flux, ModelInstance,
    ModelSystem, Scenario, Variant,
};
use crate::error::{Error, Result};
use crate::integrator::Layout;
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, MatrixField, ThreeScaleSystem, TwoScaleSystem};

/// Two-scale Goldstein–Taylor model: slow density `ρ`, fast flux `J`.
///
/// ```text
///   ρ̇ = -D J + H(ρ) α
///   εJ̇ = -(Dᵀ' ρ + J - G(ρ) β)
/// ```
pub fn goldstein_taylor_two_scale(
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

    let dfm = df.matrix.clone();
    let c2 = MatrixField::vector(d, move |z| Ok(-(&dfm * z)));
    let sys = TwoScaleSystem::new(
        MatrixField::constant(-&db.matrix),
        MatrixField::constant(-Matrix::identity(d, d)),
        h_gain.clone(),
        g_gain.clone(),
        MatrixField::zeros(d, 1),
        c2,
        ControlBox::symmetric(p, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?;
    let dfm = df.matrix.clone();
    let equilibrium = Arc::new(move |z: &Vector| Ok(-(&dfm * z)));

    let horizon = 1.0;
    let defaults = Scenario {
        z0: sine_wave(d, dx, 1.0, 0.3),
        y0: Vector::zeros(d),
        x0: None,
        alpha: switching_control(&sys.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys.omega_b, 1.0, horizon)?,
        gamma: None,
    };
    let sample_box = ControlBox::new(Vector::from_element(d, 0.5), Vector::from_element(d, 1.5))?;
    Ok(ModelInstance {
        name: "goldstein-taylor-2".into(),
        system: ModelSystem::Two(sys),
        layout: Layout::new(&[("rho", d), ("J", d)]),
        grid: db,
        fluxes: Vec::new(),
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain)],
        diagonalization: None,
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: None,
    })
}

/// Three-scale Goldstein–Taylor model: macro `(ρ, J, w)`, meso `p`, micro `q`.
///
/// ```text
///   ρ̇ = -D J - D p + H(ρ) α
///   J̇ = -a Dᵀ' ρ + w + q
///   ẇ = -b Dᵀ' ρ
///   εṗ = -(p + J + Dᵀ' ρ - G(ρ) β)
///   ε²q̇ = -(q + w - F1(ρ) - K(ρ) γ)
/// ```
/// `a = b = 0` is allowed.
#[allow(clippy::too_many_arguments)]
pub fn goldstein_taylor_three_scale(
    d: usize,
    dx: f64,
    a: f64,
    b: f64,
    f1: Flux,
    h_gain: MatrixField,
    g_gain: MatrixField,
    k_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("a and b must be >= 0, got {a}, {b}")));
    }
    let db = make_upwind(d, dx, Variant::Backward)?;
    let df = db.adjoint();
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let r = check_gain("K", &k_gain, d)?;
    let id = Matrix::identity(d, d);

    let c1_mat = blocks(
        3,
        3,
        d,
        &[(0, 1, &(-&db.matrix)), (1, 0, &(-a * &df.matrix)), (1, 2, &id), (2, 0, &(-b * &df.matrix))],
    );
    let c1 = MatrixField::vector(3 * d, move |z| Ok(&c1_mat * z));
    let dfm = df.matrix.clone();
    let c2 = MatrixField::vector(d, move |z| Ok(-seg(z, 1, d) - &dfm * seg(z, 0, d)));
    let two = TwoScaleSystem::new(
        MatrixField::constant(blocks(3, 1, d, &[(0, 0, &(-&db.matrix))])),
        MatrixField::constant(-&id),
        top_block(3 * d, d, &h_gain),
        on_segment(&g_gain, 0, d),
        c1,
        c2,
        ControlBox::symmetric(p, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?;
    let fl = f1.clone();
    let c3 = MatrixField::vector(d, move |z| Ok(fl.apply(&seg(z, 0, d)) - seg(z, 2, d)));
    let sys3 = ThreeScaleSystem::new(
        two,
        MatrixField::constant(blocks(3, 1, d, &[(1, 0, &id)])),
        MatrixField::constant(-&id),
        on_segment(&k_gain, 0, d),
        c3,
        ControlBox::symmetric(r, 1.0)?,
    )?;

    let dfm = df.matrix.clone();
    let equilibrium = Arc::new(move |z: &Vector| Ok(-seg(z, 1, d) - &dfm * seg(z, 0, d)));
    let fl = f1.clone();
    let micro = Arc::new(move |z: &Vector| Ok(fl.apply(&seg(z, 0, d)) - seg(z, 2, d)));

    let horizon = 1.0;
    let defaults = Scenario {
        z0: stack(&[sine_wave(d, dx, 1.0, 0.3), Vector::zeros(d), Vector::zeros(d)]),
        y0: Vector::zeros(d),
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
        name: "goldstein-taylor-3".into(),
        system: ModelSystem::Three(sys3),
        layout: Layout::new(&[("rho", d), ("J", d), ("w", d), ("p", d), ("q", d)]),
        grid: db,
        fluxes: vec![("F1".into(), f1)],
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
    use crate::integrator::ControlSignal;
    use crate::linalg::inf_norm;
    use crate::zoo::testutil::check_model;
    use crate::zoo::{profile_gain, Profile};

    const D: usize = 10;
    const DX: f64 = 0.1;

    fn gt2() -> ModelInstance {
        goldstein_taylor_two_scale(
            D,
            DX,
            profile_gain(D, DX, 0.3, Profile::Sine),
            profile_gain(D, DX, 0.2, Profile::Cosine),
            0.1,
        )
        .unwrap()
    }

    fn gt3(a: f64, b: f64, f1: Flux, k: f64) -> ModelInstance {
        goldstein_taylor_three_scale(
            D,
            DX,
            a,
            b,
            f1,
            profile_gain(D, DX, 0.3, Profile::Sine),
            profile_gain(D, DX, 0.2, Profile::Cosine),
            profile_gain(D, DX, k, Profile::Uniform),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn two_scale_model_checks() {
        let m = gt2();
        let lap = &m.grid.matrix * m.grid.adjoint().matrix;
        check_model(&m, |z| &lap * z);
    }

    #[test]
    fn constants_are_steady_and_mass_is_conserved() {
        let m = goldstein_taylor_two_scale(D, DX, MatrixField::zeros(D, 1), MatrixField::zeros(D, 1), 0.1).unwrap();
        let red = m.reduced().unwrap();
        let zero = Vector::zeros(1);
        let f = red.rhs(&Vector::from_element(D, 2.5), &zero, &zero).unwrap();
        assert!(inf_norm(&f) < 1e-12);

        let z0 = sine_wave(D, DX, 1.0, 0.4);
        let c = ControlSignal::constant(zero.clone(), ControlBox::symmetric(1, 1.0).unwrap(), 1.0).unwrap();
        let tr = crate::integrator::integrate_reduced(&red, &c, &c, &z0, 2000).unwrap();
        let mass0 = z0.sum();
        for s in &tr.states {
            assert!((s.sum() - mass0).abs() < 1e-12);
        }
    }

    #[test]
    fn three_scale_model_checks() {
        let m = gt3(1.0, 0.5, Flux::burgers(), 0.5);
        let df = m.grid.adjoint().matrix;
        let lap = &m.grid.matrix * &df;
        check_model(&m, |z| {
            let rho = seg(z, 0, D);
            stack(&[&lap * &rho, -(&df * &rho) + Flux::burgers().apply(&rho), -0.5 * (&df * &rho)])
        });
    }

    #[test]
    fn zero_wave_parameters_keep_only_sources() {
        let m = gt3(0.0, 0.0, Flux::burgers(), 0.5);
        let s3 = m.system.three().unwrap();
        let z = stack(&[sine_wave(D, DX, 1.0, 0.2), sine_wave(D, DX, 0.0, 0.3), sine_wave(D, DX, 0.5, 0.1)]);
        let y = Vector::zeros(D);
        let x = sine_wave(D, DX, -0.2, 0.2);
        let f = s3.slow_drift(&z, &y, &x, &Vector::zeros(1)).unwrap();
        assert!(inf_norm(&(seg(&f, 1, D) - (seg(&z, 2, D) + &x))) < 1e-14);
        assert!(inf_norm(&seg(&f, 2, D)) == 0.0);
    }

    #[test]
    fn degenerate_third_scale_matches_two_scale() {
        let m3 = gt3(1.0, 1.0, Flux::zero(), 0.0);
        let m2 = gt2();
        let rho = sine_wave(D, DX, 1.0, 0.2);
        let z3 = stack(&[rho.clone(), sine_wave(D, DX, 0.0, 0.3), Vector::zeros(D)]);
        let b = Vector::from_element(1, 0.3);
        let f3 = m3.reduced().unwrap().rhs(&z3, &Vector::from_row_slice(&[0.2, 0.7]), &b).unwrap();
        let f2 = m2.reduced().unwrap().rhs(&rho, &Vector::from_element(1, 0.2), &b).unwrap();
        assert!(inf_norm(&(seg(&f3, 0, D) - f2)) < 1e-12);
    }

    #[test]
    fn micro_equilibrium_residual_vanishes() {
        let m = gt3(1.0, 1.0, Flux::burgers(), 0.5);
        let s3 = m.system.three().unwrap();
        let z = m.defaults.z0.clone();
        let q = m.micro_equilibrium(&z).unwrap().unwrap();
        let r = s3.micro_bracket(&z, &q, &Vector::zeros(1)).unwrap();
        assert!(inf_norm(&r) == 0.0);
    }
}
