use std::sync::Arc;

use super::{check_gain, make_upwind, on_segment, seg, stack, switching_control, top_block, Flux, ModelInstance, ModelSystem, Scenario, Variant};
use crate::error::{Error, Result};
use crate::integrator::Layout;
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, MatrixField, SlowCoupling, TwoScaleSystem};

/// Parameters of the second-order traffic model.
#[derive(Debug, Clone)]
pub struct TrafficParams {
    /// Relaxation strength `A > 0`.
    pub a: f64,
    /// Equilibrium velocity `V(ρ)`.
    pub velocity: Flux,
    /// Anticipation `P(ρ)`.
    pub anticipation: Flux,
    /// Smallest admissible density.
    pub floor: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            velocity: Flux::new("1-rho", |r| 1.0 - r),
            anticipation: Flux::new("rho^2", |r| r * r),
            floor: 1e-8,
        }
    }
}

pub(crate) fn check_density(rho: &Vector, floor: f64) -> Result<()> {
    match rho.iter().position(|&r| !(r >= floor)) {
        Some(cell) => Err(Error::DensityFloor { cell, value: rho[cell], floor }),
        None => Ok(()),
    }
}

/// Second-order traffic model with slow `(ρ, g)` and fast `f`.
///
/// ```text
///   ρ̇ = -v Dρ - ρ Dv + H(ρ) α
///   ġ = -(f + g) Dv - v D(f + g)
///   εḟ = -A (f + g - ρV(ρ) - ρP(ρ) - G(ρ) β)
///   ρ v = f + g - ρP(ρ)
/// ```
/// Products are component-wise. The slow drift is not affine in `f`, so it
/// enters the system as a nonlinear coupling.
pub fn traffic_model(
    d: usize,
    dx: f64,
    params: &TrafficParams,
    h_gain: MatrixField,
    g_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    if !(params.a > 0.0 && params.a.is_finite()) {
        return Err(Error::InvalidArgument(format!("relaxation strength A must be positive, got {}", params.a)));
    }
    let db = make_upwind(d, dx, Variant::Backward)?;
    let p = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let TrafficParams { a, velocity, anticipation, floor } = params.clone();

    let dbm = db.matrix.clone();
    let ant = anticipation.clone();
    let coupling = SlowCoupling::new(move |z, f| {
        let rho = seg(z, 0, d);
        check_density(&rho, floor)?;
        let g = seg(z, 1, d);
        let fg = f + &g;
        let v = (&fg - rho.component_mul(&ant.apply(&rho))).component_div(&rho);
        let dv = &dbm * &v;
        let drho = -v.component_mul(&(&dbm * &rho)) - rho.component_mul(&dv);
        let dg = -fg.component_mul(&dv) - v.component_mul(&(&dbm * &fg));
        Ok(stack(&[drho, dg]))
    });
    let (vel, ant) = (velocity.clone(), anticipation.clone());
    let target = move |z: &Vector| {
        let rho = seg(z, 0, d);
        rho.component_mul(&(vel.apply(&rho) + ant.apply(&rho))) - seg(z, 1, d)
    };
    let t2 = target.clone();
    let c2 = MatrixField::vector(d, move |z| Ok(a * t2(z)));
    let g = on_segment(&g_gain, 0, d);
    let b2 = MatrixField::new(d, q, move |z| Ok(a * g.eval(z)?));
    let sys = TwoScaleSystem::new(
        MatrixField::zeros(2 * d, d),
        MatrixField::constant(-a * Matrix::identity(d, d)),
        top_block(2 * d, d, &h_gain),
        b2,
        MatrixField::zeros(2 * d, 1),
        c2,
        ControlBox::symmetric(p, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?
    .with_extra_drift(coupling);
    let equilibrium = Arc::new(move |z: &Vector| Ok(target(z)));

    let horizon = 1.0;
    let rho0 = super::sine_wave(d, dx, 0.2, 0.04);
    let g0 = rho0.component_mul(&(velocity.apply(&rho0) - anticipation.apply(&rho0)));
    let defaults = Scenario {
        z0: stack(&[rho0, g0]),
        y0: Vector::zeros(d),
        x0: None,
        alpha: switching_control(&sys.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys.omega_b, 1.0, horizon)?,
        gamma: None,
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.2), Vector::from_element(d, 0.0)]),
        stack(&[Vector::from_element(d, 0.5), Vector::from_element(d, 0.3)]),
    )?;
    Ok(ModelInstance {
        name: "traffic".into(),
        system: ModelSystem::Two(sys),
        layout: Layout::new(&[("rho", d), ("g", d), ("f", d)]),
        grid: db,
        fluxes: vec![("V".into(), velocity), ("P".into(), anticipation)],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain)],
        diagonalization: None,
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inf_norm;
    use crate::zoo::testutil::check_model;
    use crate::zoo::{local_equilibrium_residual, profile_gain, sine_wave, Profile};

    const D: usize = 8;
    const DX: f64 = 0.125;

    fn model(params: &TrafficParams) -> ModelInstance {
        traffic_model(D, DX, params, profile_gain(D, DX, 0.3, Profile::Sine), profile_gain(D, DX, 0.05, Profile::Cosine), 0.1)
            .unwrap()
    }

    #[test]
    fn reduced_density_follows_the_equilibrium_flux() {
        let params = TrafficParams::default();
        let m = model(&params);
        let db = m.grid.matrix.clone();
        check_model(&m, |z| {
            let rho = seg(z, 0, D);
            let v = rho.map(|r| 1.0 - r);
            let s = rho.component_mul(&rho.map(|r| 1.0 - r + r * r));
            let dv = &db * &v;
            stack(&[
                -v.component_mul(&(&db * &rho)) - rho.component_mul(&dv),
                -s.component_mul(&dv) - v.component_mul(&(&db * &s)),
            ])
        });
    }

    #[test]
    fn constant_fields_are_steady() {
        let params = TrafficParams {
            velocity: Flux::new("const", |_| 0.7),
            anticipation: Flux::new("const", |_| 0.2),
            ..TrafficParams::default()
        };
        let m = model(&params);
        let z = stack(&[Vector::from_element(D, 0.4), Vector::from_element(D, 0.1)]);
        let zero = Vector::zeros(1);
        let f = m.reduced().unwrap().rhs(&z, &zero, &zero).unwrap();
        assert!(inf_norm(&f) < 1e-12);
    }

    #[test]
    fn equilibrium_residual_vanishes() {
        let m = model(&TrafficParams::default());
        let z = m.defaults.z0.clone();
        let f = m.equilibrium(&z).unwrap();
        let res = local_equilibrium_residual(&m, &stack(&[z, f]), &Vector::zeros(1), None).unwrap();
        assert!(res < 1e-15);
    }

    #[test]
    fn vacuum_is_rejected() {
        let m = model(&TrafficParams::default());
        let mut z = m.defaults.z0.clone();
        z[3] = 0.0;
        let y = Vector::zeros(D);
        let err = m.system.two().slow_drift(&z, &y, &Vector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::DensityFloor { cell: 3, .. }));
    }

    #[test]
    fn nonaffine_coupling_blocks_closed_forms() {
        let m = model(&TrafficParams::default());
        let two = m.system.two();
        assert!(!two.is_affine());
        let z = m.defaults.z0.clone();
        let p = sine_wave(2 * D, 0.0625, 0.0, 1.0);
        assert!(matches!(crate::reduction::lambda1_closed_form(two, &z, &p), Err(Error::NonAffineSystem)));
        assert!(traffic_model(D, DX, &TrafficParams { a: 0.0, ..TrafficParams::default() }, MatrixField::zeros(D, 1), MatrixField::zeros(D, 1), 0.1).is_err());
    }
}
