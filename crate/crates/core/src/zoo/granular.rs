use std::fmt;
use std::sync::Arc;

use super::traffic::check_density;
use super::{check_gain, make_upwind, on_segment, seg, sine_wave, stack, switching_control, Flux, ModelInstance, ModelSystem, Scenario, Variant};
use crate::error::{Error, Result};
use crate::integrator::Layout;
use crate::linalg::{Matrix, Vector};
use crate::system::{ControlBox, MatrixField, TwoScaleSystem};

/// Granular temperature as a function of the slow state `(ρ, v, w)`.
#[derive(Clone)]
pub struct TemperatureField {
    name: String,
    f: Arc<dyn Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync>,
}

impl fmt::Debug for TemperatureField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TemperatureField({})", self.name)
    }
}

impl TemperatureField {
    /// `f(ρ, v, w) -> T`
    pub fn new(name: &str, f: impl Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), f: Arc::new(f) }
    }

    pub fn constant(t: f64) -> Self {
        Self::new("constant", move |rho, _, _| Vector::from_element(rho.len(), t))
    }

    /// `ρT = (2/3) w - (1/3) v u`, reading the `w` slice as the total energy.
    pub fn recovered() -> Self {
        Self::new("recovered", |rho, v, w| {
            let vu = v.component_mul(v).component_div(rho);
            ((2.0 / 3.0) * w - (1.0 / 3.0) * vu).component_div(rho)
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, rho: &Vector, v: &Vector, w: &Vector) -> Result<Vector> {
        let t = (self.f)(rho, v, w);
        match t.iter().position(|&x| !(x >= 0.0)) {
            Some(cell) => Err(Error::NegativeTemperature { cell, value: t[cell] }),
            None => Ok(t),
        }
    }
}

/// Parameters of the granular gas model.
#[derive(Debug, Clone)]
pub struct GranularParams {
    /// Coefficient of restitution in `[0, 1]`.
    pub e: f64,
    pub gravity: f64,
    /// Statistical correlation `G(ρ)`.
    pub correlation: Flux,
    pub temperature: TemperatureField,
    pub floor: f64,
}

impl Default for GranularParams {
    fn default() -> Self {
        Self {
            e: 0.5,
            gravity: 0.0,
            correlation: Flux::new("one", |_| 1.0),
            temperature: TemperatureField::constant(1.0),
            floor: 1e-8,
        }
    }
}

/// Pointwise closures of the slow state.
struct Closures {
    rho: Vector,
    v: Vector,
    w: Vector,
    u: Vector,
    pressure: Vector,
    rate: Vector,
}

fn closures(params: &GranularParams, z: &Vector, d: usize) -> Result<Closures> {
    let rho = seg(z, 0, d);
    check_density(&rho, params.floor)?;
    let (v, w) = (seg(z, 1, d), seg(z, 2, d));
    let t = params.temperature.eval(&rho, &v, &w)?;
    let gc = params.correlation.apply(&rho);
    let e = params.e;
    let pressure = rho.component_mul(&t).component_mul(&gc.map(|g| 1.0 + 2.0 * (1.0 + e) * g));
    let rate = (2.0 * (1.0 - e * e) / 3.0) * gc.component_mul(&rho).component_mul(&t.map(f64::sqrt));
    let u = v.component_div(&rho);
    Ok(Closures { rho, v, w, u, pressure, rate })
}

/// Granular gas with slow `(ρ, v, w)`, fast `φ` and slow controls `(α, γ)`.
///
/// ```text
///   ρ̇ = -D v + H(ρ) α
///   v̇ = ρ g - u Dv - v Du - D p + K(ρ) γ
///   ẇ = -u D(w + p + φ) - (w + p + φ) Du
///   εφ̇ = -M(ρ) (φ + w - uv/2 - G(ρ) β)
/// ```
/// with `u = v/ρ`, `p = ρT(1 + 2(1+e)G_c(ρ))` and `M = 2(1-e²)/3 · G_c(ρ) ρ T^{1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn granular_model(
    d: usize,
    dx: f64,
    params: &GranularParams,
    h_gain: MatrixField,
    g_gain: MatrixField,
    k_gain: MatrixField,
    epsilon: f64,
) -> Result<ModelInstance> {
    if !(0.0..=1.0).contains(&params.e) {
        return Err(Error::InvalidArgument(format!("restitution e must lie in [0, 1], got {}", params.e)));
    }
    let db = make_upwind(d, dx, Variant::Backward)?;
    let ph = check_gain("H", &h_gain, d)?;
    let q = check_gain("G", &g_gain, d)?;
    let pk = check_gain("K", &k_gain, d)?;

    let dbm = db.matrix.clone();
    let pr = params.clone();
    let a1 = MatrixField::new(3 * d, d, move |z| {
        let c = closures(&pr, z, d)?;
        let du = &dbm * &c.u;
        let mut out = Matrix::zeros(3 * d, d);
        out.view_mut((2 * d, 0), (d, d))
            .copy_from(&(-(Matrix::from_diagonal(&c.u) * &dbm) - Matrix::from_diagonal(&du)));
        Ok(out)
    });
    let (h, k) = (on_segment(&h_gain, 0, d), on_segment(&k_gain, 0, d));
    let b1 = MatrixField::new(3 * d, ph + pk, move |z| {
        let mut out = Matrix::zeros(3 * d, ph + pk);
        out.view_mut((0, 0), (d, ph)).copy_from(&h.eval(z)?);
        out.view_mut((d, ph), (d, pk)).copy_from(&k.eval(z)?);
        Ok(out)
    });
    let (dbm, pr) = (db.matrix.clone(), params.clone());
    let c1 = MatrixField::vector(3 * d, move |z| {
        let c = closures(&pr, z, d)?;
        let du = &dbm * &c.u;
        let drho = -(&dbm * &c.v);
        let dv = pr.gravity * &c.rho - c.u.component_mul(&(&dbm * &c.v)) - c.v.component_mul(&du) - &dbm * &c.pressure;
        let wp = &c.w + &c.pressure;
        let dw = -c.u.component_mul(&(&dbm * &wp)) - wp.component_mul(&du);
        Ok(stack(&[drho, dv, dw]))
    });
    let pr = params.clone();
    let a2 = MatrixField::new(d, d, move |z| Ok(-Matrix::from_diagonal(&closures(&pr, z, d)?.rate)));
    let g = on_segment(&g_gain, 0, d);
    let pr = params.clone();
    let b2 = MatrixField::new(d, q, move |z| {
        let c = closures(&pr, z, d)?;
        Ok(Matrix::from_diagonal(&c.rate) * g.eval(z)?)
    });
    let target = |c: &Closures| 0.5 * c.u.component_mul(&c.v) - &c.w;
    let pr = params.clone();
    let c2 = MatrixField::vector(d, move |z| {
        let c = closures(&pr, z, d)?;
        Ok(c.rate.component_mul(&target(&c)))
    });
    let sys = TwoScaleSystem::new(
        a1,
        a2,
        b1,
        b2,
        c1,
        c2,
        ControlBox::symmetric(ph + pk, 1.0)?,
        ControlBox::symmetric(q, 1.0)?,
        epsilon,
    )?;
    let pr = params.clone();
    let equilibrium = Arc::new(move |z: &Vector| Ok(target(&closures(&pr, z, d)?)));

    let horizon = 1.0;
    let rho0 = sine_wave(d, dx, 1.0, 0.1);
    let defaults = Scenario {
        z0: stack(&[rho0.clone(), 3.0 * &rho0, 6.0 * &rho0]),
        y0: Vector::zeros(d),
        x0: None,
        alpha: switching_control(&sys.omega_a, 0.5, horizon)?,
        beta: switching_control(&sys.omega_b, 1.0, horizon)?,
        gamma: None,
    };
    let sample_box = ControlBox::new(
        stack(&[Vector::from_element(d, 0.8), Vector::from_element(d, 2.0), Vector::from_element(d, 4.0)]),
        stack(&[Vector::from_element(d, 1.2), Vector::from_element(d, 4.0), Vector::from_element(d, 8.0)]),
    )?;
    Ok(ModelInstance {
        name: "granular".into(),
        system: ModelSystem::Two(sys),
        layout: Layout::new(&[("rho", d), ("v", d), ("w", d), ("phi", d)]),
        grid: db,
        fluxes: vec![("Gc".into(), params.correlation.clone())],
        gains: vec![("H".into(), h_gain), ("G".into(), g_gain), ("K".into(), k_gain)],
        diagonalization: None,
        defaults,
        sample_box,
        equilibrium,
        micro_equilibrium: None,
    })
}
