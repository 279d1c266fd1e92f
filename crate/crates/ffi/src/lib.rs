//! C ABI over `relaxctl`.
//!
//! Every entry point returns an `int` status (`RELAX_OK` on success). On failure
//! the message is kept per thread and can be copied out with
//! [`relax_last_error`]. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relaxctl::hjb::{solve_cell, Grid};
use relaxctl::integrator::{integrate_stiff, ControlSignal};
use relaxctl::reduction::{build_reduced, lambda1_closed_form, static_map};
use relaxctl::system::{ControlBox, MatrixField, TwoScaleSystem};
use relaxctl::zoo::registry::{build_model, ModelParams};
use relaxctl::zoo::ModelSystem;
use relaxctl::{Error, Matrix, Vector};

pub const RELAX_OK: c_int = 0;
pub const RELAX_ERR_NULL: c_int = 1;
pub const RELAX_ERR_DIMENSION: c_int = 2;
pub const RELAX_ERR_SINGULAR: c_int = 3;
pub const RELAX_ERR_NUMERICAL: c_int = 4;
pub const RELAX_ERR_GRID: c_int = 5;
pub const RELAX_ERR_INVALID: c_int = 6;
pub const RELAX_ERR_PANIC: c_int = 7;

/// Opaque system handle. Three-scale models expose their macro/meso part.
pub struct RelaxSystem {
    inner: ModelSystem,
}

impl RelaxSystem {
    fn two(&self) -> &TwoScaleSystem {
        self.inner.two()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code(e: &Error) -> c_int {
    match e {
        Error::DimensionMismatch { .. } | Error::LayoutMismatch(_) => RELAX_ERR_DIMENSION,
        Error::SingularFastMatrix { .. } | Error::EigenFailure => RELAX_ERR_SINGULAR,
        Error::GridMismatch(_) | Error::GridTooLarge { .. } | Error::CflViolation { .. } => RELAX_ERR_GRID,
        Error::InvalidArgument(_) | Error::NonAffineSystem | Error::NonFiniteMatrix { .. } => RELAX_ERR_INVALID,
        _ => RELAX_ERR_NUMERICAL,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RELAX_OK
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            RELAX_ERR_NULL
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(format!("{}: {e}", e.name()));
            code(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            RELAX_ERR_PANIC
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn vector(p: *const f64, len: usize, what: &'static str) -> Result<Vector, Fail> {
    Ok(Vector::from_row_slice(slice(p, len, what)?))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Matrix, Fail> {
    Ok(Matrix::from_row_slice(rows, cols, slice(p, rows * cols, what)?))
}

unsafe fn system<'a>(sys: *const RelaxSystem) -> Result<&'a RelaxSystem, Fail> {
    sys.as_ref().ok_or(Fail::Null("system"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn relax_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a two-scale system with constant coefficients.
///
/// Shapes: `a1` m×n, `a2` n×n, `b1` m×p, `b2` n×q, `c1` m, `c2` n; the boxes
/// are given by lower/upper corners.
///
/// # Safety
/// Every pointer must reference the number of doubles implied by its shape,
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn relax_system_new(
    m: usize,
    n: usize,
    p: usize,
    q: usize,
    a1: *const f64,
    a2: *const f64,
    b1: *const f64,
    b2: *const f64,
    c1: *const f64,
    c2: *const f64,
    alpha_lower: *const f64,
    alpha_upper: *const f64,
    beta_lower: *const f64,
    beta_upper: *const f64,
    epsilon: f64,
    out: *mut *mut RelaxSystem,
) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let sys = TwoScaleSystem::new(
            MatrixField::constant(matrix(a1, m, n, "a1")?),
            MatrixField::constant(matrix(a2, n, n, "a2")?),
            MatrixField::constant(matrix(b1, m, p, "b1")?),
            MatrixField::constant(matrix(b2, n, q, "b2")?),
            MatrixField::constant_vector(vector(c1, m, "c1")?),
            MatrixField::constant_vector(vector(c2, n, "c2")?),
            ControlBox::new(vector(alpha_lower, p, "alpha_lower")?, vector(alpha_upper, p, "alpha_upper")?)?,
            ControlBox::new(vector(beta_lower, q, "beta_lower")?, vector(beta_upper, q, "beta_upper")?)?,
            epsilon,
        )?;
        *out = Box::into_raw(Box::new(RelaxSystem { inner: ModelSystem::Two(sys) }));
        Ok(())
    })
}

/// Builds a registered zoo model with `d` cells (0 for the default) at `epsilon`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn relax_model_new(name: *const c_char, d: usize, epsilon: f64, out: *mut *mut RelaxSystem) -> c_int {
    guard(|| {
        if name.is_null() {
            return Err(Fail::Null("name"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let name = CStr::from_ptr(name).to_str().map_err(|_| Error::InvalidArgument("model name is not UTF-8".into()))?;
        let params = ModelParams { d: (d > 0).then_some(d), epsilon: Some(epsilon), ..ModelParams::default() };
        let model = build_model(name, &params)?;
        *out = Box::into_raw(Box::new(RelaxSystem { inner: model.system }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from a constructor of this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn relax_system_free(sys: *mut RelaxSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Writes the dimensions `(m, n, p, q)`.
///
/// # Safety
/// `sys` must be a live handle and `dims` must hold 4 writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn relax_system_dims(sys: *const RelaxSystem, dims: *mut usize) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        if dims.is_null() {
            return Err(Fail::Null("dims"));
        }
        let out = std::slice::from_raw_parts_mut(dims, 4);
        out.copy_from_slice(&[s.m(), s.n(), s.p(), s.q()]);
        Ok(())
    })
}

/// Fast equilibrium `y = ψ(z, β)`.
///
/// # Safety
/// `z` holds m doubles, `beta` q, and `y` n writable doubles.
#[no_mangle]
pub unsafe extern "C" fn relax_static_map(sys: *const RelaxSystem, z: *const f64, beta: *const f64, y: *mut f64) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        let z = vector(z, s.m(), "z")?;
        let beta = vector(beta, s.q(), "beta")?;
        let out = slice_mut(y, s.n(), "y")?;
        out.copy_from_slice(static_map(s, &z)?.eval(&beta).as_slice());
        Ok(())
    })
}

/// Reduced slow drift `ż = F(z, α, β)`.
///
/// # Safety
/// `z` holds m doubles, `alpha` p, `beta` q, and `dz` m writable doubles.
#[no_mangle]
pub unsafe extern "C" fn relax_reduced_rhs(
    sys: *const RelaxSystem,
    z: *const f64,
    alpha: *const f64,
    beta: *const f64,
    dz: *mut f64,
) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        let red = build_reduced(s);
        let f = red.rhs(&vector(z, s.m(), "z")?, &vector(alpha, s.p(), "alpha")?, &vector(beta, s.q(), "beta")?)?;
        slice_mut(dz, s.m(), "dz")?.copy_from_slice(f.as_slice());
        Ok(())
    })
}

/// Ergodic constant of the fast cell problem from its closed form.
///
/// # Safety
/// `z` and `p` hold m doubles; `lambda` is writable.
#[no_mangle]
pub unsafe extern "C" fn relax_lambda1(sys: *const RelaxSystem, z: *const f64, p: *const f64, lambda: *mut f64) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        let v = lambda1_closed_form(s, &vector(z, s.m(), "z")?, &vector(p, s.m(), "p")?)?;
        *lambda.as_mut().ok_or(Fail::Null("lambda"))? = v;
        Ok(())
    })
}

/// Discounted cell-problem estimate of the ergodic constant on a uniform fast
/// grid with `nodes[k]` points on `[lower[k], upper[k]]`.
///
/// # Safety
/// `z`, `p` hold m doubles; `lower`, `upper`, `nodes` hold n entries; `lambda` is writable.
#[no_mangle]
pub unsafe extern "C" fn relax_cell_lambda(
    sys: *const RelaxSystem,
    z: *const f64,
    p: *const f64,
    lower: *const f64,
    upper: *const f64,
    nodes: *const usize,
    delta: f64,
    lambda: *mut f64,
) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        let n = s.n();
        if nodes.is_null() {
            return Err(Fail::Null("nodes"));
        }
        let grid = Grid::uniform(slice(lower, n, "lower")?, slice(upper, n, "upper")?, std::slice::from_raw_parts(nodes, n))?;
        let r = solve_cell(s, &vector(z, s.m(), "z")?, &vector(p, s.m(), "p")?, &grid, delta)?;
        *lambda.as_mut().ok_or(Fail::Null("lambda"))? = r.lambda;
        Ok(())
    })
}

/// Stiff integration over `[0, horizon]` with constant controls; writes the
/// final `(z, y)` (m + n doubles).
///
/// # Safety
/// `alpha` holds p doubles, `beta` q, `z0` m, `y0` n; `state` has m + n writable doubles.
#[no_mangle]
pub unsafe extern "C" fn relax_integrate(
    sys: *const RelaxSystem,
    alpha: *const f64,
    beta: *const f64,
    z0: *const f64,
    y0: *const f64,
    horizon: f64,
    steps: usize,
    state: *mut f64,
) -> c_int {
    guard(|| {
        let s = system(sys)?.two();
        let a = ControlSignal::constant(vector(alpha, s.p(), "alpha")?, s.omega_a.clone(), horizon)?;
        let b = ControlSignal::constant(vector(beta, s.q(), "beta")?, s.omega_b.clone(), horizon)?;
        let tr = integrate_stiff(s, &a, &b, &vector(z0, s.m(), "z0")?, &vector(y0, s.n(), "y0")?, steps)?;
        slice_mut(state, s.m() + s.n(), "state")?.copy_from_slice(tr.final_state().as_slice());
        Ok(())
    })
}
