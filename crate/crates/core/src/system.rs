//! Affine singularly perturbed control systems.
//!
//! A two-scale system couples a slow state `z ∈ ℝᵐ` and a fast state `y ∈ ℝⁿ`:
//!
//! ```text
//!   ż  = A1(z) y + B1(z) α + C1(z)
//!   εẏ = A2(z) y + B2(z) β + C2(z)
//! ```
//!
//! with controls `α ∈ Ω_A ⊂ ℝᵖ`, `β ∈ Ω_B ⊂ ℝ^q`. The three-scale variant adds a
//! micro state `x ∈ ℝˡ` driven on the `ε²` time scale and feeding the slow drift
//! through `A0(z) x`. Control sets are axis-aligned boxes so every supremum in
//! the Hamiltonians is available in closed form.

use std::fmt;
use std::sync::Arc;

use nalgebra::Schur;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

type FieldFn = dyn Fn(&Vector) -> Result<Matrix> + Send + Sync;
type CouplingFn = dyn Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync;
type ScalarFn = dyn Fn(&Vector) -> f64 + Send + Sync;

/// Axis-aligned box of admissible control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    lower: Vector,
    upper: Vector,
}

impl ControlBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidArgument("control box must have dimension >= 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::dims("control box bounds", lower.len(), upper.len()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite()) || lower[i] > upper[i] {
                return Err(Error::InvalidArgument(format!(
                    "control box axis {i}: [{}, {}] is not a finite interval",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Result<Self> {
        Self::new(Vector::from_element(dim, -r), Vector::from_element(dim, r))
    }

    /// Degenerate box holding a single point.
    pub fn point(v: Vector) -> Result<Self> {
        Self::new(v.clone(), v)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn midpoint(&self) -> Vector {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn half_widths(&self) -> Vector {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn contains(&self, u: &Vector) -> bool {
        u.len() == self.dim()
            && (0..self.dim()).all(|i| u[i] >= self.lower[i] && u[i] <= self.upper[i])
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &ControlBox) -> ControlBox {
        let lower = Vector::from_iterator(
            self.dim() + other.dim(),
            self.lower.iter().chain(other.lower.iter()).copied(),
        );
        let upper = Vector::from_iterator(
            self.dim() + other.dim(),
            self.upper.iter().chain(other.upper.iter()).copied(),
        );
        ControlBox { lower, upper }
    }

    /// Distinct vertices of the box; degenerate axes contribute a single value.
    pub fn vertices(&self) -> Vec<Vector> {
        let mut out = vec![Vector::zeros(self.dim())];
        for i in 0..self.dim() {
            let degenerate = self.lower[i] == self.upper[i];
            let mut next = Vec::with_capacity(out.len() * 2);
            for v in &out {
                let mut lo = v.clone();
                lo[i] = self.lower[i];
                next.push(lo);
                if !degenerate {
                    let mut hi = v.clone();
                    hi[i] = self.upper[i];
                    next.push(hi);
                }
            }
            out = next;
        }
        out
    }
}

/// Maximum of `-c·u` over `u` in the box, with the maximizing control.
///
/// Coordinates with `c[i] == 0` take the interval midpoint.
pub fn box_sup(c: &Vector, omega: &ControlBox) -> Result<(f64, Vector)> {
    if c.len() != omega.dim() {
        return Err(Error::dims("box_sup", omega.dim(), c.len()));
    }
    let mut value = 0.0;
    let mut arg = Vector::zeros(c.len());
    for i in 0..c.len() {
        let (lo, hi) = (omega.lower[i], omega.upper[i]);
        value += (-c[i] * lo).max(-c[i] * hi);
        arg[i] = if c[i] > 0.0 {
            lo
        } else if c[i] < 0.0 {
            hi
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok((value, arg))
}

/// A matrix-valued function of the slow state with a fixed shape.
#[derive(Clone)]
pub struct MatrixField {
    rows: usize,
    cols: usize,
    name: Arc<str>,
    f: Arc<FieldFn>,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatrixField({} {}x{})", self.name, self.rows, self.cols)
    }
}

impl MatrixField {
    pub fn new(
        rows: usize,
        cols: usize,
        f: impl Fn(&Vector) -> Result<Matrix> + Send + Sync + 'static,
    ) -> Self {
        Self { rows, cols, name: Arc::from("field"), f: Arc::new(f) }
    }

    /// A column-vector field (`cols == 1`).
    pub fn vector(len: usize, f: impl Fn(&Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        Self::new(len, 1, move |z| {
            let v = f(z)?;
            let n = v.len();
            Ok(Matrix::from_column_slice(n, 1, v.as_slice()))
        })
    }

    pub fn constant(m: Matrix) -> Self {
        let (rows, cols) = m.shape();
        Self::new(rows, cols, move |_| Ok(m.clone()))
    }

    pub fn constant_vector(v: Vector) -> Self {
        let n = v.len();
        Self::constant(Matrix::from_column_slice(n, 1, v.as_slice()))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Matrix::zeros(rows, cols))
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Arc::from(name);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn eval(&self, z: &Vector) -> Result<Matrix> {
        let m = (self.f)(z)?;
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::dims(
                &format!("field {}", self.name),
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteMatrix { name: self.name.to_string() });
        }
        Ok(m)
    }

    pub fn eval_vector(&self, z: &Vector) -> Result<Vector> {
        let m = self.eval(z)?;
        Ok(Vector::from_column_slice(m.as_slice()))
    }
}

/// Nonlinear part of a slow drift, `(z, y) ↦ ℝᵐ`, for models whose slow
/// equations are not affine in the fast state.
#[derive(Clone)]
pub struct SlowCoupling {
    f: Arc<CouplingFn>,
}

impl fmt::Debug for SlowCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SlowCoupling")
    }
}

impl SlowCoupling {
    pub fn new(f: impl Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn eval(&self, z: &Vector, y: &Vector) -> Result<Vector> {
        (self.f)(z, y)
    }
}

fn expect_dims(field: &MatrixField, rows: usize, cols: usize, what: &str) -> Result<()> {
    if field.dims() != (rows, cols) {
        return Err(Error::dims(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", field.dims().0, field.dims().1),
        ));
    }
    Ok(())
}

fn expect_len(v: &Vector, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::dims(what, n, v.len()));
    }
    Ok(())
}

/// Two-scale affine control system.
#[derive(Debug, Clone)]
pub struct TwoScaleSystem {
    pub a1: MatrixField,
    pub a2: MatrixField,
    pub b1: MatrixField,
    pub b2: MatrixField,
    pub c1: MatrixField,
    pub c2: MatrixField,
    pub omega_a: ControlBox,
    pub omega_b: ControlBox,
    epsilon: f64,
    extra_drift: Option<SlowCoupling>,
}

impl TwoScaleSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: MatrixField,
        a2: MatrixField,
        b1: MatrixField,
        b2: MatrixField,
        c1: MatrixField,
        c2: MatrixField,
        omega_a: ControlBox,
        omega_b: ControlBox,
        epsilon: f64,
    ) -> Result<Self> {
        let (m, n) = a1.dims();
        let p = omega_a.dim();
        let q = omega_b.dim();
        expect_dims(&a2, n, n, "A2")?;
        expect_dims(&b1, m, p, "B1")?;
        expect_dims(&b2, n, q, "B2")?;
        expect_dims(&c1, m, 1, "C1")?;
        expect_dims(&c2, n, 1, "C2")?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            a1: a1.named("A1"),
            a2: a2.named("A2"),
            b1: b1.named("B1"),
            b2: b2.named("B2"),
            c1: c1.named("C1"),
            c2: c2.named("C2"),
            omega_a,
            omega_b,
            epsilon,
            extra_drift: None,
        })
    }

    /// Adds a nonlinear `(z, y)`-dependent term to the slow drift.
    pub fn with_extra_drift(mut self, coupling: SlowCoupling) -> Self {
        self.extra_drift = Some(coupling);
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn extra_drift(&self) -> Option<&SlowCoupling> {
        self.extra_drift.as_ref()
    }

    pub fn is_affine(&self) -> bool {
        self.extra_drift.is_none()
    }

    pub(crate) fn require_affine(&self) -> Result<()> {
        if self.is_affine() {
            Ok(())
        } else {
            Err(Error::NonAffineSystem)
        }
    }

    /// Slow dimension `m`.
    pub fn m(&self) -> usize {
        self.a1.dims().0
    }

    /// Fast dimension `n`.
    pub fn n(&self) -> usize {
        self.a2.dims().0
    }

    /// Slow control dimension `p`.
    pub fn p(&self) -> usize {
        self.omega_a.dim()
    }

    /// Fast control dimension `q`.
    pub fn q(&self) -> usize {
        self.omega_b.dim()
    }

    /// Slow drift `A1 y + B1 α + C1` (plus the nonlinear term, if any).
    pub fn slow_drift(&self, z: &Vector, y: &Vector, alpha: &Vector) -> Result<Vector> {
        expect_len(z, self.m(), "slow state")?;
        expect_len(y, self.n(), "fast state")?;
        expect_len(alpha, self.p(), "alpha")?;
        let mut f = self.a1.eval(z)? * y + self.b1.eval(z)? * alpha + self.c1.eval_vector(z)?;
        if let Some(extra) = &self.extra_drift {
            let e = extra.eval(z, y)?;
            expect_len(&e, self.m(), "extra slow drift")?;
            f += e;
        }
        Ok(f)
    }

    /// Fast bracket `A2 y + B2 β + C2` (the fast drift times ε).
    pub fn fast_bracket(&self, z: &Vector, y: &Vector, beta: &Vector) -> Result<Vector> {
        expect_len(z, self.m(), "slow state")?;
        expect_len(y, self.n(), "fast state")?;
        expect_len(beta, self.q(), "beta")?;
        Ok(self.a2.eval(z)? * y + self.b2.eval(z)? * beta + self.c2.eval_vector(z)?)
    }
}

/// Three-scale affine control system: a two-scale (macro z, meso y) system plus
/// a micro state `x` relaxing on the `ε²` time scale.
#[derive(Debug, Clone)]
pub struct ThreeScaleSystem {
    pub two: TwoScaleSystem,
    pub a0: MatrixField,
    pub a3: MatrixField,
    pub b3: MatrixField,
    pub c3: MatrixField,
    pub omega_g: ControlBox,
}

impl ThreeScaleSystem {
    pub fn new(
        two: TwoScaleSystem,
        a0: MatrixField,
        a3: MatrixField,
        b3: MatrixField,
        c3: MatrixField,
        omega_g: ControlBox,
    ) -> Result<Self> {
        let m = two.m();
        let l = a3.dims().0;
        let r = omega_g.dim();
        expect_dims(&a0, m, l, "A0")?;
        expect_dims(&a3, l, l, "A3")?;
        expect_dims(&b3, l, r, "B3")?;
        expect_dims(&c3, l, 1, "C3")?;
        Ok(Self {
            two,
            a0: a0.named("A0"),
            a3: a3.named("A3"),
            b3: b3.named("B3"),
            c3: c3.named("C3"),
            omega_g,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut out = self.clone();
        out.two = self.two.with_epsilon(epsilon)?;
        Ok(out)
    }

    pub fn epsilon(&self) -> f64 {
        self.two.epsilon()
    }

    /// Micro dimension `ℓ`.
    pub fn l(&self) -> usize {
        self.a3.dims().0
    }

    /// Micro control dimension `r`.
    pub fn r(&self) -> usize {
        self.omega_g.dim()
    }

    /// Macro drift `A0 x + A1 y + B1 α + C1`.
    pub fn slow_drift(&self, z: &Vector, y: &Vector, x: &Vector, alpha: &Vector) -> Result<Vector> {
        expect_len(x, self.l(), "micro state")?;
        Ok(self.two.slow_drift(z, y, alpha)? + self.a0.eval(z)? * x)
    }

    /// Micro bracket `A3 x + B3 γ + C3` (the micro drift times ε²).
    pub fn micro_bracket(&self, z: &Vector, x: &Vector, gamma: &Vector) -> Result<Vector> {
        expect_len(x, self.l(), "micro state")?;
        expect_len(gamma, self.r(), "gamma")?;
        Ok(self.a3.eval(z)? * x + self.b3.eval(z)? * gamma + self.c3.eval_vector(z)?)
    }
}

/// Running cost `ℓ`, terminal cost `φ` and horizon `T` of a finite-horizon problem.
#[derive(Clone)]
pub struct CostSpec {
    running: Arc<ScalarFn>,
    terminal: Arc<ScalarFn>,
    pub horizon: f64,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostSpec(T = {})", self.horizon)
    }
}

impl CostSpec {
    pub fn new(
        running: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { running: Arc::new(running), terminal: Arc::new(terminal), horizon })
    }

    pub fn running(&self, z: &Vector) -> f64 {
        (self.running)(z)
    }

    pub fn terminal(&self, z: &Vector) -> f64 {
        (self.terminal)(z)
    }

    /// Same costs, different terminal cost.
    pub fn with_terminal(&self, terminal: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        Self { running: self.running.clone(), terminal: Arc::new(terminal), horizon: self.horizon }
    }
}

/// Outcome of [`validate_stability`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Largest real part of the spectrum of `A2(z)` at each sample.
    pub max_real_parts: Vec<f64>,
    pub margin: f64,
    pub passed: bool,
}

/// Largest real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteMatrix { name: "A2".into() });
    }
    let schur = Schur::try_new(a.clone(), 1e-14, 10_000).ok_or(Error::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Checks that every eigenvalue of `A2(z)` has real part `≤ -margin` at every sample.
pub fn validate_stability(sys: &TwoScaleSystem, samples: &[Vector], margin: f64) -> Result<StabilityReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("stability check needs at least one sample".into()));
    }
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let max_real_parts = samples
        .iter()
        .map(|z| spectral_abscissa(&sys.a2.eval(z)?))
        .collect::<Result<Vec<_>>>()?;
    let passed = max_real_parts.iter().all(|&re| re <= -margin);
    Ok(StabilityReport { max_real_parts, margin, passed })
}

/// Certified radius of a ball inside `{B2(z) β : β ∈ Ω_B}`, centred at the image of
/// the box midpoint: `σ_min(B2) · min half-width`, or 0 when `B2` is rank deficient.
pub fn validate_controllability(sys: &TwoScaleSystem, z: &Vector) -> Result<f64> {
    let b2 = sys.b2.eval(z)?;
    let (n, q) = (sys.n(), sys.q());
    if b2.shape() != (n, q) {
        return Err(Error::dims("B2", format!("{n}x{q}"), format!("{}x{}", b2.nrows(), b2.ncols())));
    }
    if q < n {
        return Ok(0.0);
    }
    let sv = b2.singular_values();
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    // the n largest singular values span the image; rank n needs all of them nonzero
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let s_min = sorted[n - 1];
    let tol = f64::EPSILON * (n.max(q) as f64) * s_max;
    if s_max == 0.0 || s_min <= tol {
        return Ok(0.0);
    }
    let half = sys.omega_b.half_widths().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(s_min * half)
}

/// Full two-scale Hamiltonian
/// `-(A1 y + C1)·p + sup_α{-p·B1 α} - (A2 y + C2)·q + sup_β{-q·B2 β}`.
pub fn hamiltonian_full(sys: &TwoScaleSystem, z: &Vector, y: &Vector, p: &Vector, q: &Vector) -> Result<f64> {
    sys.require_affine()?;
    expect_len(z, sys.m(), "slow state")?;
    expect_len(y, sys.n(), "fast state")?;
    expect_len(p, sys.m(), "slow costate")?;
    expect_len(q, sys.n(), "fast costate")?;
    let slow = -(sys.a1.eval(z)? * y + sys.c1.eval_vector(z)?).dot(p)
        + box_sup(&(sys.b1.eval(z)?.transpose() * p), &sys.omega_a)?.0;
    let fast = -(sys.a2.eval(z)? * y + sys.c2.eval_vector(z)?).dot(q)
        + box_sup(&(sys.b2.eval(z)?.transpose() * q), &sys.omega_b)?.0;
    Ok(slow + fast)
}

/// Three-scale Hamiltonian `H1 + H2 + H3` (macro, meso and micro contributions).
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_three_scale(
    sys: &ThreeScaleSystem,
    z: &Vector,
    y: &Vector,
    x: &Vector,
    p: &Vector,
    q: &Vector,
    r: &Vector,
) -> Result<f64> {
    expect_len(x, sys.l(), "micro state")?;
    expect_len(r, sys.l(), "micro costate")?;
    let two_scale = hamiltonian_full(&sys.two, z, y, p, q)?;
    let macro_micro = -(sys.a0.eval(z)? * x).dot(p);
    let micro = -(sys.a3.eval(z)? * x + sys.c3.eval_vector(z)?).dot(r)
        + box_sup(&(sys.b3.eval(z)?.transpose() * r), &sys.omega_g)?.0;
    Ok(two_scale + macro_micro + micro)
}
