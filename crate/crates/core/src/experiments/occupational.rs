use super::config::ExperimentConfig;
use super::table::Table;
use super::{ExperimentError, RunOptions};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::reduction::static_map;
use crate::system::{spectral_abscissa, TwoScaleSystem};

/// Normalized time spent by the frozen-z fast flow in each bin of a box.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationalHistogram {
    pub lower: Vector,
    pub upper: Vector,
    /// Bins per axis.
    pub bins: usize,
    /// Mass per bin, last axis fastest; sums to 1.
    pub mass: Vec<f64>,
    pub z: Vector,
    pub beta: Vector,
    pub horizon: f64,
    /// `ψ(z, β)`.
    pub equilibrium: Vector,
    pub samples: usize,
}

impl OccupationalHistogram {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        (self.upper[k] - self.lower[k]) / self.bins as f64
    }

    /// Bin multi-index of `y`, or `None` outside the box.
    pub fn bin_of(&self, y: &Vector) -> Option<Vec<usize>> {
        (0..self.dim())
            .map(|k| {
                if !(y[k] >= self.lower[k] && y[k] <= self.upper[k]) {
                    return None;
                }
                Some((((y[k] - self.lower[k]) / self.width(k)) as usize).min(self.bins - 1))
            })
            .collect()
    }

    fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.bins + i)
    }

    fn multi(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = i % self.bins;
            i /= self.bins;
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass of the bins within `radius` bins (per axis) of the equilibrium bin.
    pub fn mass_near(&self, radius: usize) -> f64 {
        let Some(centre) = self.bin_of(&self.equilibrium) else {
            return 0.0;
        };
        (0..self.mass.len())
            .filter(|&i| self.multi(i).iter().zip(&centre).all(|(&a, &c)| a.abs_diff(c) <= radius))
            .map(|i| self.mass[i])
            .sum()
    }

    /// One row per bin: indices, bin centre, mass.
    pub fn to_table(&self) -> Table {
        let n = self.dim();
        let mut header: Vec<String> = (0..n).map(|k| format!("bin_{k}")).collect();
        header.extend((0..n).map(|k| format!("y_{k}")));
        header.push("mass".into());
        let mut t = Table::new(header);
        for (i, &m) in self.mass.iter().enumerate() {
            let mi = self.multi(i);
            let mut row: Vec<Option<f64>> = mi.iter().map(|&j| Some(j as f64)).collect();
            row.extend((0..n).map(|k| Some(self.lower[k] + (mi[k] as f64 + 0.5) * self.width(k))));
            row.push(Some(m));
            t.push(row);
        }
        t
    }
}

/// Occupational measure of `ẏ = A2(z̄) y + B2(z̄) β̄ + C2(z̄)` (fast time, ε = 1) over
/// `[0, horizon]`, sampled at the midpoints of `steps` equal sub-intervals.
#[allow(clippy::too_many_arguments)]
pub fn estimate_occupational_measure(
    sys: &TwoScaleSystem,
    z: &Vector,
    beta: &Vector,
    y0: &Vector,
    horizon: f64,
    bins: usize,
    lower: &Vector,
    upper: &Vector,
    steps: usize,
) -> Result<OccupationalHistogram> {
    let n = sys.n();
    if y0.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::dims("fast box", n, format!("{}, {} and {}", y0.len(), lower.len(), upper.len())));
    }
    if bins == 0 || steps == 0 || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument("need bins, steps and a positive horizon".into()));
    }
    if (0..n).any(|k| !(lower[k] < upper[k])) {
        return Err(Error::InvalidArgument("empty histogram box".into()));
    }
    if !sys.omega_b.contains(beta) {
        return Err(Error::InvalidArgument("beta lies outside its box".into()));
    }
    let a = sys.a2.eval(z)?;
    let psi = static_map(sys, z)?.eval(beta);
    let dt = horizon / steps as f64;
    let step = (&a * dt).exp();
    let half = (&a * (0.5 * dt)).exp();

    let mut hist = OccupationalHistogram {
        lower: lower.clone(),
        upper: upper.clone(),
        bins,
        mass: vec![0.0; bins.pow(n as u32)],
        z: z.clone(),
        beta: beta.clone(),
        horizon,
        equilibrium: psi.clone(),
        samples: steps,
    };
    let mut counts = vec![0u64; hist.mass.len()];
    let mut dev: Vector = y0 - &psi;
    if hist.bin_of(y0).is_none() {
        return Err(Error::BoundsExceeded { time: 0.0 });
    }
    for k in 0..steps {
        let y = &psi + &half * &dev;
        match hist.bin_of(&y) {
            Some(mi) => counts[hist.flat(&mi)] += 1,
            None => return Err(Error::BoundsExceeded { time: (k as f64 + 0.5) * dt }),
        }
        dev = &step * dev;
    }
    for (m, c) in hist.mass.iter_mut().zip(&counts) {
        *m = *c as f64 / steps as f64;
    }
    Ok(hist)
}

/// Occupational measure as configured, with its histogram and concentration summary.
pub fn run_occupational(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<(OccupationalHistogram, Table), ExperimentError> {
    let spec = cfg.occupational.clone().unwrap_or_default();
    let setup = cfg.setup()?;
    let sys = setup.system.two();
    let n = sys.n();
    let cfg_vec = |v: &Option<Vec<f64>>, len: usize, fallback: Vector, what: &str| match v {
        None => Ok(fallback),
        Some(v) if v.len() == len => Ok(Vector::from_row_slice(v)),
        Some(v) => Err(ExperimentError::Config(format!("{what} has {} entries, expected {len}", v.len()))),
    };
    let z = cfg_vec(&spec.z, sys.m(), setup.scenario.z0.clone(), "z")?;
    let beta = cfg_vec(&spec.beta, sys.q(), sys.omega_b.midpoint(), "beta")?;
    let psi = static_map(sys, &z)?.eval(&beta);
    let y0 = cfg_vec(&spec.y0, n, psi.clone(), "y0")?;
    let bins = spec.bins.unwrap_or(50);
    let cells = (bins as f64).powi(n as i32);
    if cells > opts.budget as f64 {
        return Err(Error::GridTooLarge { nodes: cells.min(usize::MAX as f64) as usize, budget: opts.budget }.into());
    }

    let abscissa = spectral_abscissa(&sys.a2.eval(&z)?)?;
    if !(abscissa < 0.0) {
        return Err(Error::InvalidArgument(format!("fast block is not stable (abscissa {abscissa})")).into());
    }
    let decay_times = spec.decay_times.unwrap_or(100.0);
    let horizon = decay_times / -abscissa;
    let steps = ((spec.steps_per_decay.unwrap_or(1000) as f64) * decay_times).ceil() as usize;

    // Default box: centred on ψ with ψ at a bin centre, ten start distances wide.
    let dist = (&y0 - &psi).amax();
    let half = if dist > 0.0 { 10.0 * dist } else { 1.0 };
    let shift = half / bins as f64;
    let lower = cfg_vec(&spec.lower, n, psi.map(|p| p - half + shift), "lower")?;
    let upper = cfg_vec(&spec.upper, n, psi.map(|p| p + half + shift), "upper")?;

    let hist = estimate_occupational_measure(sys, &z, &beta, &y0, horizon, bins, &lower, &upper, steps)?;
    let mut summary = Table::new(["radius_bins", "mass", "horizon", "samples"].map(String::from).to_vec());
    let radius = spec.radius_bins.unwrap_or(1);
    let mut radii: Vec<usize> = (0..=3).collect();
    if !radii.contains(&radius) {
        radii.push(radius);
    }
    for r in radii {
        summary.push(vec![Some(r as f64), Some(hist.mass_near(r)), Some(horizon), Some(steps as f64)]);
    }
    Ok((hist, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::system::{ControlBox, MatrixField};

    fn planar() -> TwoScaleSystem {
        TwoScaleSystem::new(
            MatrixField::zeros(1, 2),
            MatrixField::constant(Matrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0])),
            MatrixField::zeros(1, 1),
            MatrixField::constant(Matrix::identity(2, 2)),
            MatrixField::zeros(1, 1),
            MatrixField::vector(2, |z| Ok(Vector::from_row_slice(&[z[0], -z[0]]))),
            ControlBox::symmetric(1, 1.0).unwrap(),
            ControlBox::symmetric(2, 1.0).unwrap(),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn start_at_equilibrium_is_a_dirac() {
        let sys = planar();
        let z = Vector::from_element(1, 0.2);
        let beta = Vector::from_row_slice(&[0.5, -0.5]);
        let psi = static_map(&sys, &z).unwrap().eval(&beta);
        let lo = psi.map(|p| p - 1.01);
        let hi = psi.map(|p| p + 0.99);
        let h = estimate_occupational_measure(&sys, &z, &beta, &psi, 100.0, 50, &lo, &hi, 10_000).unwrap();
        assert!((h.total() - 1.0).abs() <= 1e-12);
        assert!((h.mass_near(0) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn far_start_concentrates() {
        let sys = planar();
        let z = Vector::from_element(1, 0.2);
        let beta = Vector::from_row_slice(&[0.5, -0.5]);
        let psi = static_map(&sys, &z).unwrap().eval(&beta);
        let y0 = &psi + Vector::from_row_slice(&[1.0, -1.0]);
        // slowest decay rate is 1, so T = 100 decay times
        let lo = psi.map(|p| p - 9.8);
        let hi = psi.map(|p| p + 10.2);
        let h = estimate_occupational_measure(&sys, &z, &beta, &y0, 100.0, 50, &lo, &hi, 100_000).unwrap();
        assert!((h.total() - 1.0).abs() <= 1e-12);
        assert!(h.mass_near(1) >= 0.99, "{}", h.mass_near(1));
        assert!(h.mass_near(1) < 1.0);
    }

    #[test]
    fn leaving_the_box_is_an_error() {
        let sys = planar();
        let z = Vector::zeros(1);
        let beta = Vector::zeros(2);
        let lo = Vector::from_element(2, -0.5);
        let hi = Vector::from_element(2, 0.5);
        let err = estimate_occupational_measure(&sys, &z, &beta, &Vector::from_element(2, 0.9), 1.0, 10, &lo, &hi, 100).unwrap_err();
        assert_eq!(err, Error::BoundsExceeded { time: 0.0 });
        let beta = Vector::from_element(2, 1.0);
        let err = estimate_occupational_measure(&sys, &z, &beta, &Vector::zeros(2), 10.0, 10, &lo, &hi, 100).unwrap_err();
        assert!(matches!(err, Error::BoundsExceeded { time } if time > 0.0));
    }
}
