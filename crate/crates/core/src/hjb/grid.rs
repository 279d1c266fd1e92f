use std::io::Write;

use crate::error::{Error, Result};
use crate::integrator::fmt_f64;
use crate::linalg::Vector;

/// One axis of a tensor grid: `nodes` equispaced points on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidArgument(format!("an axis needs at least 3 nodes, got {nodes}")));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidArgument(format!("bad axis bounds [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    /// Left cell index and local coordinate in `[0, 1]` of `x`, clamped to the axis
    /// or wrapped periodically with period `upper - lower`.
    fn locate(&self, x: f64, wrap: bool) -> (usize, f64) {
        let len = self.upper - self.lower;
        let x = if wrap {
            self.lower + (x - self.lower).rem_euclid(len)
        } else {
            x.clamp(self.lower, self.upper)
        };
        let mut s = (x - self.lower) / self.spacing();
        // snap feet that sit on a node up to rounding
        if (s - s.round()).abs() <= 1e-10 {
            s = s.round();
        }
        let i = (s.floor().max(0.0) as usize).min(self.nodes - 2);
        (i, (s - i as f64).clamp(0.0, 1.0))
    }
}

/// Tensor-product grid, last axis fastest in the flat node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        Ok(Self { axes, strides })
    }

    pub fn uniform(lower: &[f64], upper: &[f64], nodes: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != nodes.len() {
            return Err(Error::dims("grid bounds", lower.len(), format!("{} and {}", upper.len(), nodes.len())));
        }
        let axes = (0..lower.len()).map(|k| Axis::new(lower[k], upper[k], nodes[k])).collect::<Result<Vec<_>>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.strides[0] * self.axes[0].nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node count of a would-be product grid, without building it.
    pub fn count(nodes: &[usize]) -> usize {
        nodes.iter().product()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in 0..self.dim() {
            out[k] = i / self.strides[k];
            i %= self.strides[k];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, i: usize) -> Vector {
        let mi = self.multi_index(i);
        Vector::from_iterator(self.dim(), mi.iter().zip(&self.axes).map(|(&j, a)| a.coord(j)))
    }

    pub fn nodes(&self) -> Vec<Vector> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn product(&self, other: &Grid) -> Grid {
        let axes = self.axes.iter().chain(&other.axes).copied().collect();
        Grid::new(axes).expect("non-empty")
    }

    /// Axes `start..start + len` as a grid of their own.
    pub fn sub(&self, start: usize, len: usize) -> Result<Grid> {
        if len == 0 || start + len > self.dim() {
            return Err(Error::GridMismatch(format!("axes {start}..{} of a {}-axis grid", start + len, self.dim())));
        }
        Grid::new(self.axes[start..start + len].to_vec())
    }

    pub fn sample(&self, f: impl Fn(&Vector) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.node(i))).collect()
    }

    /// Multilinear stencil of `x`: `2^dim` (node, weight) pairs written into `out`.
    /// `wrap[k]` selects periodic wrap-around on axis `k`; otherwise `x` is clamped.
    pub fn stencil_into(&self, x: &[f64], wrap: &[bool], idx: &mut [u32], w: &mut [f64]) {
        let d = self.dim();
        let mut base = 0;
        let mut fr = vec![0.0; d];
        for k in 0..d {
            let (i, t) = self.axes[k].locate(x[k], wrap.get(k).copied().unwrap_or(false));
            base += i * self.strides[k];
            fr[k] = t;
        }
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut at = base;
            for k in 0..d {
                if corner >> (d - 1 - k) & 1 == 1 {
                    weight *= fr[k];
                    at += self.strides[k];
                } else {
                    weight *= 1.0 - fr[k];
                }
            }
            idx[corner] = at as u32;
            w[corner] = weight;
        }
    }

    /// Multilinear interpolation of nodal `values` at `x` with constant extrapolation.
    pub fn interpolate(&self, values: &[f64], x: &Vector) -> f64 {
        self.interpolate_wrapped(values, x, &[])
    }

    pub fn interpolate_wrapped(&self, values: &[f64], x: &Vector, wrap: &[bool]) -> f64 {
        let n = 1usize << self.dim();
        let mut idx = vec![0u32; n];
        let mut w = vec![0.0; n];
        self.stencil_into(x.as_slice(), wrap, &mut idx, &mut w);
        idx.iter().zip(&w).map(|(&i, &w)| w * values[i as usize]).sum()
    }

    /// Index of the node nearest to `x` (clamped).
    pub fn nearest(&self, x: &Vector) -> usize {
        let multi: Vec<usize> = self
            .axes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let s = ((x[k] - a.lower) / a.spacing()).round();
                s.clamp(0.0, (a.nodes - 1) as f64) as usize
            })
            .collect();
        self.flat_index(&multi)
    }
}

/// Value function on a grid, recorded at a subset of the time slices.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValueFunction {
    pub grid: Grid,
    /// Times of the recorded slices, starting at 0.
    pub times: Vec<f64>,
    /// One nodal array per recorded slice.
    pub values: Vec<Vec<f64>>,
    /// Time step of the march.
    pub step: f64,
}

impl GridValueFunction {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("at least the terminal slice")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("at least the terminal slice")
    }

    /// Interpolated value at `x` in the last slice.
    pub fn eval_final(&self, x: &Vector) -> f64 {
        self.grid.interpolate(self.final_values(), x)
    }

    /// The same values on `self.grid × fast`, constant along the fast axes.
    pub fn broadcast(&self, fast: &Grid) -> GridValueFunction {
        let n = fast.len();
        GridValueFunction {
            grid: self.grid.product(fast),
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.iter().flat_map(|&x| std::iter::repeat_n(x, n)).collect()).collect(),
            step: self.step,
        }
    }

    /// CSV: `slice,x0,..,value`, one row per node and recorded slice.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["slice".to_string(), "time".to_string()];
        header.extend((0..self.grid.dim()).map(|k| format!("x{k}")));
        header.push("value".into());
        w.write_record(&header)?;
        let nodes = self.grid.nodes();
        for (s, (t, vals)) in self.times.iter().zip(&self.values).enumerate() {
            for (node, v) in nodes.iter().zip(vals) {
                let mut row = vec![s.to_string(), fmt_f64(*t)];
                row.extend(node.iter().map(|x| fmt_f64(*x)));
                row.push(fmt_f64(*v));
                w.write_record(&row)?;
            }
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indexing_round_trips() {
        let g = Grid::uniform(&[0.0, -1.0, 2.0], &[1.0, 1.0, 3.0], &[3, 4, 5]).unwrap();
        assert_eq!(g.len(), 60);
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.node(59), Vector::from_row_slice(&[1.0, 1.0, 3.0]));
        assert_eq!(g.node(1), Vector::from_row_slice(&[0.0, -1.0, 2.25]));
        assert_eq!(g.nearest(&Vector::from_row_slice(&[0.6, 5.0, 1.0])), g.flat_index(&[1, 3, 0]));
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Axis::new(0.0, 1.0, 2).is_err());
        assert!(Axis::new(1.0, 1.0, 5).is_err());
        assert!(Grid::uniform(&[0.0], &[1.0, 2.0], &[3]).is_err());
    }

    #[test]
    fn clamps_and_wraps() {
        let g = Grid::uniform(&[0.0], &[2.0], &[3]).unwrap();
        let v = [0.0, 1.0, 4.0];
        assert_eq!(g.interpolate(&v, &Vector::from_element(1, -3.0)), 0.0);
        assert_eq!(g.interpolate(&v, &Vector::from_element(1, 9.0)), 4.0);
        assert_eq!(g.interpolate(&v, &Vector::from_element(1, 1.5)), 2.5);
        // 2.5 wraps to 0.5
        assert_eq!(g.interpolate_wrapped(&v, &Vector::from_element(1, 2.5), &[true]), 0.5);
    }

    proptest! {
        #[test]
        fn reproduces_multilinear_functions(x in -1.5f64..1.5, y in -0.5f64..2.5, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -1.0f64..1.0) {
            let g = Grid::uniform(&[-1.0, 0.0], &[1.0, 2.0], &[5, 7]).unwrap();
            let f = |p: &Vector| a * p[0] + b * p[1] + c * p[0] * p[1];
            let vals = g.sample(f);
            let p = Vector::from_row_slice(&[x.clamp(-1.0, 1.0), y.clamp(0.0, 2.0)]);
            let got = g.interpolate(&vals, &Vector::from_row_slice(&[x, y]));
            prop_assert!((got - f(&p)).abs() < 1e-12);
        }

        #[test]
        fn stencil_weights_are_a_partition_of_unity(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            let g = Grid::uniform(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0], &[4, 5, 6]).unwrap();
            let mut idx = [0u32; 8];
            let mut w = [0.0; 8];
            g.stencil_into(&[x, y, z], &[false, true, false], &mut idx, &mut w);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&w| w >= 0.0));
            prop_assert!(idx.iter().all(|&i| (i as usize) < g.len()));
        }
    }
}
