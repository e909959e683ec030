//! Periodic grid fields on the torus `[0, 2π)^d`.
//!
//! Conventions used throughout the crate:
//!
//! * The grid has `n` points per axis, spacing `h = 2π/n`, node `j` at `x = j h`.
//!   Values are stored row-major with the last axis fastest.
//! * The L² inner product carries the quadrature weight: `⟨f, g⟩ = h^d Σ_j f_j g_j`.
//! * Spectral coefficients `c_k` satisfy `f(x_j) = Σ_k c_k e^{i k·x_j}` for integer
//!   wavevectors `k` with components in `(-n/2, n/2]`, i.e. `c_k = n^{-d} Σ_j f_j e^{-i k·x_j}`.
//!   The L²-orthonormal coefficient of `e^{ik·x}/(2π)^{d/2}` is `(2π)^{d/2} c_k`, so
//!   `‖f‖²_{L²} = (2π)^d Σ_k |c_k|²` (Parseval) and
//!   `‖f‖²_{H¹} = (2π)^d Σ_k (1 + |k|²) |c_k|²`.

mod io;
mod spectral;

use std::f64::consts::PI;

pub use io::{field_read, field_write, read_field_from, write_field_to, FIELD_MAGIC, FIELD_VERSION};
pub use spectral::{dft_forward, dft_inverse, Dft, DftWorkspace, RealDft, RealDftWorkspace, SpectralField};

use crate::error::{CoreError, Result};

/// Upper bound on the number of point pairs visited by [`holder_seminorm_estimate`].
pub const HOLDER_MAX_PAIRS: usize = 1_000_000;

/// Uniform periodic grid with `n` points on each of `d` axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    d: usize,
    n: usize,
}

impl GridSpec {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(CoreError::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "points per axis {n} must be a power of two >= 8"
            )));
        }
        Ok(Self { d, n })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^d`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Quadrature weight of one node, `h^d`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Flat-index stride of `axis` (last axis has stride 1).
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    /// Per-axis node indices of a flat index; unused axes are zero.
    #[inline]
    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.d).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx[..self.d].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Coordinates of node `flat`; unused axes are zero.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let h = self.spacing();
        let idx = self.multi_index(flat);
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
    }

    /// Flat index of the neighbour one step forward along `axis`, with wrap-around.
    #[inline]
    pub fn shift_forward(&self, flat: usize, axis: usize) -> usize {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.n;
        if i + 1 == self.n {
            flat + stride - self.n * stride
        } else {
            flat + stride
        }
    }

    /// Signed integer frequency of FFT index `i` on this grid, in `(-n/2, n/2]`.
    #[inline]
    pub fn frequency(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i > n / 2 {
            i - n
        } else {
            i
        }
    }

    /// FFT index of integer frequency `k` (reduced modulo `n`).
    #[inline]
    pub fn frequency_index(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }
}

/// Real-valued field sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::InvalidArgument(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without checking finiteness; lengths must agree.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    /// Samples `f` at every node; the closure receives the first `d` coordinates.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|j| {
                let x = grid.coords(j);
                f(&x[..d])
            })
            .collect();
        Self::from_raw(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn check_grid(&self, other: GridSpec) -> Result<()> {
        if self.grid != other {
            return Err(CoreError::GridMismatch {
                expected_d: other.dim(),
                expected_n: other.points_per_axis(),
                got_d: self.grid.dim(),
                got_n: self.grid.points_per_axis(),
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `⟨self, other⟩ = h^d Σ self_j other_j`.
    pub fn inner(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.cell_volume() * dot(&self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Spectral H¹ norm, `sqrt((2π)^d Σ_k (1+|k|²)|c_k|²)`.
    pub fn h1_norm(&self) -> f64 {
        dft_forward(self).h1_norm()
    }

    /// Subtracts the grid mean. Idempotent linear projection onto mean-zero fields.
    pub fn zero_mean_project(&self) -> Field {
        let mut out = self.clone();
        out.remove_mean();
        out
    }

    pub(crate) fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Self::from_raw(self.grid, self.values.iter().map(|v| alpha * v).collect())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Field) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect(),
        )
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add_scaled(-1.0, other)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sup_norm(f: &Field) -> f64 {
    f.sup_norm()
}

pub fn l2_norm(f: &Field) -> f64 {
    f.l2_norm()
}

pub fn h1_norm(f: &Field) -> f64 {
    f.h1_norm()
}

pub fn zero_mean_project(f: &Field) -> Field {
    f.zero_mean_project()
}

/// Torus distance between nodes along one axis, in grid steps.
#[inline]
fn wrapped_steps(a: usize, b: usize, n: usize) -> usize {
    let diff = a.abs_diff(b);
    diff.min(n - diff)
}

/// Per-axis offsets (in grid steps) used by the Hölder estimator: every step
/// up to 4, then roughly geometric up to `n/2`.
fn holder_offsets(n: usize) -> Vec<usize> {
    let half = n / 2;
    let mut offs: Vec<usize> = (0..=4.min(half)).collect();
    let mut o = 4.0f64;
    loop {
        o *= 1.4;
        let k = o.round() as usize;
        if k >= half {
            break;
        }
        if *offs.last().unwrap() != k {
            offs.push(k);
        }
    }
    if *offs.last().unwrap() != half {
        offs.push(half);
    }
    offs
}

/// Grid estimate of the Hölder seminorm `sup |f(x) - f(y)| / dist(x, y)^t`.
///
/// Distances use the torus metric. When the grid has at most
/// [`HOLDER_MAX_PAIRS`] point pairs all of them are visited; otherwise every
/// `stride`-th base point is paired with a fixed set of displacements
/// (all nearby ones plus a geometric ladder out to `n/2` per axis).
pub fn holder_seminorm_estimate(f: &Field, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(CoreError::InvalidArgument(format!("Hölder exponent {t} not in (0, 1]")));
    }
    let grid = f.grid();
    let (d, n, h) = (grid.dim(), grid.points_per_axis(), grid.spacing());
    let total = grid.len();
    let vals = f.values();
    let mut best = 0.0f64;

    let mut visit = |a: usize, b: usize| {
        let ia = grid.multi_index(a);
        let ib = grid.multi_index(b);
        let dist2: f64 = (0..d)
            .map(|ax| {
                let s = wrapped_steps(ia[ax], ib[ax], n) as f64 * h;
                s * s
            })
            .sum();
        if dist2 > 0.0 {
            let q = (vals[a] - vals[b]).abs() / dist2.sqrt().powf(t);
            if q > best {
                best = q;
            }
        }
    };

    if total * (total - 1) / 2 <= HOLDER_MAX_PAIRS {
        for a in 0..total {
            for b in a + 1..total {
                visit(a, b);
            }
        }
        return Ok(best);
    }

    // Signed displacements with each component in ±offsets, one of each ±δ pair.
    let offs = holder_offsets(n);
    let mut signed: Vec<i64> = offs.iter().map(|&o| o as i64).collect();
    signed.extend(offs.iter().filter(|&&o| o > 0 && o < n / 2).map(|&o| -(o as i64)));
    let mut displacements: Vec<[i64; 3]> = Vec::new();
    let mut cur = [0i64; 3];
    fn rec(axis: usize, d: usize, signed: &[i64], cur: &mut [i64; 3], out: &mut Vec<[i64; 3]>) {
        if axis == d {
            // keep the lexicographically positive representative
            if let Some(first) = cur[..d].iter().find(|&&c| c != 0) {
                if *first > 0 {
                    out.push(*cur);
                }
            }
            return;
        }
        for &s in signed {
            cur[axis] = s;
            rec(axis + 1, d, signed, cur, out);
        }
        cur[axis] = 0;
    }
    rec(0, d, &signed, &mut cur, &mut displacements);

    let per_base = displacements.len().max(1);
    let max_bases = (HOLDER_MAX_PAIRS / per_base).max(1);
    let stride = total.div_ceil(max_bases);
    // Odd stride relative to n keeps base points spread over all axes.
    let stride = if stride > 1 && stride.is_multiple_of(2) { stride + 1 } else { stride };
    let mut a = 0;
    while a < total {
        let ia = grid.multi_index(a);
        for disp in &displacements {
            let mut ib = [0usize; 3];
            for ax in 0..d {
                ib[ax] = (ia[ax] as i64 + disp[ax]).rem_euclid(n as i64) as usize;
            }
            visit(a, grid.flat_index(&ib));
        }
        a += stride;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(0, 16).is_err());
        assert!(GridSpec::new(4, 16).is_err());
        assert!(GridSpec::new(2, 4).is_err());
        assert!(GridSpec::new(2, 24).is_err());
        let g = grid(3, 8);
        assert_eq!(g.len(), 512);
        assert_eq!(g.flat_index(&g.multi_index(317)), 317);
    }

    #[test]
    fn shift_forward_wraps() {
        let g = grid(2, 8);
        assert_eq!(g.shift_forward(g.flat_index(&[7, 3]), 0), g.flat_index(&[0, 3]));
        assert_eq!(g.shift_forward(g.flat_index(&[2, 7]), 1), g.flat_index(&[2, 0]));
        assert_eq!(g.shift_forward(g.flat_index(&[2, 5]), 1), g.flat_index(&[2, 6]));
    }

    #[test]
    fn constant_field_norms() {
        let g = grid(2, 16);
        let f = Field::constant(g, 5.0);
        assert_eq!(f.sup_norm(), 5.0);
        let expect = 5.0 * (2.0 * PI);
        assert!((f.l2_norm() - expect).abs() < 1e-12);
        assert!((f.h1_norm() - expect).abs() < 1e-12);
        assert!(f.zero_mean_project().sup_norm() < 1e-14);
    }

    #[test]
    fn cosine_h1_norm_is_sqrt_two_pi() {
        let f = Field::from_fn(grid(1, 32), |x| x[0].cos());
        assert!((f.h1_norm() - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((f.l2_norm() - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_projection_cases() {
        let g = grid(1, 32);
        let f = Field::from_fn(g, |x| x[0].cos());
        let p = f.zero_mean_project();
        assert!(f.sub(&p).sup_norm() < 1e-14);
        let f = Field::from_fn(g, |x| 1.0 + x[0].cos());
        assert!((f.zero_mean_project().sup_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn holder_rejects_bad_exponent() {
        let f = Field::zeros(grid(1, 16));
        assert!(holder_seminorm_estimate(&f, 0.0).is_err());
        assert!(holder_seminorm_estimate(&f, 1.5).is_err());
        assert_eq!(holder_seminorm_estimate(&f, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn holder_cosine_lipschitz_constant() {
        for &(d, n) in &[(1, 64), (1, 256), (2, 64), (2, 128)] {
            let f = Field::from_fn(grid(d, n), |x| x[0].cos());
            let est = holder_seminorm_estimate(&f, 1.0).unwrap();
            assert!((0.9..=1.1).contains(&est), "d={d} n={n} est={est}");
        }
    }

    #[test]
    fn holder_homogeneous_and_monotone() {
        let g = grid(2, 128);
        let f = Field::from_fn(g, |x| (x[0] + 2.0 * x[1]).sin() + 0.3 * (3.0 * x[0]).cos());
        let base = holder_seminorm_estimate(&f, 0.5).unwrap();
        let doubled = holder_seminorm_estimate(&f.scaled(2.0), 0.5).unwrap();
        assert_eq!(doubled, 2.0 * base);
        let tripled = holder_seminorm_estimate(&f.scaled(3.0), 0.5).unwrap();
        assert!((tripled - 3.0 * base).abs() <= 1e-12 * tripled);
        assert!(tripled >= base);
    }

    #[test]
    fn holder_offsets_cover_neighbours() {
        let offs = holder_offsets(128);
        assert_eq!(&offs[..5], &[0, 1, 2, 3, 4]);
        assert_eq!(*offs.last().unwrap(), 64);
        assert!(offs.windows(2).all(|w| w[0] < w[1]));
    }
}
