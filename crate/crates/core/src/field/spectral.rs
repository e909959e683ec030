use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use super::{Field, GridSpec};

/// Fourier coefficients `c_k` of a real field, stored in FFT index order
/// (index `i` on an axis is frequency `i` for `i <= n/2`, `i - n` otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len(), "coefficient count must equal n^d");
        Self { grid, coeffs }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::new(grid, vec![Complex64::new(0.0, 0.0); grid.len()])
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Signed wavevector of storage index `flat`; unused axes are zero.
    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        wavevector(self.grid, flat)
    }

    /// Storage index of wavevector `k` (components reduced modulo `n`).
    pub fn index_of(&self, k: &[i64]) -> usize {
        let g = self.grid;
        (0..g.dim()).fold(0, |acc, ax| acc * g.points_per_axis() + g.frequency_index(k[ax]))
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.coeffs[self.index_of(k)]
    }

    pub fn set_coefficient(&mut self, k: &[i64], c: Complex64) {
        let i = self.index_of(k);
        self.coeffs[i] = c;
    }

    /// `(2π)^d Σ_k w(k) |c_k|²`, the quadratic form behind the L² and H¹ norms.
    fn weighted_energy(&self, weight: impl Fn(i64) -> f64) -> f64 {
        let vol = (2.0 * PI).powi(self.grid.dim() as i32);
        let sum: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| weight(norm_sq(&self.wavevector(i))) * c.norm_sqr())
            .sum();
        vol * sum
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_energy(|_| 1.0).sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        self.weighted_energy(|k2| 1.0 + k2 as f64).sqrt()
    }
}

#[inline]
pub(crate) fn wavevector(grid: GridSpec, flat: usize) -> [i64; 3] {
    let idx = grid.multi_index(flat);
    let mut k = [0i64; 3];
    for ax in 0..grid.dim() {
        k[ax] = grid.frequency(idx[ax]);
    }
    k
}

#[inline]
pub(crate) fn norm_sq(k: &[i64; 3]) -> i64 {
    k.iter().map(|c| c * c).sum()
}

/// Reusable multi-dimensional FFT plans for one grid.
///
/// Plans are immutable and shareable across threads; every call allocates
/// its own scratch space.
#[derive(Clone)]
pub struct Dft {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("grid", &self.grid).finish()
    }
}

impl Dft {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn forward(&self, f: &Field) -> SpectralField {
        debug_assert_eq!(f.grid(), self.grid);
        let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        SpectralField::new(self.grid, buf)
    }

    pub fn inverse(&self, s: &SpectralField) -> Field {
        debug_assert_eq!(s.grid(), self.grid);
        let mut buf = s.coefficients().to_vec();
        self.inverse_in_place(&mut buf);
        Field::from_raw(self.grid, buf.iter().map(|c| c.re).collect())
    }

    /// Unnormalised sums `Σ_j x_j e^{-ik·x_j}` followed by division by `n^d`,
    /// so the buffer ends up holding the coefficients `c_k`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        let mut ws = self.workspace();
        self.forward_with(buf, &mut ws);
    }

    /// Evaluates `Σ_k c_k e^{ik·x_j}` at every node.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let mut ws = self.workspace();
        self.inverse_with(buf, &mut ws);
    }

    pub fn workspace(&self) -> DftWorkspace {
        let zero = Complex64::new(0.0, 0.0);
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        DftWorkspace {
            scratch: vec![zero; scratch_len],
            lines: if self.grid.dim() > 1 {
                vec![zero; self.grid.len()]
            } else {
                Vec::new()
            },
        }
    }

    pub fn forward_with(&self, buf: &mut [Complex64], ws: &mut DftWorkspace) {
        self.forward_unscaled_with(buf, ws);
        let scale = 1.0 / self.grid.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    /// Forward transform without the `n^{-d}` normalisation.
    pub fn forward_unscaled_with(&self, buf: &mut [Complex64], ws: &mut DftWorkspace) {
        self.transform(buf, &self.forward, ws);
    }

    pub fn inverse_with(&self, buf: &mut [Complex64], ws: &mut DftWorkspace) {
        self.transform(buf, &self.inverse, ws);
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, ws: &mut DftWorkspace) {
        let g = self.grid;
        let n = g.points_per_axis();
        let total = g.len();
        assert_eq!(buf.len(), total);
        // last axis is contiguous
        plan.process_with_scratch(buf, &mut ws.scratch);
        for axis in 0..g.dim() - 1 {
            let stride = g.stride(axis);
            let block = n * stride;
            // each block is an n x stride matrix whose columns are the lines along `axis`
            for base in (0..total).step_by(block) {
                transpose(&buf[base..base + block], &mut ws.lines[base..base + block], n, stride);
            }
            plan.process_with_scratch(&mut ws.lines, &mut ws.scratch);
            for base in (0..total).step_by(block) {
                transpose(&ws.lines[base..base + block], &mut buf[base..base + block], stride, n);
            }
        }
    }
}

/// Transform of real data that keeps only the half spectrum `0 <= k_d <= n/2`
/// along the last axis, which roughly halves the work of [`Dft`].
///
/// Spectra are stored row-major with shape `n^{d-1} x (n/2 + 1)`.
#[derive(Clone)]
pub struct RealDft {
    grid: GridSpec,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealDft").field("grid", &self.grid).finish()
    }
}

impl RealDft {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.points_per_axis();
        let mut real = RealFftPlanner::new();
        let mut complex = FftPlanner::new();
        Self {
            grid,
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
            forward: complex.plan_fft_forward(n),
            inverse: complex.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Number of stored bins along the last axis.
    #[inline]
    pub fn row_len(&self) -> usize {
        self.grid.points_per_axis() / 2 + 1
    }

    pub fn half_len(&self) -> usize {
        self.grid.len() / self.grid.points_per_axis() * self.row_len()
    }

    /// Frequency vector of half-spectrum slot `i`.
    pub fn frequencies(&self, i: usize) -> [i64; 3] {
        let g = self.grid;
        let n = g.points_per_axis();
        let m = self.row_len();
        let mut k = [0i64; 3];
        k[g.dim() - 1] = (i % m) as i64;
        let mut rest = i / m;
        for ax in (0..g.dim() - 1).rev() {
            k[ax] = g.frequency(rest % n);
            rest /= n;
        }
        k
    }

    pub fn workspace(&self) -> RealDftWorkspace {
        let zero = Complex64::new(0.0, 0.0);
        let scratch_len = [
            self.r2c.get_scratch_len(),
            self.c2r.get_scratch_len(),
            self.forward.get_inplace_scratch_len(),
            self.inverse.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        RealDftWorkspace {
            scratch: vec![zero; scratch_len],
            row: vec![0.0; self.grid.points_per_axis()],
            lines: if self.grid.dim() > 1 {
                vec![zero; self.half_len()]
            } else {
                Vec::new()
            },
        }
    }

    /// Unnormalised forward sums of `input` into the half spectrum `out`.
    pub fn forward_unscaled_with(&self, input: &[f64], out: &mut [Complex64], ws: &mut RealDftWorkspace) {
        let n = self.grid.points_per_axis();
        let m = self.row_len();
        assert_eq!(input.len(), self.grid.len());
        assert_eq!(out.len(), self.half_len());
        for (src, dst) in input.chunks_exact(n).zip(out.chunks_exact_mut(m)) {
            ws.row.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut ws.row, dst, &mut ws.scratch)
                .expect("buffer lengths match the plan");
        }
        self.outer_axes(out, &self.forward, ws);
    }

    /// Evaluates a Hermitian half spectrum at every node; `spec` is clobbered.
    pub fn inverse_with(&self, spec: &mut [Complex64], output: &mut [f64], ws: &mut RealDftWorkspace) {
        let n = self.grid.points_per_axis();
        let m = self.row_len();
        assert_eq!(spec.len(), self.half_len());
        assert_eq!(output.len(), self.grid.len());
        self.outer_axes(spec, &self.inverse, ws);
        for (src, dst) in spec.chunks_exact_mut(m).zip(output.chunks_exact_mut(n)) {
            // the k_d = 0 and n/2 bins of a real row are real; drop rounding noise
            src[0].im = 0.0;
            src[m - 1].im = 0.0;
            self.c2r
                .process_with_scratch(src, dst, &mut ws.scratch)
                .expect("buffer lengths match the plan");
        }
    }

    fn outer_axes(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, ws: &mut RealDftWorkspace) {
        let g = self.grid;
        let n = g.points_per_axis();
        let total = buf.len();
        let mut stride = self.row_len();
        for _ in 0..g.dim() - 1 {
            let block = n * stride;
            for base in (0..total).step_by(block) {
                transpose(&buf[base..base + block], &mut ws.lines[base..base + block], n, stride);
            }
            plan.process_with_scratch(&mut ws.lines, &mut ws.scratch);
            for base in (0..total).step_by(block) {
                transpose(&ws.lines[base..base + block], &mut buf[base..base + block], stride, n);
            }
            stride *= n;
        }
    }
}

/// Per-call scratch space for [`RealDft`] transforms.
#[derive(Debug, Clone)]
pub struct RealDftWorkspace {
    scratch: Vec<Complex64>,
    row: Vec<f64>,
    lines: Vec<Complex64>,
}

/// Per-call scratch space for [`Dft`] transforms.
#[derive(Debug, Clone)]
pub struct DftWorkspace {
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

/// Writes the transpose of the `rows x cols` row-major matrix `src` into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    transpose::transpose(src, dst, cols, rows);
}

pub fn dft_forward(f: &Field) -> SpectralField {
    Dft::new(f.grid()).forward(f)
}

pub fn dft_inverse(s: &SpectralField) -> Field {
    Dft::new(s.grid()).inverse(s)
}
