//! Pressure moments: probe-subspace coordinates and weighted accumulators.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::field::{Dft, DftWorkspace, Field, GridSpec};
use crate::prior::{kl_modes, Wavevector};

/// Default probe order `M`: wavevectors with `|k_i| <= 8`.
pub const DEFAULT_PROBE_ORDER: usize = 8;

/// H¹-orthonormal coordinates of a mean-zero field on the Fourier modes
/// `0 < |k|_∞ <= M`.
///
/// Each conjugate pair `±k` contributes two real coordinates,
/// `sqrt(1+|k|²) (f, ĉ_k)` and `sqrt(1+|k|²) (f, ŝ_k)` with `ĉ_k, ŝ_k` the
/// L²-normalised cosine and sine. The Euclidean norm of the coordinate vector is
/// the H¹ norm of the projection, so operator norms of covariance matrices in
/// these coordinates are `L(H¹, H¹)` norms on the probe subspace. There are
/// `(2M+1)^d - 1` coordinates.
#[derive(Debug, Clone)]
pub struct ProbeBasis {
    grid: GridSpec,
    order: usize,
    modes: Vec<Wavevector>,
    flat: Vec<usize>,
    scale: Vec<f64>,
    dft: Dft,
}

impl ProbeBasis {
    pub fn new(grid: GridSpec, order: usize) -> Result<Self> {
        if order == 0 || 2 * order >= grid.points_per_axis() {
            return Err(CoreError::InvalidArgument(format!(
                "probe order {order} must satisfy 1 <= M < n/2 = {}",
                grid.points_per_axis() / 2
            )));
        }
        let modes = kl_modes(grid.dim(), order);
        let base = (2.0 * (2.0 * PI).powi(grid.dim() as i32)).sqrt();
        let n = grid.points_per_axis();
        let mut flat = Vec::with_capacity(modes.len());
        let mut scale = Vec::with_capacity(modes.len());
        for k in &modes {
            let idx: Vec<usize> = (0..grid.dim()).map(|ax| k[ax].rem_euclid(n as i64) as usize).collect();
            flat.push(grid.flat_index(&idx));
            let k2: i64 = k.iter().map(|c| c * c).sum();
            scale.push(base * (1.0 + k2 as f64).sqrt());
        }
        Ok(Self {
            grid,
            order,
            modes,
            flat,
            scale,
            dft: Dft::new(grid),
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Representatives `k` of the probe pairs, in coordinate order.
    pub fn modes(&self) -> &[Wavevector] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn coordinates(&self, f: &Field) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        self.coordinates_with(f, &mut buf, &mut self.dft.workspace(), &mut out);
        out
    }

    pub(crate) fn workspace(&self) -> (Vec<Complex64>, DftWorkspace) {
        (vec![Complex64::new(0.0, 0.0); self.grid.len()], self.dft.workspace())
    }

    pub(crate) fn coordinates_with(&self, f: &Field, buf: &mut [Complex64], ws: &mut DftWorkspace, out: &mut [f64]) {
        debug_assert_eq!(f.grid(), self.grid);
        for (c, &v) in buf.iter_mut().zip(f.values()) {
            *c = Complex64::new(v, 0.0);
        }
        self.dft.forward_with(buf, ws);
        for (i, (&j, &s)) in self.flat.iter().zip(&self.scale).enumerate() {
            // (f, ĉ_k) = (2π)^d sqrt(2/(2π)^d) Re c_k, (f, ŝ_k) = -(2π)^d sqrt(2/(2π)^d) Im c_k
            out[2 * i] = s * buf[j].re;
            out[2 * i + 1] = -s * buf[j].im;
        }
    }
}

/// `⟨a, b⟩_{H¹} = (2π)^d Σ_k (1 + |k|²) Re(a_k conj(b_k))`.
pub fn h1_inner(dft: &Dft, a: &Field, b: &Field) -> f64 {
    let sa = dft.forward(a);
    let sb = dft.forward(b);
    let vol = (2.0 * PI).powi(a.grid().dim() as i32);
    let sum: f64 = sa
        .coefficients()
        .iter()
        .zip(sb.coefficients())
        .enumerate()
        .map(|(i, (x, y))| {
            let k = sa.wavevector(i);
            let k2: i64 = k.iter().map(|c| c * c).sum();
            (1.0 + k2 as f64) * (x * y.conj()).re
        })
        .sum();
    vol * sum
}

/// Posterior pressure moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean_pressure: Field,
    /// Mean of the probe coordinates.
    pub probe_mean: Vec<f64>,
    /// Covariance of the probe coordinates, see [`ProbeBasis`].
    pub probe_covariance: DMatrix<f64>,
    pub sample_count: usize,
    pub ess_estimate: f64,
}

impl MomentSummary {
    /// Writes the probe covariance as headerless CSV, one matrix row per line.
    pub fn write_covariance_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for row in self.probe_covariance.row_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Weighted sums over one batch of samples, with weights stored relative to a
/// running maximum log-weight so that nothing overflows.
///
/// The tracked vector is `x`; the entries `x[offset .. offset + dim]` also
/// accumulate second moments (upper triangle only).
#[derive(Debug, Clone)]
pub(crate) struct BatchStats {
    log_scale: f64,
    sw: f64,
    sw2: f64,
    count: usize,
    sum: Vec<f64>,
    outer_offset: usize,
    outer_dim: usize,
    outer: Vec<f64>,
}

impl BatchStats {
    pub(crate) fn new(len: usize, outer_offset: usize, outer_dim: usize) -> Self {
        debug_assert!(outer_offset + outer_dim <= len);
        Self {
            log_scale: f64::NEG_INFINITY,
            sw: 0.0,
            sw2: 0.0,
            count: 0,
            sum: vec![0.0; len],
            outer_offset,
            outer_dim,
            outer: vec![0.0; outer_dim * outer_dim],
        }
    }

    fn rescale(&mut self, factor: f64) {
        self.sw *= factor;
        self.sw2 *= factor * factor;
        self.sum.iter_mut().for_each(|v| *v *= factor);
        self.outer.iter_mut().for_each(|v| *v *= factor);
    }

    /// Adds `x` with weight `exp(log_w)`. A weight of zero (`log_w = -∞`) only
    /// counts the sample.
    pub(crate) fn add(&mut self, log_w: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.sum.len());
        debug_assert!(!log_w.is_nan());
        self.count += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.log_scale {
            if self.sw > 0.0 {
                self.rescale((self.log_scale - log_w).exp());
            }
            self.log_scale = log_w;
        }
        let w = (log_w - self.log_scale).exp();
        self.sw += w;
        self.sw2 += w * w;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += w * v;
        }
        let q = &x[self.outer_offset..self.outer_offset + self.outer_dim];
        let d = self.outer_dim;
        for i in 0..d {
            let wi = w * q[i];
            for (o, qj) in self.outer[i * d + i..(i + 1) * d].iter_mut().zip(&q[i..]) {
                *o += wi * qj;
            }
        }
    }

    /// Combines batches in the given order.
    pub(crate) fn merged(batches: &[BatchStats]) -> BatchStats {
        let first = &batches[0];
        let mut out = BatchStats::new(first.sum.len(), first.outer_offset, first.outer_dim);
        let top = batches.iter().fold(f64::NEG_INFINITY, |m, b| m.max(b.log_scale));
        out.log_scale = top;
        for b in batches {
            out.count += b.count;
            if b.sw == 0.0 {
                continue;
            }
            let f = (b.log_scale - top).exp();
            out.sw += f * b.sw;
            out.sw2 += f * f * b.sw2;
            for (o, v) in out.sum.iter_mut().zip(&b.sum) {
                *o += f * v;
            }
            for (o, v) in out.outer.iter_mut().zip(&b.outer) {
                *o += f * v;
            }
        }
        out
    }

    /// `log Σ w`.
    pub(crate) fn log_weight_sum(&self) -> f64 {
        self.log_scale + self.sw.ln()
    }

    /// Each batch's share of the total weight.
    pub(crate) fn weight_fractions(batches: &[BatchStats]) -> Vec<f64> {
        let total = Self::merged(batches).log_weight_sum();
        batches
            .iter()
            .map(|b| if b.sw > 0.0 { (b.log_weight_sum() - total).exp() } else { 0.0 })
            .collect()
    }

    /// `(Σ w)² / Σ w²`.
    pub(crate) fn ess(&self) -> f64 {
        if self.sw2 > 0.0 {
            self.sw * self.sw / self.sw2
        } else {
            0.0
        }
    }

    pub(crate) fn has_weight(&self) -> bool {
        self.sw > 0.0
    }

    pub(crate) fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|v| v / self.sw).collect()
    }

    /// Weighted covariance of the second-moment block.
    pub(crate) fn covariance(&self) -> DMatrix<f64> {
        let d = self.outer_dim;
        let mean: Vec<f64> = self.sum[self.outer_offset..self.outer_offset + d]
            .iter()
            .map(|v| v / self.sw)
            .collect();
        let mut c = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.outer[i * d + j] / self.sw - mean[i] * mean[j];
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Summary with the pressure in `x[0..grid.len()]` and probe coordinates in
    /// the second-moment block.
    pub(crate) fn summary(&self, grid: GridSpec, ess_estimate: f64) -> MomentSummary {
        let mean = self.mean();
        MomentSummary {
            mean_pressure: Field::from_raw(grid, mean[..grid.len()].to_vec()),
            probe_mean: mean[self.outer_offset..self.outer_offset + self.outer_dim].to_vec(),
            probe_covariance: self.covariance(),
            sample_count: self.count,
            ess_estimate,
        }
    }
}

/// Delta-method standard error from per-batch linearised contributions
/// `z_b`: `sqrt(B/(B-1) Σ z_b²)`.
pub(crate) fn batch_standard_error(z: &[f64]) -> f64 {
    let b = z.len();
    if b < 2 {
        return f64::NAN;
    }
    (b as f64 / (b - 1) as f64 * z.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn probe_dimension() {
        let g = GridSpec::new(2, 32).unwrap();
        assert_eq!(ProbeBasis::new(g, 8).unwrap().dim(), 17 * 17 - 1);
        let g1 = GridSpec::new(1, 16).unwrap();
        assert_eq!(ProbeBasis::new(g1, 3).unwrap().dim(), 6);
        assert!(ProbeBasis::new(g1, 8).is_err());
        assert!(ProbeBasis::new(g1, 0).is_err());
    }

    #[test]
    fn probe_coordinates_of_single_modes() {
        let g = GridSpec::new(2, 16).unwrap();
        let probe = ProbeBasis::new(g, 3).unwrap();
        let norm = (2.0 / (2.0 * PI).powi(2)).sqrt();
        // f = ĉ_{(1,2)} has coordinate sqrt(1+5) on the cosine slot only
        let f = Field::from_fn(g, |x| norm * (x[0] + 2.0 * x[1]).cos());
        let q = probe.coordinates(&f);
        let i = probe.modes().iter().position(|k| k[..2] == [1, 2]).unwrap();
        for (j, v) in q.iter().enumerate() {
            let expected = if j == 2 * i { 6f64.sqrt() } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "slot {j}: {v}");
        }
        let s = Field::from_fn(g, |x| norm * (x[0] - x[1]).sin());
        let q = probe.coordinates(&s);
        let i = probe.modes().iter().position(|k| k[..2] == [1, -1]).unwrap();
        assert!((q[2 * i + 1] - 3f64.sqrt()).abs() < 1e-12);
        assert!(q[2 * i].abs() < 1e-12);
    }

    #[test]
    fn probe_norm_is_h1_norm_of_band_limited_field() {
        let g = GridSpec::new(2, 16).unwrap();
        let probe = ProbeBasis::new(g, 3).unwrap();
        let f = Field::from_fn(g, |x| x[0].cos() - 0.5 * (2.0 * x[0] + 3.0 * x[1]).sin() + 0.2 * x[1].sin());
        let q = probe.coordinates(&f);
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((qn - f.h1_norm()).abs() < 1e-10 * f.h1_norm());
    }

    #[test]
    fn h1_inner_matches_norm() {
        let g = GridSpec::new(1, 32).unwrap();
        let dft = Dft::new(g);
        let f = Field::from_fn(g, |x| x[0].cos());
        assert!((h1_inner(&dft, &f, &f) - 2.0 * PI).abs() < 1e-10);
        let s = Field::from_fn(g, |x| x[0].sin());
        assert!(h1_inner(&dft, &f, &s).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_give_sample_moments() {
        let mut rng = rng_from_seed(4);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let mut st = BatchStats::new(4, 1, 3);
        for x in &xs {
            st.add(0.0, x);
        }
        let mean = st.mean();
        for j in 0..4 {
            let m = xs.iter().map(|x| x[j]).sum::<f64>() / 200.0;
            assert!((mean[j] - m).abs() < 1e-14);
        }
        let c = st.covariance();
        let c12 = xs.iter().map(|x| (x[1] - mean[1]) * (x[2] - mean[2])).sum::<f64>() / 200.0;
        assert!((c[(0, 1)] - c12).abs() < 1e-14);
        assert!((st.ess() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn huge_log_weights_do_not_overflow() {
        let mut st = BatchStats::new(1, 0, 1);
        st.add(-1000.0, &[1.0]);
        st.add(-999.0, &[2.0]);
        st.add(f64::NEG_INFINITY, &[50.0]);
        let e = 1f64.exp();
        let expect = (1.0 + 2.0 * e) / (1.0 + e);
        assert!((st.mean()[0] - expect).abs() < 1e-14);
        assert_eq!(st.count, 3);
        let mut big = BatchStats::new(1, 0, 1);
        big.add(800.0, &[1.0]);
        big.add(801.0, &[3.0]);
        assert!((big.mean()[0] - (1.0 + 3.0 * e) / (1.0 + e)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            lw in proptest::collection::vec(-30.0f64..30.0, 2..60),
            split in 1usize..59,
        ) {
            let xs: Vec<[f64; 3]> = lw.iter().enumerate().map(|(i, w)| [i as f64, w.sin(), (i as f64).cos()]).collect();
            let split = split.min(lw.len() - 1);
            let mut whole = BatchStats::new(3, 1, 2);
            let mut a = BatchStats::new(3, 1, 2);
            let mut b = BatchStats::new(3, 1, 2);
            for (i, (w, x)) in lw.iter().zip(&xs).enumerate() {
                whole.add(*w, x);
                if i < split { a.add(*w, x) } else { b.add(*w, x) }
            }
            let m = BatchStats::merged(&[a, b]);
            for (u, v) in m.mean().iter().zip(whole.mean()) {
                prop_assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
            }
            let (cm, cw) = (m.covariance(), whole.covariance());
            prop_assert!((cm - &cw).norm() < 1e-9 * (1.0 + cw.norm()));
            prop_assert!((m.ess() - whole.ess()).abs() < 1e-9 * whole.ess());
        }

        #[test]
        fn covariance_is_psd(lw in proptest::collection::vec(-5.0f64..5.0, 3..40)) {
            let mut st = BatchStats::new(3, 0, 3);
            for (i, w) in lw.iter().enumerate() {
                let t = i as f64;
                st.add(*w, &[t.sin(), (2.0 * t).cos(), t.sin() + 0.5 * (3.0 * t).cos()]);
            }
            let c = st.covariance();
            prop_assert!((&c - c.transpose()).norm() == 0.0);
            let eig = SymmetricEigen::new(c);
            prop_assert!(eig.eigenvalues.iter().all(|&l| l > -1e-8));
        }
    }
}
