//! Gaussian prior `N(0, (-Δ)^{-s})` on mean-zero periodic fields.
//!
//! A draw is represented by its Karhunen-Loève expansion in the real Fourier
//! basis. For every wavevector `k` in the half cube (`|k_i| <= N`, first
//! non-zero component positive) the sample carries two standard normal
//! amplitudes `(a_k, b_k)` and
//!
//! ```text
//! u(x) = Σ_k σ_k (a_k ĉ_k(x) + b_k ŝ_k(x)),   σ_k² = (|k|²)^{-s},
//! ĉ_k = sqrt(2/(2π)^d) cos(k·x),             ŝ_k = sqrt(2/(2π)^d) sin(k·x).
//! ```
//!
//! Amplitudes are drawn mode by mode in lexicographic order of `k`, `a` before `b`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::field::{Dft, Field, GridSpec, SpectralField};
use crate::rng::rng_from_seed;

pub type Wavevector = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    dim: usize,
    s: f64,
    truncation: usize,
    seed: u64,
}

impl PriorSpec {
    pub fn new(dim: usize, s: f64, truncation: usize, seed: u64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(CoreError::InvalidArgument(format!("dimension {dim} not in 1..=3")));
        }
        if !(s > dim as f64 / 2.0) || !s.is_finite() {
            return Err(CoreError::InvalidArgument(format!(
                "smoothness s = {s} must exceed d/2 = {}",
                dim as f64 / 2.0
            )));
        }
        if truncation == 0 {
            return Err(CoreError::InvalidArgument("truncation level must be >= 1".into()));
        }
        Ok(Self {
            dim,
            s,
            truncation,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> f64 {
        self.s
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_truncation(&self, truncation: usize) -> Result<Self> {
        Self::new(self.dim, self.s, truncation, self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    fn check_grid(&self, grid: GridSpec) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(CoreError::InvalidArgument(format!(
                "prior dimension {} does not match grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        if 2 * self.truncation >= grid.points_per_axis() {
            return Err(CoreError::InvalidArgument(format!(
                "truncation level {} must be below n/2 = {}",
                self.truncation,
                grid.points_per_axis() / 2
            )));
        }
        Ok(())
    }
}

/// Prior variance `(|k|²)^{-s}` of the coefficient of mode `k`.
pub fn kl_variance(k: &[i64], s: f64) -> Result<f64> {
    let k2: i64 = k.iter().map(|c| c * c).sum();
    if k2 == 0 {
        return Err(CoreError::InvalidArgument("zero mode has no prior variance".into()));
    }
    if !(s > 0.0) {
        return Err(CoreError::InvalidArgument(format!("s = {s} must be positive")));
    }
    Ok((k2 as f64).powf(-s))
}

/// Representatives of the conjugate pairs in the cube `|k_i| <= N`, `k != 0`,
/// in lexicographic order.
pub fn kl_modes(dim: usize, truncation: usize) -> Vec<Wavevector> {
    let n = truncation as i64;
    let mut modes = Vec::new();
    let mut k = [0i64; 3];
    fn rec(axis: usize, dim: usize, n: i64, k: &mut Wavevector, out: &mut Vec<Wavevector>) {
        if axis == dim {
            if let Some(first) = k[..dim].iter().find(|&&c| c != 0) {
                if *first > 0 {
                    out.push(*k);
                }
            }
            return;
        }
        for c in -n..=n {
            k[axis] = c;
            rec(axis + 1, dim, n, k, out);
        }
        k[axis] = 0;
    }
    rec(0, dim, n, &mut k, &mut modes);
    modes
}

#[inline]
fn in_cube(k: &Wavevector, truncation: usize) -> bool {
    k.iter().all(|c| c.unsigned_abs() as usize <= truncation)
}

/// Real Karhunen-Loève coefficients of a (truncated) prior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KLSample {
    spec: PriorSpec,
    grid: GridSpec,
    modes: Arc<Vec<Wavevector>>,
    std_devs: Arc<Vec<f64>>,
    amplitudes: Vec<[f64; 2]>,
}

impl KLSample {
    /// All-zero sample (the prior mean).
    pub fn zeros(spec: PriorSpec, grid: GridSpec) -> Result<Self> {
        spec.check_grid(grid)?;
        let modes = kl_modes(spec.dim, spec.truncation);
        let std_devs = modes
            .iter()
            .map(|k| kl_variance(k, spec.s).map(f64::sqrt))
            .collect::<Result<Vec<_>>>()?;
        let amplitudes = vec![[0.0; 2]; modes.len()];
        Ok(Self {
            spec,
            grid,
            modes: Arc::new(modes),
            std_devs: Arc::new(std_devs),
            amplitudes,
        })
    }

    pub fn draw<R: Rng + ?Sized>(spec: PriorSpec, grid: GridSpec, rng: &mut R) -> Result<Self> {
        let mut out = Self::zeros(spec, grid)?;
        out.redraw(rng);
        Ok(out)
    }

    /// Replaces every amplitude with a fresh standard normal, in mode order.
    pub fn redraw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for amp in &mut self.amplitudes {
            amp[0] = rng.sample(StandardNormal);
            amp[1] = rng.sample(StandardNormal);
        }
    }

    /// Builds a sample from explicit amplitudes, listed in [`kl_modes`] order.
    pub fn from_amplitudes(spec: PriorSpec, grid: GridSpec, amplitudes: Vec<[f64; 2]>) -> Result<Self> {
        let mut out = Self::zeros(spec, grid)?;
        if amplitudes.len() != out.amplitudes.len() {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} amplitude pairs, got {}",
                out.amplitudes.len(),
                amplitudes.len()
            )));
        }
        if amplitudes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("non-finite amplitude".into()));
        }
        out.amplitudes = amplitudes;
        Ok(out)
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn modes(&self) -> &[Wavevector] {
        &self.modes
    }

    /// Standard normal amplitudes `(a_k, b_k)`, in mode order.
    pub fn amplitudes(&self) -> &[[f64; 2]] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.amplitudes
    }

    /// Number of real coefficients, twice the number of modes.
    pub fn dimension(&self) -> usize {
        2 * self.amplitudes.len()
    }

    /// Projections `(u, ĉ_k)`, `(u, ŝ_k)` of mode `i`, i.e. `σ_k (a_k, b_k)`.
    pub fn coefficient(&self, i: usize) -> [f64; 2] {
        let sd = self.std_devs[i];
        [sd * self.amplitudes[i][0], sd * self.amplitudes[i][1]]
    }

    /// `sqrt(1 - β²) self + β w`, mode by mode.
    pub fn crank_nicolson(&self, w: &KLSample, beta: f64) -> KLSample {
        debug_assert_eq!(self.amplitudes.len(), w.amplitudes.len());
        let keep = (1.0 - beta * beta).sqrt();
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(&w.amplitudes)
            .map(|(u, w)| [keep * u[0] + beta * w[0], keep * u[1] + beta * w[1]])
            .collect();
        KLSample {
            amplitudes,
            ..self.clone_shell()
        }
    }

    fn clone_shell(&self) -> KLSample {
        KLSample {
            spec: self.spec,
            grid: self.grid,
            modes: Arc::clone(&self.modes),
            std_devs: Arc::clone(&self.std_devs),
            amplitudes: Vec::new(),
        }
    }

    /// The same draw restricted to the cube `|k_i| <= truncation`.
    pub fn truncated(&self, truncation: usize) -> Result<KLSample> {
        if truncation > self.spec.truncation {
            return Err(CoreError::InvalidArgument(format!(
                "cannot raise truncation from {} to {truncation}",
                self.spec.truncation
            )));
        }
        let mut out = KLSample::zeros(self.spec.with_truncation(truncation)?, self.grid)?;
        // both mode lists are lexicographic, so a single merge pass suffices
        let mut j = 0;
        for (i, k) in self.modes.iter().enumerate() {
            if in_cube(k, truncation) {
                debug_assert_eq!(&out.modes[j], k);
                out.amplitudes[j] = self.amplitudes[i];
                j += 1;
            }
        }
        debug_assert_eq!(j, out.amplitudes.len());
        Ok(out)
    }

    /// Complex Fourier coefficients `c_k` of the realised field.
    pub fn spectrum(&self) -> SpectralField {
        let mut s = SpectralField::zeros(self.grid);
        let norm = (2.0 / (2.0 * std::f64::consts::PI).powi(self.grid.dim() as i32)).sqrt();
        for (i, k) in self.modes.iter().enumerate() {
            let [a, b] = self.coefficient(i);
            let c = Complex64::new(a, -b) * (0.5 * norm);
            s.set_coefficient(k, c);
            s.set_coefficient(&[-k[0], -k[1], -k[2]], c.conj());
        }
        s
    }

    pub fn realize(&self, dft: &Dft) -> Field {
        debug_assert_eq!(dft.grid(), self.grid);
        let mut buf = self.spectrum().coefficients().to_vec();
        dft.inverse_in_place(&mut buf);
        Field::from_raw(self.grid, buf.iter().map(|c| c.re).collect())
    }

    pub fn to_field(&self) -> Field {
        self.realize(&Dft::new(self.grid))
    }

    /// CSV with header `k_1,..,k_d,a,b`, one row per mode.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.grid.dim();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=d).map(|i| format!("k_{i}")).collect();
        header.push("a".into());
        header.push("b".into());
        wtr.write_record(&header).map_err(csv_err)?;
        for (k, amp) in self.modes.iter().zip(&self.amplitudes) {
            let mut row: Vec<String> = k[..d].iter().map(|c| c.to_string()).collect();
            row.push(amp[0].to_string());
            row.push(amp[1].to_string());
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| csv_err(e.into()))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| match e {
            CoreError::Csv { message, .. } => CoreError::Csv {
                path: path.into(),
                message,
            },
            other => other,
        })
    }

    /// Reads a sample written by [`KLSample::write_csv`]; modes must form the
    /// full cube of `spec.truncation()`.
    pub fn read_csv_file(path: impl AsRef<Path>, spec: PriorSpec, grid: GridSpec) -> Result<KLSample> {
        let path = path.as_ref();
        let bad = |message: String| CoreError::Csv {
            path: path.into(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut out = KLSample::zeros(spec, grid)?;
        let d = grid.dim();
        let mut seen = 0usize;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != d + 2 {
                return Err(bad(format!("row {}: expected {} columns", row + 1, d + 2)));
            }
            let mut k = [0i64; 3];
            for ax in 0..d {
                k[ax] = rec[ax]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("row {}: bad wavevector component", row + 1)))?;
            }
            let a: f64 = rec[d].trim().parse().map_err(|_| bad(format!("row {}: bad a", row + 1)))?;
            let b: f64 = rec[d + 1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: bad b", row + 1)))?;
            let i = out
                .modes
                .iter()
                .position(|m| *m == k)
                .ok_or_else(|| bad(format!("row {}: wavevector {:?} outside the mode set", row + 1, &k[..d])))?;
            out.amplitudes[i] = [a, b];
            seen += 1;
        }
        if seen != out.amplitudes.len() {
            return Err(bad(format!("expected {} modes, found {seen}", out.amplitudes.len())));
        }
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Csv {
        path: Default::default(),
        message: e.to_string(),
    }
}

/// Draws a prior sample and its realised field.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, grid: GridSpec, rng: &mut R) -> Result<(KLSample, Field)> {
    let sample = KLSample::draw(*spec, grid, rng)?;
    let field = sample.to_field();
    Ok((sample, field))
}

/// [`sample_prior`] with a generator seeded from `spec.seed()`.
pub fn sample_prior_seeded(spec: &PriorSpec, grid: GridSpec) -> Result<(KLSample, Field)> {
    sample_prior(spec, grid, &mut rng_from_seed(spec.seed()))
}

/// Orthogonal projection onto `span{e^{ik·x} : |k_i| <= N}` (the zero mode is kept).
pub fn truncate(f: &Field, truncation: usize) -> Result<Field> {
    truncate_with(&Dft::new(f.grid()), f, truncation)
}

pub fn truncate_with(dft: &Dft, f: &Field, truncation: usize) -> Result<Field> {
    let grid = f.grid();
    if 2 * truncation >= grid.points_per_axis() {
        return Err(CoreError::InvalidArgument(format!(
            "truncation level {truncation} must be below n/2 = {}",
            grid.points_per_axis() / 2
        )));
    }
    let mut s = dft.forward(f);
    for i in 0..grid.len() {
        let k = s.wavevector(i);
        if !in_cube(&k, truncation) {
            s.coefficients_mut()[i] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(dft.inverse(&s))
}

/// `E‖u^N‖²_{L²} = Σ_{0 < |k|, |k_i| <= N} (|k|²)^{-s}`.
pub fn expected_l2_energy(spec: &PriorSpec, truncation: usize) -> f64 {
    kl_modes(spec.dim, truncation)
        .iter()
        .map(|k| 2.0 * kl_variance(k, spec.s).unwrap())
        .sum()
}
